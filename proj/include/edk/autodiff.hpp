#ifndef EDK_AUTODIFF_HPP
#define EDK_AUTODIFF_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace edk::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Lightweight handle to a node on a tape. Valid only while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Row-segment layout: rows [offsets[s], offsets[s+1]) form segment s.
using Offsets = std::shared_ptr<const std::vector<int>>;

Offsets make_offsets(std::vector<int> boundaries);
// S segments of uniform length L.
Offsets uniform_offsets(int segments, int length);

// Reverse-mode tape over dense double matrices. One tape per training step;
// graphs are rebuilt every step. Single-threaded by construction.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf with owned value. Gradients are tracked (readable via grad()).
  Var constant(Matrix v);
  // Leaf bound to external parameter storage; backward() accumulates the
  // gradient into *grad_sink.
  Var leaf(const Matrix* value, Matrix* grad_sink);

  // Elementwise / broadcast arithmetic.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var add_scalar(Var a, double k);
  Var add_row(Var a, Var row);     // N x C  +  1 x C
  Var scale_rows(Var a, Var s);    // row i of a scaled by s(i, 0)

  // Nonlinearities.
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softplus(Var a);
  Var clip(Var a, double lo, double hi);

  // Linear algebra.
  Var matmul(Var a, Var b);

  // Structural ops.
  Var gather_rows(Var a, std::vector<int> idx);
  // Picks entries (row, col) into an N x 1 column.
  Var gather_entries(Var a, std::vector<std::pair<int, int>> idx);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  // Row-major reinterpretation to rows x cols (element count preserved).
  Var reshape(Var a, int rows, int cols);
  Var slice_cols(Var a, int from, int n);
  // Repeats each block of block_rows consecutive rows `times` times.
  Var repeat_blocks(Var a, int block_rows, int times);

  // Reductions.
  Var row_sum(Var a);
  Var row_mean(Var a);
  Var row_logsumexp(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var segment_sum(Var a, Offsets off);
  Var segment_mean(Var a, Offsets off);

  // Softmax over each segment of an N x 1 column.
  Var segment_softmax(Var a, Offsets off);
  // Scaled dot-product attention within each segment:
  //   out_s = softmax(Q_s K_s^T * scale) V_s.
  Var attention(Var q, Var k, Var v, Offsets off, double scale);
  // Per-segment a_s b_s^T where each segment has seg_rows rows.
  Var segment_matmul_nt(Var a, Var b, int seg_rows);

  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

  // Compressed-interaction layer: for each instance (hp rows in xprev,
  // f rows in x0) and embedding dim t, out[:, t] = W * vec(xprev[:,t] x0[:,t]^T).
  Var cin_layer(Var xprev, Var x0, Var w, int hp, int f);

  // Mean of softplus(z) - y .* z over rows; numerically stable BCE.
  Var bce_with_logits_mean(Var logits, std::vector<double> labels);

  const Matrix& val(Var v) const;
  // Gradient of the last backward() target w.r.t. node v (zero if unused).
  Matrix grad(Var v) const;

  void backward(Var scalar_loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool grad_ready = false;
    const Matrix* ext_value = nullptr;
    Matrix* ext_grad = nullptr;
    std::function<void()> back;  // may be empty for leaves
  };

  int push(Matrix value);
  const Matrix& value_of(int id) const;
  Matrix& grad_of(int id);
  bool has_grad(int id) const { return nodes_[id].grad_ready; }

  Var unary(Var a, Matrix out, std::function<void(const Matrix&, Matrix&)> back);

  std::vector<Node> nodes_;
};

}  // namespace edk::ad

#endif  // EDK_AUTODIFF_HPP
