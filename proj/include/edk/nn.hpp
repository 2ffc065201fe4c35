#ifndef EDK_NN_HPP
#define EDK_NN_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "edk/autodiff.hpp"
#include "edk/rng.hpp"

namespace edk::nn {

using ad::Matrix;
using ad::Offsets;
using ad::Tape;
using ad::Var;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  // Adam state
  Matrix m;
  Matrix v;
};

// Owns named parameters. Pointers into the store stay valid for its lifetime.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, int rows, int cols);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  void zero_grads();
  size_t scalar_count() const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  // Copies of the current values, in insertion order (checkpointing).
  std::vector<std::pair<std::string, Matrix>> snapshot() const;
  // Restores values from a snapshot; names and shapes must match exactly.
  void restore(const std::vector<std::pair<std::string, Matrix>>& snap);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> by_name_;
};

Var use(Tape& tape, Parameter& p);

// Adam with torch-style L2 weight decay folded into the gradient.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double weight_decay = 0.0, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
        eps_(eps) {}

  void step(ParameterStore& store);
  void reset() { t_ = 0; }
  double lr() const { return lr_; }

 private:
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
};

// Glorot-uniform fill.
void glorot_init(Matrix& w, Rng& rng);
void normal_init(Matrix& w, Rng& rng, double stddev);

enum class Activation { None, Relu, Tanh };

struct Linear {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;  // may be null (no-bias projections)

  static Linear create(ParameterStore& store, const std::string& prefix,
                       int in, int out, Rng& rng, bool with_bias = true);
  Var operator()(Tape& tape, Var x) const;
};

// Dense stack: Linear -> act -> ... -> Linear (no activation after last).
struct Mlp {
  std::vector<Linear> layers;
  Activation act = Activation::Relu;

  static Mlp create(ParameterStore& store, const std::string& prefix,
                    const std::vector<int>& widths, Rng& rng,
                    Activation act = Activation::Relu);
  Var operator()(Tape& tape, Var x) const;
};

struct LayerNormLayer {
  Parameter* gain = nullptr;
  Parameter* bias = nullptr;

  static LayerNormLayer create(ParameterStore& store,
                               const std::string& prefix, int width);
  Var operator()(Tape& tape, Var x) const;
};

// Multi-head self-attention over row segments; width must divide by heads.
Var multihead_attention(Tape& tape, Var x, const Linear& wq, const Linear& wk,
                        const Linear& wv, const Linear& wo, int heads,
                        Offsets off);

// Pre-LN transformer block: x + MHA(LN(x)), then x + FF(LN(x)), FF = 2x wide.
struct TransformerBlock {
  LayerNormLayer ln1, ln2;
  Linear wq, wk, wv, wo;
  Linear ff1, ff2;
  int heads = 1;

  static TransformerBlock create(ParameterStore& store,
                                 const std::string& prefix, int width,
                                 int heads, Rng& rng);
  Var operator()(Tape& tape, Var x, Offsets off) const;
};

// Inverted-dropout mask as a constant: entries 0 or 1/(1-rate).
Matrix dropout_mask(int rows, int cols, double rate, Rng& rng);

}  // namespace edk::nn

#endif  // EDK_NN_HPP
