#include "edk/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace edk::ad {

Offsets make_offsets(std::vector<int> boundaries) {
  return std::make_shared<const std::vector<int>>(std::move(boundaries));
}

Offsets uniform_offsets(int segments, int length) {
  std::vector<int> off(segments + 1);
  for (int s = 0; s <= segments; ++s) off[s] = s * length;
  return make_offsets(std::move(off));
}

Tape::Tape() { nodes_.reserve(1024); }

int Tape::push(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

const Matrix& Tape::value_of(int id) const {
  const Node& n = nodes_[id];
  return n.ext_value ? *n.ext_value : n.value;
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  if (!n.grad_ready) {
    const Matrix& v = value_of(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

const Matrix& Tape::val(Var v) const {
  assert(v.tape == this);
  return value_of(v.id);
}

Matrix Tape::grad(Var v) const {
  assert(v.tape == this);
  const Node& n = nodes_[v.id];
  if (n.grad_ready) return n.grad;
  const Matrix& val = value_of(v.id);
  return Matrix::Zero(val.rows(), val.cols());
}

Var Tape::constant(Matrix v) { return {this, push(std::move(v))}; }

Var Tape::leaf(const Matrix* value, Matrix* grad_sink) {
  Node n;
  n.ext_value = value;
  n.ext_grad = grad_sink;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::unary(Var a, Matrix out,
                std::function<void(const Matrix&, Matrix&)> back) {
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, back = std::move(back)]() {
    back(nodes_[id].grad, grad_of(ai));
  };
  return {this, id};
}

static void check_same_shape(const Matrix& a, const Matrix& b,
                             const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  check_same_shape(av, bv, "add");
  int id = push(av + bv);
  int ai = a.id, bi = b.id;
  nodes_[id].back = [this, id, ai, bi]() {
    grad_of(ai) += nodes_[id].grad;
    grad_of(bi) += nodes_[id].grad;
  };
  return {this, id};
}

Var Tape::sub(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  check_same_shape(av, bv, "sub");
  int id = push(av - bv);
  int ai = a.id, bi = b.id;
  nodes_[id].back = [this, id, ai, bi]() {
    grad_of(ai) += nodes_[id].grad;
    grad_of(bi) -= nodes_[id].grad;
  };
  return {this, id};
}

Var Tape::mul(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  check_same_shape(av, bv, "mul");
  int id = push(av.cwiseProduct(bv));
  int ai = a.id, bi = b.id;
  nodes_[id].back = [this, id, ai, bi]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai) += g.cwiseProduct(value_of(bi));
    grad_of(bi) += g.cwiseProduct(value_of(ai));
  };
  return {this, id};
}

Var Tape::scale(Var a, double k) {
  return unary(a, value_of(a.id) * k,
               [k](const Matrix& g, Matrix& da) { da += g * k; });
}

Var Tape::add_scalar(Var a, double k) {
  return unary(a, value_of(a.id).array() + k,
               [](const Matrix& g, Matrix& da) { da += g; });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value_of(a.id);
  const Matrix& rv = value_of(row.id);
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  int id = push(av.rowwise() + rv.row(0));
  int ai = a.id, ri = row.id;
  nodes_[id].back = [this, id, ai, ri]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai) += g;
    grad_of(ri).row(0) += g.colwise().sum();
  };
  return {this, id};
}

Var Tape::scale_rows(Var a, Var s) {
  const Matrix& av = value_of(a.id);
  const Matrix& sv = value_of(s.id);
  if (sv.cols() != 1 || sv.rows() != av.rows())
    throw std::invalid_argument("scale_rows: s must be rows(a) x 1");
  int id = push(sv.col(0).asDiagonal() * av);
  int ai = a.id, si = s.id;
  nodes_[id].back = [this, id, ai, si]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& av2 = value_of(ai);
    const Matrix& sv2 = value_of(si);
    grad_of(ai) += sv2.col(0).asDiagonal() * g;
    grad_of(si).col(0) += g.cwiseProduct(av2).rowwise().sum();
  };
  return {this, id};
}

Var Tape::sigmoid(Var a) {
  Matrix out = value_of(a.id).unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
  });
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    const Matrix& y = nodes_[id].value;
    grad_of(ai) +=
        nodes_[id].grad.cwiseProduct(y.cwiseProduct(Matrix::Ones(y.rows(), y.cols()) - y));
  };
  return {this, id};
}

Var Tape::tanh(Var a) {
  Matrix out = value_of(a.id).array().tanh();
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    const Matrix& y = nodes_[id].value;
    grad_of(ai) += nodes_[id].grad.cwiseProduct(
        (1.0 - y.array().square()).matrix());
  };
  return {this, id};
}

Var Tape::relu(Var a) {
  Matrix out = value_of(a.id).cwiseMax(0.0);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    const Matrix& x = value_of(ai);
    grad_of(ai) += nodes_[id].grad.cwiseProduct(
        (x.array() > 0.0).cast<double>().matrix());
  };
  return {this, id};
}

Var Tape::exp(Var a) {
  Matrix out = value_of(a.id).array().exp();
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    grad_of(ai) += nodes_[id].grad.cwiseProduct(nodes_[id].value);
  };
  return {this, id};
}

Var Tape::log(Var a) {
  Matrix out = value_of(a.id).array().log();
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    grad_of(ai) += nodes_[id].grad.cwiseQuotient(value_of(ai));
  };
  return {this, id};
}

Var Tape::softplus(Var a) {
  Matrix out = value_of(a.id).unaryExpr([](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    const Matrix& x = value_of(ai);
    Matrix sig = x.unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                    : std::exp(v) / (1.0 + std::exp(v));
    });
    grad_of(ai) += nodes_[id].grad.cwiseProduct(sig);
  };
  return {this, id};
}

Var Tape::clip(Var a, double lo, double hi) {
  Matrix out = value_of(a.id).cwiseMax(lo).cwiseMin(hi);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, lo, hi]() {
    const Matrix& x = value_of(ai);
    Matrix inside = ((x.array() > lo) && (x.array() < hi)).cast<double>();
    grad_of(ai) += nodes_[id].grad.cwiseProduct(inside.matrix());
  };
  return {this, id};
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  if (av.cols() != bv.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  int id = push(av * bv);
  int ai = a.id, bi = b.id;
  nodes_[id].back = [this, id, ai, bi]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai).noalias() += g * value_of(bi).transpose();
    grad_of(bi).noalias() += value_of(ai).transpose() * g;
  };
  return {this, id};
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Matrix& av = value_of(a.id);
  Matrix out(static_cast<int>(idx.size()), av.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(i) = av.row(idx[i]);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, idx = std::move(idx)]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    for (size_t i = 0; i < idx.size(); ++i) da.row(idx[i]) += g.row(i);
  };
  return {this, id};
}

Var Tape::gather_entries(Var a, std::vector<std::pair<int, int>> idx) {
  const Matrix& av = value_of(a.id);
  Matrix out(static_cast<int>(idx.size()), 1);
  for (size_t i = 0; i < idx.size(); ++i)
    out(i, 0) = av(idx[i].first, idx[i].second);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, idx = std::move(idx)]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    for (size_t i = 0; i < idx.size(); ++i)
      da(idx[i].first, idx[i].second) += g(i, 0);
  };
  return {this, id};
}

Var Tape::concat_cols(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  if (av.rows() != bv.rows())
    throw std::invalid_argument("concat_cols: row counts disagree");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out.leftCols(av.cols()) = av;
  out.rightCols(bv.cols()) = bv;
  int id = push(std::move(out));
  int ai = a.id, bi = b.id;
  int ac = static_cast<int>(av.cols()), bc = static_cast<int>(bv.cols());
  nodes_[id].back = [this, id, ai, bi, ac, bc]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai) += g.leftCols(ac);
    grad_of(bi) += g.rightCols(bc);
  };
  return {this, id};
}

Var Tape::concat_rows(Var a, Var b) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  if (av.cols() != bv.cols())
    throw std::invalid_argument("concat_rows: column counts disagree");
  Matrix out(av.rows() + bv.rows(), av.cols());
  out.topRows(av.rows()) = av;
  out.bottomRows(bv.rows()) = bv;
  int id = push(std::move(out));
  int ai = a.id, bi = b.id;
  int ar = static_cast<int>(av.rows()), br = static_cast<int>(bv.rows());
  nodes_[id].back = [this, id, ai, bi, ar, br]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai) += g.topRows(ar);
    grad_of(bi) += g.bottomRows(br);
  };
  return {this, id};
}

Var Tape::reshape(Var a, int rows, int cols) {
  const Matrix& av = value_of(a.id);
  if (av.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("reshape: element count mismatch");
  const int in_cols = static_cast<int>(av.cols());
  Matrix out(rows, cols);
  // Row-major reinterpretation on both sides.
  for (int k = 0; k < rows * cols; ++k)
    out(k / cols, k % cols) = av(k / in_cols, k % in_cols);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, rows, cols, in_cols]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    for (int k = 0; k < rows * cols; ++k)
      da(k / in_cols, k % in_cols) += g(k / cols, k % cols);
  };
  return {this, id};
}

Var Tape::slice_cols(Var a, int from, int n) {
  const Matrix& av = value_of(a.id);
  if (from < 0 || from + n > av.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  int id = push(av.middleCols(from, n));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, from, n]() {
    grad_of(ai).middleCols(from, n) += nodes_[id].grad;
  };
  return {this, id};
}

Var Tape::repeat_blocks(Var a, int block_rows, int times) {
  const Matrix& av = value_of(a.id);
  if (av.rows() % block_rows != 0)
    throw std::invalid_argument("repeat_blocks: rows not divisible by block");
  int blocks = static_cast<int>(av.rows()) / block_rows;
  Matrix out(av.rows() * times, av.cols());
  for (int b = 0; b < blocks; ++b)
    for (int t = 0; t < times; ++t)
      out.middleRows((b * times + t) * block_rows, block_rows) =
          av.middleRows(b * block_rows, block_rows);
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, block_rows, times, blocks]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    for (int b = 0; b < blocks; ++b)
      for (int t = 0; t < times; ++t)
        da.middleRows(b * block_rows, block_rows) +=
            g.middleRows((b * times + t) * block_rows, block_rows);
  };
  return {this, id};
}

Var Tape::row_sum(Var a) {
  const Matrix& av = value_of(a.id);
  int id = push(av.rowwise().sum());
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& av2 = value_of(ai);
    grad_of(ai) += g.col(0).replicate(1, av2.cols());
  };
  return {this, id};
}

Var Tape::row_mean(Var a) {
  const Matrix& av = value_of(a.id);
  double inv = 1.0 / static_cast<double>(av.cols());
  int id = push(av.rowwise().mean());
  int ai = a.id;
  nodes_[id].back = [this, id, ai, inv]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& av2 = value_of(ai);
    grad_of(ai) += g.col(0).replicate(1, av2.cols()) * inv;
  };
  return {this, id};
}

Var Tape::row_logsumexp(Var a) {
  const Matrix& av = value_of(a.id);
  Matrix out(av.rows(), 1);
  auto soft = std::make_shared<Matrix>(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i) {
    double m = av.row(i).maxCoeff();
    Eigen::RowVectorXd e = (av.row(i).array() - m).exp();
    double s = e.sum();
    out(i, 0) = m + std::log(s);
    soft->row(i) = e / s;
  }
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, soft]() {
    const Matrix& g = nodes_[id].grad;
    grad_of(ai) += g.col(0).asDiagonal() * (*soft);
  };
  return {this, id};
}

Var Tape::sum_all(Var a) {
  const Matrix& av = value_of(a.id);
  Matrix out(1, 1);
  out(0, 0) = av.sum();
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai]() {
    grad_of(ai).array() += nodes_[id].grad(0, 0);
  };
  return {this, id};
}

Var Tape::mean_all(Var a) {
  const Matrix& av = value_of(a.id);
  double inv = 1.0 / static_cast<double>(av.rows() * av.cols());
  Matrix out(1, 1);
  out(0, 0) = av.sum() * inv;
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, inv]() {
    grad_of(ai).array() += nodes_[id].grad(0, 0) * inv;
  };
  return {this, id};
}

Var Tape::segment_sum(Var a, Offsets off) {
  const Matrix& av = value_of(a.id);
  int segs = static_cast<int>(off->size()) - 1;
  Matrix out = Matrix::Zero(segs, av.cols());
  for (int s = 0; s < segs; ++s) {
    int lo = (*off)[s], hi = (*off)[s + 1];
    if (hi > lo) out.row(s) = av.middleRows(lo, hi - lo).colwise().sum();
  }
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, off]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    int segs2 = static_cast<int>(off->size()) - 1;
    for (int s = 0; s < segs2; ++s) {
      int lo = (*off)[s], hi = (*off)[s + 1];
      for (int r = lo; r < hi; ++r) da.row(r) += g.row(s);
    }
  };
  return {this, id};
}

Var Tape::segment_mean(Var a, Offsets off) {
  const Matrix& av = value_of(a.id);
  int segs = static_cast<int>(off->size()) - 1;
  Matrix out = Matrix::Zero(segs, av.cols());
  for (int s = 0; s < segs; ++s) {
    int lo = (*off)[s], hi = (*off)[s + 1];
    if (hi > lo)
      out.row(s) = av.middleRows(lo, hi - lo).colwise().mean();
  }
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, off]() {
    const Matrix& g = nodes_[id].grad;
    Matrix& da = grad_of(ai);
    int segs2 = static_cast<int>(off->size()) - 1;
    for (int s = 0; s < segs2; ++s) {
      int lo = (*off)[s], hi = (*off)[s + 1];
      if (hi == lo) continue;
      double inv = 1.0 / (hi - lo);
      for (int r = lo; r < hi; ++r) da.row(r) += g.row(s) * inv;
    }
  };
  return {this, id};
}

Var Tape::segment_softmax(Var a, Offsets off) {
  const Matrix& av = value_of(a.id);
  if (av.cols() != 1)
    throw std::invalid_argument("segment_softmax: expects N x 1 input");
  Matrix out(av.rows(), 1);
  int segs = static_cast<int>(off->size()) - 1;
  for (int s = 0; s < segs; ++s) {
    int lo = (*off)[s], hi = (*off)[s + 1];
    if (hi == lo) continue;
    double m = av.col(0).segment(lo, hi - lo).maxCoeff();
    Eigen::VectorXd e = (av.col(0).segment(lo, hi - lo).array() - m).exp();
    out.col(0).segment(lo, hi - lo) = e / e.sum();
  }
  int id = push(std::move(out));
  int ai = a.id;
  nodes_[id].back = [this, id, ai, off]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& p = nodes_[id].value;
    Matrix& da = grad_of(ai);
    int segs2 = static_cast<int>(off->size()) - 1;
    for (int s = 0; s < segs2; ++s) {
      int lo = (*off)[s], hi = (*off)[s + 1];
      if (hi == lo) continue;
      auto ps = p.col(0).segment(lo, hi - lo);
      auto gs = g.col(0).segment(lo, hi - lo);
      double dot = ps.dot(gs);
      da.col(0).segment(lo, hi - lo) +=
          (ps.array() * (gs.array() - dot)).matrix();
    }
  };
  return {this, id};
}

Var Tape::attention(Var q, Var k, Var v, Offsets off, double scale) {
  const Matrix& qv = value_of(q.id);
  const Matrix& kv = value_of(k.id);
  const Matrix& vv = value_of(v.id);
  if (qv.rows() != kv.rows() || kv.rows() != vv.rows())
    throw std::invalid_argument("attention: row counts disagree");
  if (qv.cols() != kv.cols())
    throw std::invalid_argument("attention: q/k widths disagree");
  if (!qv.allFinite())
    throw std::invalid_argument("attention: non-finite input");
  int segs = static_cast<int>(off->size()) - 1;
  Matrix out(vv.rows(), vv.cols());
  auto weights = std::make_shared<std::vector<Matrix>>(segs);
  for (int s = 0; s < segs; ++s) {
    int lo = (*off)[s], n = (*off)[s + 1] - (*off)[s];
    if (n == 0) continue;
    Matrix logits = qv.middleRows(lo, n) * kv.middleRows(lo, n).transpose();
    logits *= scale;
    Matrix& a = (*weights)[s];
    a.resize(n, n);
    for (int i = 0; i < n; ++i) {
      double m = logits.row(i).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
      a.row(i) = e / e.sum();
    }
    out.middleRows(lo, n).noalias() = a * vv.middleRows(lo, n);
  }
  int id = push(std::move(out));
  int qi = q.id, ki = k.id, vi = v.id;
  nodes_[id].back = [this, id, qi, ki, vi, off, scale, weights]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& qv2 = value_of(qi);
    const Matrix& kv2 = value_of(ki);
    const Matrix& vv2 = value_of(vi);
    Matrix& dq = grad_of(qi);
    Matrix& dk = grad_of(ki);
    Matrix& dv = grad_of(vi);
    int segs2 = static_cast<int>(off->size()) - 1;
    for (int s = 0; s < segs2; ++s) {
      int lo = (*off)[s], n = (*off)[s + 1] - (*off)[s];
      if (n == 0) continue;
      const Matrix& a = (*weights)[s];
      auto gs = g.middleRows(lo, n);
      dv.middleRows(lo, n).noalias() += a.transpose() * gs;
      Matrix dA = gs * vv2.middleRows(lo, n).transpose();
      // softmax backward per row
      Matrix dlogits(n, n);
      for (int i = 0; i < n; ++i) {
        double dot = a.row(i).dot(dA.row(i));
        dlogits.row(i) =
            (a.row(i).array() * (dA.row(i).array() - dot)).matrix();
      }
      dq.middleRows(lo, n).noalias() +=
          dlogits * kv2.middleRows(lo, n) * scale;
      dk.middleRows(lo, n).noalias() +=
          dlogits.transpose() * qv2.middleRows(lo, n) * scale;
    }
  };
  return {this, id};
}

Var Tape::segment_matmul_nt(Var a, Var b, int seg_rows) {
  const Matrix& av = value_of(a.id);
  const Matrix& bv = value_of(b.id);
  check_same_shape(av, bv, "segment_matmul_nt");
  if (av.rows() % seg_rows != 0)
    throw std::invalid_argument("segment_matmul_nt: rows not divisible");
  int segs = static_cast<int>(av.rows()) / seg_rows;
  Matrix out(av.rows(), seg_rows);
  for (int s = 0; s < segs; ++s)
    out.middleRows(s * seg_rows, seg_rows).noalias() =
        av.middleRows(s * seg_rows, seg_rows) *
        bv.middleRows(s * seg_rows, seg_rows).transpose();
  int id = push(std::move(out));
  int ai = a.id, bi = b.id;
  nodes_[id].back = [this, id, ai, bi, seg_rows, segs]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& av2 = value_of(ai);
    const Matrix& bv2 = value_of(bi);
    Matrix& da = grad_of(ai);
    Matrix& db = grad_of(bi);
    for (int s = 0; s < segs; ++s) {
      auto gs = g.middleRows(s * seg_rows, seg_rows);
      da.middleRows(s * seg_rows, seg_rows).noalias() +=
          gs * bv2.middleRows(s * seg_rows, seg_rows);
      db.middleRows(s * seg_rows, seg_rows).noalias() +=
          gs.transpose() * av2.middleRows(s * seg_rows, seg_rows);
    }
  };
  return {this, id};
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Matrix& x = value_of(a.id);
  const Matrix& gv = value_of(gain.id);
  const Matrix& bv = value_of(bias.id);
  if (gv.rows() != 1 || gv.cols() != x.cols() || bv.rows() != 1 ||
      bv.cols() != x.cols())
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
  int n = static_cast<int>(x.rows());
  int c = static_cast<int>(x.cols());
  auto xhat = std::make_shared<Matrix>(n, c);
  auto inv_std = std::make_shared<Eigen::VectorXd>(n);
  Matrix out(n, c);
  for (int i = 0; i < n; ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(i) = is;
    xhat->row(i) = (x.row(i).array() - mu) * is;
    out.row(i) =
        (xhat->row(i).array() * gv.row(0).array() + bv.row(0).array());
  }
  int id = push(std::move(out));
  int ai = a.id, gi = gain.id, bi = bias.id;
  nodes_[id].back = [this, id, ai, gi, bi, xhat, inv_std]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& gv2 = value_of(gi);
    Matrix& da = grad_of(ai);
    Matrix& dg = grad_of(gi);
    Matrix& db = grad_of(bi);
    db.row(0) += g.colwise().sum();
    dg.row(0) += g.cwiseProduct(*xhat).colwise().sum();
    for (int i = 0; i < g.rows(); ++i) {
      Eigen::RowVectorXd dxhat =
          g.row(i).cwiseProduct(gv2.row(0));
      double m1 = dxhat.mean();
      double m2 = dxhat.cwiseProduct(xhat->row(i)).mean();
      da.row(i) += ((dxhat.array() - m1 - xhat->row(i).array() * m2) *
                    (*inv_std)(i))
                       .matrix();
    }
  };
  return {this, id};
}

Var Tape::cin_layer(Var xprev, Var x0, Var w, int hp, int f) {
  const Matrix& xp = value_of(xprev.id);
  const Matrix& x0v = value_of(x0.id);
  const Matrix& wv = value_of(w.id);
  if (xp.cols() != x0v.cols())
    throw std::invalid_argument("cin_layer: embedding widths disagree");
  if (wv.cols() != hp * f)
    throw std::invalid_argument("cin_layer: W must be hk x (hp*f)");
  if (xp.rows() % hp != 0 || x0v.rows() % f != 0)
    throw std::invalid_argument("cin_layer: row counts not divisible");
  int batch = static_cast<int>(xp.rows()) / hp;
  if (static_cast<int>(x0v.rows()) / f != batch)
    throw std::invalid_argument("cin_layer: batch sizes disagree");
  int hk = static_cast<int>(wv.rows());
  int d = static_cast<int>(xp.cols());
  Matrix out(batch * hk, d);
  for (int b = 0; b < batch; ++b) {
    auto xpb = xp.middleRows(b * hp, hp);
    auto x0b = x0v.middleRows(b * f, f);
    for (int t = 0; t < d; ++t) {
      // z = vec(xprev[:,t] x0[:,t]^T), row-major over (i, j)
      Eigen::VectorXd z(hp * f);
      for (int i = 0; i < hp; ++i)
        for (int j = 0; j < f; ++j) z(i * f + j) = xpb(i, t) * x0b(j, t);
      out.col(t).segment(b * hk, hk) = wv * z;
    }
  }
  int id = push(std::move(out));
  int pi = xprev.id, zi = x0.id, wi = w.id;
  nodes_[id].back = [this, id, pi, zi, wi, hp, f, batch]() {
    const Matrix& g = nodes_[id].grad;
    const Matrix& xp2 = value_of(pi);
    const Matrix& x02 = value_of(zi);
    const Matrix& wv2 = value_of(wi);
    Matrix& dxp = grad_of(pi);
    Matrix& dx0 = grad_of(zi);
    Matrix& dw = grad_of(wi);
    int hk = static_cast<int>(wv2.rows());
    int d = static_cast<int>(xp2.cols());
    for (int b = 0; b < batch; ++b) {
      auto xpb = xp2.middleRows(b * hp, hp);
      auto x0b = x02.middleRows(b * f, f);
      for (int t = 0; t < d; ++t) {
        Eigen::VectorXd z(hp * f);
        for (int i = 0; i < hp; ++i)
          for (int j = 0; j < f; ++j) z(i * f + j) = xpb(i, t) * x0b(j, t);
        Eigen::VectorXd go = g.col(t).segment(b * hk, hk);
        dw.noalias() += go * z.transpose();
        Eigen::VectorXd dz = wv2.transpose() * go;
        for (int i = 0; i < hp; ++i)
          for (int j = 0; j < f; ++j) {
            dxp(b * hp + i, t) += dz(i * f + j) * x0b(j, t);
            dx0(b * f + j, t) += dz(i * f + j) * xpb(i, t);
          }
      }
    }
  };
  return {this, id};
}

Var Tape::bce_with_logits_mean(Var logits, std::vector<double> labels) {
  const Matrix& z = value_of(logits.id);
  if (z.cols() != 1 || static_cast<size_t>(z.rows()) != labels.size())
    throw std::invalid_argument("bce_with_logits_mean: shape mismatch");
  double total = 0.0;
  for (int i = 0; i < z.rows(); ++i) {
    double zi = z(i, 0);
    total += std::max(zi, 0.0) - zi * labels[i] +
             std::log1p(std::exp(-std::abs(zi)));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(z.rows());
  int id = push(std::move(out));
  int li = logits.id;
  nodes_[id].back = [this, id, li, labels = std::move(labels)]() {
    const Matrix& z2 = value_of(li);
    double g = nodes_[id].grad(0, 0) / static_cast<double>(z2.rows());
    Matrix& dz = grad_of(li);
    for (int i = 0; i < z2.rows(); ++i) {
      double zi = z2(i, 0);
      double sig = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                           : std::exp(zi) / (1.0 + std::exp(zi));
      dz(i, 0) += g * (sig - labels[i]);
    }
  };
  return {this, id};
}

void Tape::backward(Var scalar_loss) {
  assert(scalar_loss.tape == this);
  const Matrix& lv = value_of(scalar_loss.id);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: target must be 1 x 1");
  grad_of(scalar_loss.id)(0, 0) = 1.0;
  for (int i = scalar_loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.grad_ready) continue;  // not an ancestor of the loss
    if (n.back) n.back();
    if (n.ext_grad) *n.ext_grad += n.grad;
  }
}

}  // namespace edk::ad
