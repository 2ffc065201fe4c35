#include "edk/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace edk::nn {

Parameter& ParameterStore::add(const std::string& name, int rows, int cols) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  p->m = Matrix::Zero(rows, cols);
  p->v = Matrix::Zero(rows, cols);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  by_name_[name] = raw;
  return *raw;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->grad.setZero();
}

size_t ParameterStore::scalar_count() const {
  size_t n = 0;
  for (auto& p : params_) n += static_cast<size_t>(p->value.size());
  return n;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<std::pair<std::string, Matrix>> ParameterStore::snapshot() const {
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.emplace_back(p->name, p->value);
  return out;
}

void ParameterStore::restore(
    const std::vector<std::pair<std::string, Matrix>>& snap) {
  if (snap.size() != params_.size())
    throw std::invalid_argument("snapshot size mismatch");
  for (size_t i = 0; i < snap.size(); ++i) {
    Parameter* p = find(snap[i].first);
    if (!p) throw std::invalid_argument("unknown parameter: " + snap[i].first);
    if (p->value.rows() != snap[i].second.rows() ||
        p->value.cols() != snap[i].second.cols())
      throw std::invalid_argument("shape mismatch for " + snap[i].first);
    p->value = snap[i].second;
  }
}

Var use(Tape& tape, Parameter& p) { return tape.leaf(&p.value, &p.grad); }

void AdamOptimizer::step(ParameterStore& store) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : store.all()) {
    Matrix g = p->grad;
    if (weight_decay_ != 0.0) g += weight_decay_ * p->value;
    p->m = beta1_ * p->m + (1.0 - beta1_) * g;
    p->v = beta2_ * p->v + (1.0 - beta2_) * g.cwiseProduct(g);
    Matrix mhat = p->m / bc1;
    Matrix vhat = p->v / bc2;
    p->value.array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

void glorot_init(Matrix& w, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
}

void normal_init(Matrix& w, Rng& rng, double stddev) {
  for (int j = 0; j < w.cols(); ++j)
    for (int i = 0; i < w.rows(); ++i) w(i, j) = rng.normal() * stddev;
}

Linear Linear::create(ParameterStore& store, const std::string& prefix,
                      int in, int out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = &store.add(prefix + "/w", in, out);
  glorot_init(l.weight->value, rng);
  if (with_bias) l.bias = &store.add(prefix + "/b", 1, out);
  return l;
}

Var Linear::operator()(Tape& tape, Var x) const {
  Var y = tape.matmul(x, use(tape, *weight));
  if (bias) y = tape.add_row(y, use(tape, *bias));
  return y;
}

Mlp Mlp::create(ParameterStore& store, const std::string& prefix,
                const std::vector<int>& widths, Rng& rng, Activation act) {
  if (widths.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output width");
  Mlp mlp;
  mlp.act = act;
  for (size_t i = 0; i + 1 < widths.size(); ++i)
    mlp.layers.push_back(Linear::create(
        store, prefix + "/l" + std::to_string(i), widths[i], widths[i + 1],
        rng));
  return mlp;
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](tape, x);
    if (i + 1 < layers.size()) {
      if (act == Activation::Relu) x = tape.relu(x);
      else if (act == Activation::Tanh) x = tape.tanh(x);
    }
  }
  return x;
}

LayerNormLayer LayerNormLayer::create(ParameterStore& store,
                                      const std::string& prefix, int width) {
  LayerNormLayer ln;
  ln.gain = &store.add(prefix + "/gain", 1, width);
  ln.gain->value.setOnes();
  ln.bias = &store.add(prefix + "/bias", 1, width);
  return ln;
}

Var LayerNormLayer::operator()(Tape& tape, Var x) const {
  return tape.layer_norm(x, use(tape, *gain), use(tape, *bias));
}

Var multihead_attention(Tape& tape, Var x, const Linear& wq, const Linear& wk,
                        const Linear& wv, const Linear& wo, int heads,
                        Offsets off) {
  int width = static_cast<int>(tape.val(x).cols());
  if (width % heads != 0)
    throw std::invalid_argument("multihead_attention: width % heads != 0");
  int dh = width / heads;
  Var q = wq(tape, x);
  Var k = wk(tape, x);
  Var v = wv(tape, x);
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var merged;
  for (int h = 0; h < heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, dh);
    Var kh = tape.slice_cols(k, h * dh, dh);
    Var vh = tape.slice_cols(v, h * dh, dh);
    Var oh = tape.attention(qh, kh, vh, off, scale);
    merged = h == 0 ? oh : tape.concat_cols(merged, oh);
  }
  return wo(tape, merged);
}

TransformerBlock TransformerBlock::create(ParameterStore& store,
                                          const std::string& prefix,
                                          int width, int heads, Rng& rng) {
  TransformerBlock b;
  b.heads = heads;
  b.ln1 = LayerNormLayer::create(store, prefix + "/ln1", width);
  b.ln2 = LayerNormLayer::create(store, prefix + "/ln2", width);
  b.wq = Linear::create(store, prefix + "/wq", width, width, rng, false);
  b.wk = Linear::create(store, prefix + "/wk", width, width, rng, false);
  b.wv = Linear::create(store, prefix + "/wv", width, width, rng, false);
  b.wo = Linear::create(store, prefix + "/wo", width, width, rng, false);
  b.ff1 = Linear::create(store, prefix + "/ff1", width, 2 * width, rng);
  b.ff2 = Linear::create(store, prefix + "/ff2", 2 * width, width, rng);
  return b;
}

Var TransformerBlock::operator()(Tape& tape, Var x, Offsets off) const {
  Var a = multihead_attention(tape, ln1(tape, x), wq, wk, wv, wo, heads, off);
  x = tape.add(x, a);
  Var f = ff2(tape, tape.relu(ff1(tape, ln2(tape, x))));
  return tape.add(x, f);
}

Matrix dropout_mask(int rows, int cols, double rate, Rng& rng) {
  if (rate <= 0.0) return Matrix::Ones(rows, cols);
  double keep = 1.0 - rate;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

}  // namespace edk::nn
