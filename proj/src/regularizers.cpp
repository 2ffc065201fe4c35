#include "edk/regularizers.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "edk/errors.hpp"

namespace edk::model {

namespace {
constexpr double kProbEps = 1e-7;

Var linear_apply(Tape& tape, Var x, const Linear& l, bool frozen) {
  Var w = frozen ? tape.constant(l.weight->value) : nn::use(tape, *l.weight);
  Var out = tape.matmul(x, w);
  if (l.bias != nullptr) {
    Var b = frozen ? tape.constant(l.bias->value) : nn::use(tape, *l.bias);
    out = tape.add_row(out, b);
  }
  return out;
}
}  // namespace

Discriminator Discriminator::create(ParameterStore& store,
                                    const std::string& prefix,
                                    int knowledge_dim, Rng& rng) {
  Discriminator d;
  d.bilinear = &store.add(prefix + ".bilinear", knowledge_dim, knowledge_dim);
  nn::glorot_init(d.bilinear->value, rng);
  d.mlp = Mlp::create(store, prefix + ".mlp",
                      {2 * knowledge_dim, knowledge_dim, 1}, rng);
  return d;
}

Var Discriminator::prob(Tape& tape, Var s_rows, Var c_rows) const {
  Var bil = tape.row_sum(
      tape.mul(s_rows, tape.matmul(c_rows, nn::use(tape, *bilinear))));
  Var deep = mlp(tape, tape.concat_cols(s_rows, c_rows));
  Var logit = tape.add(bil, deep);
  return tape.clip(tape.sigmoid(logit), kProbEps, 1.0 - kProbEps);
}

VariationalNet VariationalNet::create(ParameterStore& store,
                                      const std::string& prefix, int in_dim,
                                      int knowledge_dim, Rng& rng) {
  VariationalNet q;
  q.knowledge_dim = knowledge_dim;
  q.l1 = Linear::create(store, prefix + ".l1", in_dim, in_dim, rng);
  q.l2 = Linear::create(store, prefix + ".l2", in_dim, 2 * knowledge_dim, rng);
  return q;
}

std::pair<Var, Var> VariationalNet::mu_logvar(Tape& tape, Var xbar,
                                              bool frozen) const {
  Var h = tape.relu(linear_apply(tape, xbar, l1, frozen));
  Var out = linear_apply(tape, h, l2, frozen);
  Var mu = tape.slice_cols(out, 0, knowledge_dim);
  Var logvar =
      tape.clip(tape.slice_cols(out, knowledge_dim, knowledge_dim), -10.0, 10.0);
  return {mu, logvar};
}

Var gaussian_loglik_mean(Tape& tape, Var mu, Var logvar, Var target) {
  const double dims = static_cast<double>(tape.val(mu).cols());
  Var diff = tape.sub(target, mu);
  Var quad = tape.mul(tape.mul(diff, diff), tape.exp(tape.scale(logvar, -1.0)));
  Var per_row = tape.row_sum(tape.add(logvar, quad));
  const double log2pi = std::log(2.0 * M_PI);
  return tape.scale(tape.add_scalar(tape.mean_all(per_row), dims * log2pi),
                    -0.5);
}

ProjectionHead ProjectionHead::create(ParameterStore& store,
                                      const std::string& prefix,
                                      int knowledge_dim, Rng& rng,
                                      double dropout_rate, double temperature) {
  if (!(dropout_rate > 0.0 && dropout_rate < 1.0))
    throw ConfigError("projection: dropout rate must be in (0,1)");
  if (!(temperature > 0.0))
    throw ConfigError("projection: temperature must be > 0");
  ProjectionHead p;
  p.dropout_rate = dropout_rate;
  p.temperature = temperature;
  p.ln = nn::LayerNormLayer::create(store, prefix + ".ln", knowledge_dim);
  p.mlp = Mlp::create(store, prefix + ".mlp",
                      {knowledge_dim, knowledge_dim, knowledge_dim}, rng);
  return p;
}

Var ProjectionHead::project(Tape& tape, Var s, Rng* rng) const {
  Var x = s;
  if (rng != nullptr) {
    const auto& sv = tape.val(s);
    x = tape.mul(s, tape.constant(nn::dropout_mask(
                        static_cast<int>(sv.rows()),
                        static_cast<int>(sv.cols()), dropout_rate, *rng)));
  }
  return mlp(tape, ln(tape, x));
}

Var dim_label_mi_loss(Tape& tape, Var s, Var c,
                      const std::vector<double>& labels,
                      const Discriminator& disc, int pattern_count, Rng& rng) {
  const int b = static_cast<int>(labels.size());
  std::vector<int> pos_of_label[2];
  for (int i = 0; i < b; ++i)
    pos_of_label[labels[static_cast<size_t>(i)] > 0.5 ? 1 : 0].push_back(i);
  if (pos_of_label[0].empty() || pos_of_label[1].empty())
    throw TrainError("dim_label_mi_loss: batch holds a single label");

  std::vector<int> pos_rows, neg_rows;
  pos_rows.reserve(static_cast<size_t>(b) * pattern_count);
  neg_rows.reserve(static_cast<size_t>(b) * pattern_count);
  for (int i = 0; i < b; ++i) {
    const int y = labels[static_cast<size_t>(i)] > 0.5 ? 1 : 0;
    const auto& same = pos_of_label[y];
    const auto& other = pos_of_label[1 - y];
    for (int j = 0; j < pattern_count; ++j) {
      // Prefer a same-label partner that is not the instance itself.
      int p = i;
      if (same.size() > 1) {
        do {
          p = same[rng.uniform_int(same.size())];
        } while (p == i);
      }
      pos_rows.push_back(p);
      neg_rows.push_back(other[rng.uniform_int(other.size())]);
    }
  }

  Var c_pos = tape.gather_rows(c, std::move(pos_rows));
  Var c_neg = tape.gather_rows(c, std::move(neg_rows));
  Var d_pos = disc.prob(tape, s, c_pos);
  Var d_neg = disc.prob(tape, s, c_neg);
  Var joint = tape.mean_all(tape.log(d_pos));
  Var marginal =
      tape.mean_all(tape.log(tape.add_scalar(tape.scale(d_neg, -1.0), 1.0)));
  return tape.scale(tape.add(joint, marginal), -1.0);
}

Var vclub_bound(Tape& tape, const VariationalNet& q, Var xbar, Var c,
                Rng& rng) {
  auto [mu, logvar] = q.mu_logvar(tape, xbar, /*frozen=*/true);
  const int b = static_cast<int>(tape.val(c).rows());
  std::vector<int> perm(static_cast<size_t>(b));
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Var pos = gaussian_loglik_mean(tape, mu, logvar, c);
  Var neg =
      gaussian_loglik_mean(tape, mu, logvar, tape.gather_rows(c, std::move(perm)));
  return tape.sub(pos, neg);
}

double vclub_fit_step(VariationalNet& q, ParameterStore& q_store,
                      nn::AdamOptimizer& opt, const Matrix& xbar,
                      const Matrix& c) {
  Tape tape;
  auto [mu, logvar] =
      q.mu_logvar(tape, tape.constant(xbar), /*frozen=*/false);
  Var nll =
      tape.scale(gaussian_loglik_mean(tape, mu, logvar, tape.constant(c)), -1.0);
  const double before = tape.val(nll)(0, 0);
  q_store.zero_grads();
  tape.backward(nll);
  opt.step(q_store);
  return before;
}

Var info_nce(Tape& tape, Var z1, Var z2, int batch_size, int pattern_count,
             double temperature) {
  if (pattern_count < 2)
    throw ConfigError("info_nce: needs at least two patterns per instance");
  Var logits = tape.scale(tape.segment_matmul_nt(z1, z2, pattern_count),
                          1.0 / temperature);
  std::vector<std::pair<int, int>> diag;
  diag.reserve(static_cast<size_t>(batch_size) * pattern_count);
  for (int i = 0; i < batch_size; ++i)
    for (int j = 0; j < pattern_count; ++j)
      diag.emplace_back(i * pattern_count + j, j);
  Var pos = tape.gather_entries(logits, std::move(diag));
  Var lse = tape.row_logsumexp(logits);
  return tape.mean_all(tape.sub(lse, pos));
}

Var disentangle_loss(Tape& tape, Var s, const ProjectionHead& head,
                     int batch_size, int pattern_count, Rng* rng) {
  Var z1 = head.project(tape, s, rng);
  Var z2 = head.project(tape, s, rng);
  return info_nce(tape, z1, z2, batch_size, pattern_count, head.temperature);
}

Var l_reg(Tape& tape, Var dim_loss, Var vclub, Var dis,
          const RegWeights& weights) {
  return tape.add(tape.add(tape.scale(dim_loss, weights.alpha), vclub),
                  tape.scale(dis, weights.beta));
}

}  // namespace edk::model
