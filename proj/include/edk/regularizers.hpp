#ifndef EDK_REGULARIZERS_HPP
#define EDK_REGULARIZERS_HPP

#include <utility>
#include <vector>

#include "edk/nn.hpp"

namespace edk::model {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using nn::Linear;
using nn::Mlp;
using nn::Parameter;
using nn::ParameterStore;

// Bilinear-plus-MLP scorer over (s_j, c) pairs. Trained jointly with the
// main model (DIM-style estimator, not adversarial).
struct Discriminator {
  Parameter* bilinear = nullptr;  // d_k x d_k
  Mlp mlp;                        // 2*d_k -> d_k -> 1

  static Discriminator create(ParameterStore& store, const std::string& prefix,
                              int knowledge_dim, Rng& rng);
  // Row-wise D(s, c) in [eps, 1-eps], eps = 1e-7. s and c: N x d_k.
  Var prob(Tape& tape, Var s_rows, Var c_rows) const;
};

// Diagonal-Gaussian q(c | x_bar). Lives in its own parameter store so the
// main optimizer never touches it (alternating schedule).
struct VariationalNet {
  Linear l1, l2;  // in -> in (relu) -> 2*d_k
  int knowledge_dim = 0;

  static VariationalNet create(ParameterStore& store, const std::string& prefix,
                               int in_dim, int knowledge_dim, Rng& rng);
  // frozen=true loads weights as constants: no gradient reaches q.
  // Log-variance is clamped to [-10, 10].
  std::pair<Var, Var> mu_logvar(Tape& tape, Var xbar, bool frozen) const;
};

// Mean over rows of sum_dims log N(target; mu, diag exp(logvar)). 1 x 1.
Var gaussian_loglik_mean(Tape& tape, Var mu, Var logvar, Var target);

// Dropout -> layer norm -> MLP head for the contrastive views.
struct ProjectionHead {
  nn::LayerNormLayer ln;
  Mlp mlp;  // d_k -> d_k -> d_k
  double dropout_rate = 0.1;
  double temperature = 0.5;

  static ProjectionHead create(ParameterStore& store, const std::string& prefix,
                               int knowledge_dim, Rng& rng,
                               double dropout_rate = 0.1,
                               double temperature = 0.5);
  // rng == nullptr disables dropout (eval / deterministic path).
  Var project(Tape& tape, Var s, Rng* rng) const;
};

// -mean_j log D(s_j, c+) + log(1 - D(s_j, c-)) with in-batch partner
// sampling: c+ from a uniformly drawn other instance with the same label
// (falls back to the instance itself when it is alone with its label),
// c- from an instance with the opposite label.
// s: (B*K) x d_k in (instance, pattern) order; c: B x d_k.
// Throws TrainError when the batch holds a single label.
Var dim_label_mi_loss(Tape& tape, Var s, Var c,
                      const std::vector<double>& labels,
                      const Discriminator& disc, int pattern_count, Rng& rng);

// Shuffled-pair vCLUB estimate with the q weights frozen; one permutation
// per call. Batch size 1 gives exactly 0.
Var vclub_bound(Tape& tape, const VariationalNet& q, Var xbar, Var c,
                Rng& rng);

// One maximum-likelihood step on q against detached (xbar, c); returns the
// negative log-likelihood before the update.
double vclub_fit_step(VariationalNet& q, ParameterStore& q_store,
                      nn::AdamOptimizer& opt, const Matrix& xbar,
                      const Matrix& c);

// InfoNCE over intra-instance pattern pairs: positives (z1_j, z2_j),
// negatives z2_k of the same instance. z1, z2: (B*K) x d_k.
Var info_nce(Tape& tape, Var z1, Var z2, int batch_size, int pattern_count,
             double temperature);

// Two dropout-randomized projections of s, then info_nce. K >= 2 required.
Var disentangle_loss(Tape& tape, Var s, const ProjectionHead& head,
                     int batch_size, int pattern_count, Rng* rng);

struct RegWeights {
  double alpha = 1.0;
  double beta = 1.0;
};

// alpha * dim + vclub + beta * dis.
Var l_reg(Tape& tape, Var dim_loss, Var vclub, Var dis,
          const RegWeights& weights);

}  // namespace edk::model

#endif  // EDK_REGULARIZERS_HPP
