#ifndef EDK_BACKBONES_HPP
#define EDK_BACKBONES_HPP

#include <string>
#include <vector>

#include "edk/batch.hpp"
#include "edk/data.hpp"
#include "edk/nn.hpp"

namespace edk::model {

using nn::Linear;
using nn::Mlp;
using nn::Parameter;
using nn::ParameterStore;
using ad::Matrix;
using ad::Offsets;
using ad::Tape;
using ad::Var;

struct BackboneConfig {
  std::string kind = "deepfm";  // deepfm | dcn | pnn | xdeepfm | autoint | din
  int embed_dim = 16;           // d_b
  std::vector<int> hidden = {64, 32};     // deep tower
  int cross_depth = 2;                    // dcn
  std::vector<int> cin_sizes = {16, 16};  // xdeepfm
  int att_layers = 2;                     // autoint
  int att_heads = 2;                      // autoint
  std::vector<int> din_att_hidden = {32, 16};

  bool use_knowledge = false;
  std::string knowledge_mode = "c";  // "c" or "patterns"
  int knowledge_dim = 0;             // d_k, required when use_knowledge
  int pattern_count = 0;             // K, required in patterns mode
  std::vector<int> adapter_hidden;   // widths between d_k and d_b
  int item_field = 1;  // DIN target item / patterns-mode query field

  void validate() const;  // throws ConfigError
};

// One CTR model with the shared knowledge-injection seam: the adapted
// knowledge vector is appended as an extra embedding row ahead of the
// interaction layers, so every kind sees it uniformly.
class Backbone {
 public:
  Backbone(ParameterStore& store, const data::DatasetSchema& schema,
           const BackboneConfig& cfg, Rng& rng);

  // knowledge: nullptr without injection; otherwise B x d_k rows in c mode,
  // (B*K) x d_k rows in patterns mode. Rows align with batch order.
  Var logits(Tape& tape, const Batch& batch, const Matrix* knowledge) const;
  Var loss(Tape& tape, const Batch& batch, const Matrix* knowledge) const;
  // Probabilities clipped to [1e-7, 1-1e-7].
  std::vector<double> predict(const Batch& batch,
                              const Matrix* knowledge) const;

  const BackboneConfig& config() const { return cfg_; }

 private:
  // Embedding rows, knowledge row appended per instance when present.
  Var interaction_rows(Tape& tape, const Batch& batch,
                       const Matrix* knowledge, int* rows_per_instance) const;
  Var item_rows(Tape& tape, const Batch& batch) const;  // B x d_b
  Var adapt_knowledge(Tape& tape, const Batch& batch,
                      const Matrix& knowledge) const;  // B x d_b
  Var first_order(Tape& tape, const Batch& batch) const;  // B x 1

  Var forward_deepfm(Tape&, const Batch&, Var rows, int r) const;
  Var forward_dcn(Tape&, const Batch&, Var rows, int r) const;
  Var forward_pnn(Tape&, const Batch&, Var rows, int r) const;
  Var forward_xdeepfm(Tape&, const Batch&, Var rows, int r) const;
  Var forward_autoint(Tape&, const Batch&, Var rows, int r) const;
  Var forward_din(Tape&, const Batch&, Var rows, int r) const;

  BackboneConfig cfg_;
  data::DatasetSchema schema_;
  std::vector<int> vocab_offs_;
  int fields_ = 0;

  Parameter* embed_ = nullptr;  // total vocab x d_b
  Parameter* first_ = nullptr;  // total vocab x 1 (deepfm, xdeepfm)
  Parameter* bias_ = nullptr;   // 1 x 1
  Mlp deep_;                    // tower ending in width 1 (not dcn)
  Mlp adapter_;                 // d_k -> ... -> d_b
  Parameter* pattern_query_ = nullptr;  // d_b x d_k (patterns mode)

  // dcn
  std::vector<Parameter*> cross_w_;
  std::vector<Parameter*> cross_b_;
  Mlp dcn_deep_;      // tower without final scalar
  Linear dcn_final_;  // concat(cross, deep) -> 1
  // xdeepfm
  std::vector<Parameter*> cin_w_;
  Linear cin_final_;  // sum(cin_sizes) -> 1
  // autoint
  struct AttLayer {
    Linear wq, wk, wv, wo;
  };
  std::vector<AttLayer> att_;
  Linear autoint_final_;
  // din
  Mlp din_att_;  // 4*d_b -> ... -> 1
};

}  // namespace edk::model

#endif  // EDK_BACKBONES_HPP
