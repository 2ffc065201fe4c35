#ifndef EDK_ENCODER_HPP
#define EDK_ENCODER_HPP

#include <vector>

#include "edk/batch.hpp"
#include "edk/extractor.hpp"
#include "edk/nn.hpp"

namespace edk::model {

using nn::TransformerBlock;

struct EncoderConfig {
  int embed_dim = 16;     // d, must match the extractor
  int knowledge_dim = 8;  // d_k
  int depth = 3;
  int heads = 3;

  void validate() const;
};

// Self-attention stack over pattern rows, mean pooling, and the per-pattern /
// aggregate MLP heads. Handles any row count per pattern.
class KnowledgeEncoder {
 public:
  KnowledgeEncoder(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

  // patterns: (S*rows) x d, S segments of `rows` rows each -> S x d_k.
  Var encode_patterns(Tape& tape, Var patterns, int segments, int rows) const;

  // s: (B*K) x d_k in (instance, pattern) order -> B x d_k.
  Var aggregate(Tape& tape, Var s, int batch_size, int pattern_count) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<TransformerBlock> blocks_;
  Mlp head_;     // d -> d_k
  Mlp agg_mlp_;  // d_k -> d_k
};

struct KnowledgeForward {
  Extractor::Forward ext;
  Var s;  // (B*K) x d_k
  Var c;  // B x d_k
};

// Extractor + encoder pair; KB(X) at serving time.
class KnowledgeBase {
 public:
  KnowledgeBase(ParameterStore& store, const data::DatasetSchema& schema,
                const ExtractorConfig& ext_cfg, const EncoderConfig& enc_cfg,
                Rng& rng);

  KnowledgeForward forward(Tape& tape, const Batch& batch, bool train,
                           Rng* rng) const;

  const Extractor& extractor() const { return extractor_; }
  const KnowledgeEncoder& encoder() const { return encoder_; }

 private:
  Extractor extractor_;
  KnowledgeEncoder encoder_;
};

}  // namespace edk::model

#endif  // EDK_ENCODER_HPP
