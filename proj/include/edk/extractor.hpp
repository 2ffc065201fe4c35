#ifndef EDK_EXTRACTOR_HPP
#define EDK_EXTRACTOR_HPP

#include <optional>
#include <string>

#include "edk/batch.hpp"
#include "edk/data.hpp"
#include "edk/nn.hpp"

namespace edk::model {

using nn::Mlp;
using nn::Parameter;
using nn::ParameterStore;
using ad::Offsets;
using ad::Tape;
using ad::Var;

enum class ClampMode { Clip, Tanh };

// Hard-concrete relaxation constants.
struct MaskSettings {
  double temperature = 2.0 / 3.0;  // sigmoid temperature
  double stretch_lo = -0.1;        // must be < 0
  double stretch_hi = 1.1;         // must be > 1
  ClampMode clamp = ClampMode::Clip;

  void validate() const;
};

struct ExtractorConfig {
  int embed_dim = 16;      // d
  int pattern_count = 20;  // K
  MaskSettings mask;
};

// Maps a batch of instances to pattern_count masked patterns per instance:
// dual embedding tables, a global attention readout, mask logits, the
// hard-concrete relaxation, and mask application.
class Extractor {
 public:
  Extractor(ParameterStore& store, const data::DatasetSchema& schema,
            const ExtractorConfig& cfg, Rng& rng);

  // Embedding lookup, rows in (instance, field) order -> (B*F) x d.
  Var embed_extract(Tape& tape, const Batch& batch) const;
  Var embed_memory(Tape& tape, const Batch& batch) const;

  // Single-head scaled dot-product self-attention over each instance's
  // F rows with learned Q/K/V projections.
  Var global_attention(Tape& tape, Var h0, int batch_size) const;

  // (B*F) x K logits: context features times the learnable mask projection.
  Var mask_logits(Tape& tape, Var context) const;

  // Relaxed-binary mask. Training mode draws logistic noise from `rng`;
  // eval mode is the deterministic noise-free path (uniform fixed at 0.5).
  Var hard_concrete(Tape& tape, Var logits, bool train, Rng* rng) const;

  // Expected fraction of nonzero gates under the hard-concrete distribution.
  Var l0_penalty(Tape& tape, Var logits) const;

  // Scales row (b, f) of the replicated memory embeddings by mask(b*F+f, j),
  // producing patterns in (instance, pattern, field) row order.
  Var apply_mask(Tape& tape, Var memory, Var mask, int batch_size) const;

  struct Forward {
    Var mask_logit_values;  // (B*F) x K
    Var mask;               // (B*F) x K
    Var memory;             // (B*F) x d
    Var patterns;           // (B*K*F) x d
    Var l0;                 // 1 x 1
  };
  Forward extract(Tape& tape, const Batch& batch, bool train, Rng* rng) const;

  const ExtractorConfig& config() const { return cfg_; }
  int field_count() const { return fields_; }

 private:
  ExtractorConfig cfg_;
  int fields_;
  Parameter* extract_table_;  // (total vocab) x d, knowledge extraction
  Parameter* memory_table_;   // (total vocab) x d, knowledge memorization
  Parameter* att_q_;
  Parameter* att_k_;
  Parameter* att_v_;
  Parameter* mask_proj_;      // d x K
};

}  // namespace edk::model

#endif  // EDK_EXTRACTOR_HPP
