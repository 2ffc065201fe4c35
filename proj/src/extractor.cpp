#include "edk/extractor.hpp"

#include <cmath>

#include "edk/errors.hpp"

namespace edk::model {

void MaskSettings::validate() const {
  if (!(temperature > 0.0))
    throw ConfigError("mask: temperature must be > 0");
  if (!(stretch_lo < 0.0))
    throw ConfigError("mask: stretch_lo must be < 0");
  if (!(stretch_hi > 1.0))
    throw ConfigError("mask: stretch_hi must be > 1");
}

Extractor::Extractor(ParameterStore& store, const data::DatasetSchema& schema,
                     const ExtractorConfig& cfg, Rng& rng)
    : cfg_(cfg), fields_(schema.field_count()) {
  cfg_.mask.validate();
  if (cfg_.embed_dim <= 0) throw ConfigError("extractor: embed_dim must be > 0");
  if (cfg_.pattern_count <= 0)
    throw ConfigError("extractor: pattern_count must be > 0");
  const int v = total_vocab(schema);
  const int d = cfg_.embed_dim;
  extract_table_ = &store.add("extractor.phi1", v, d);
  memory_table_ = &store.add("extractor.phi2", v, d);
  nn::normal_init(extract_table_->value, rng, 0.1);
  nn::normal_init(memory_table_->value, rng, 0.1);
  att_q_ = &store.add("extractor.wq", d, d);
  att_k_ = &store.add("extractor.wk", d, d);
  att_v_ = &store.add("extractor.wv", d, d);
  nn::glorot_init(att_q_->value, rng);
  nn::glorot_init(att_k_->value, rng);
  nn::glorot_init(att_v_->value, rng);
  mask_proj_ = &store.add("extractor.mask_proj", d, cfg_.pattern_count);
  nn::glorot_init(mask_proj_->value, rng);
}

Var Extractor::embed_extract(Tape& tape, const Batch& batch) const {
  return tape.gather_rows(nn::use(tape, *extract_table_), batch.flat_ids);
}

Var Extractor::embed_memory(Tape& tape, const Batch& batch) const {
  return tape.gather_rows(nn::use(tape, *memory_table_), batch.flat_ids);
}

Var Extractor::global_attention(Tape& tape, Var h0, int batch_size) const {
  const int d = cfg_.embed_dim;
  Var q = tape.matmul(h0, nn::use(tape, *att_q_));
  Var k = tape.matmul(h0, nn::use(tape, *att_k_));
  Var v = tape.matmul(h0, nn::use(tape, *att_v_));
  return tape.attention(q, k, v, ad::uniform_offsets(batch_size, fields_),
                        1.0 / std::sqrt(static_cast<double>(d)));
}

Var Extractor::mask_logits(Tape& tape, Var context) const {
  return tape.matmul(context, nn::use(tape, *mask_proj_));
}

Var Extractor::hard_concrete(Tape& tape, Var logits, bool train,
                             Rng* rng) const {
  const MaskSettings& m = cfg_.mask;
  Var pre = logits;
  if (train) {
    if (rng == nullptr)
      throw TrainError("hard_concrete: train mode needs a generator");
    const auto& lv = tape.val(logits);
    ad::Matrix noise(lv.rows(), lv.cols());
    for (Eigen::Index i = 0; i < noise.rows(); ++i) {
      for (Eigen::Index j = 0; j < noise.cols(); ++j) {
        // u in (0,1) strictly; the shifted uniform keeps both logs finite.
        double u = (static_cast<double>(rng->next_u64() >> 11) + 0.5) * 0x1.0p-53;
        noise(i, j) = std::log(u) - std::log1p(-u);
      }
    }
    pre = tape.add(logits, tape.constant(noise));
  }
  Var s = tape.sigmoid(tape.scale(pre, 1.0 / m.temperature));
  Var stretched =
      tape.add_scalar(tape.scale(s, m.stretch_hi - m.stretch_lo), m.stretch_lo);
  if (m.clamp == ClampMode::Clip) return tape.clip(stretched, 0.0, 1.0);
  return tape.tanh(stretched);
}

Var Extractor::l0_penalty(Tape& tape, Var logits) const {
  const MaskSettings& m = cfg_.mask;
  const double shift =
      -m.temperature * std::log(-m.stretch_lo / m.stretch_hi);
  return tape.mean_all(tape.sigmoid(tape.add_scalar(logits, shift)));
}

Var Extractor::apply_mask(Tape& tape, Var memory, Var mask,
                          int batch_size) const {
  const int F = fields_;
  const int K = cfg_.pattern_count;
  // (B*F) x d -> (B*K*F) x d with row order (instance, pattern, field).
  Var mem_rep = tape.repeat_blocks(memory, F, K);
  std::vector<std::pair<int, int>> idx;
  idx.reserve(static_cast<std::size_t>(batch_size) * K * F);
  for (int b = 0; b < batch_size; ++b)
    for (int j = 0; j < K; ++j)
      for (int f = 0; f < F; ++f) idx.emplace_back(b * F + f, j);
  Var mask_col = tape.gather_entries(mask, std::move(idx));
  return tape.scale_rows(mem_rep, mask_col);
}

Extractor::Forward Extractor::extract(Tape& tape, const Batch& batch,
                                      bool train, Rng* rng) const {
  Forward out;
  Var h0 = embed_extract(tape, batch);
  Var ctx = global_attention(tape, h0, batch.size);
  out.mask_logit_values = mask_logits(tape, ctx);
  out.mask = hard_concrete(tape, out.mask_logit_values, train, rng);
  out.memory = embed_memory(tape, batch);
  out.patterns = apply_mask(tape, out.memory, out.mask, batch.size);
  out.l0 = l0_penalty(tape, out.mask_logit_values);
  return out;
}

}  // namespace edk::model
