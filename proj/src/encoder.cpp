#include "edk/encoder.hpp"

#include <string>

#include "edk/errors.hpp"

namespace edk::model {

void EncoderConfig::validate() const {
  if (embed_dim <= 0) throw ConfigError("encoder: embed_dim must be > 0");
  if (knowledge_dim <= 0)
    throw ConfigError("encoder: knowledge_dim must be > 0");
  if (depth <= 0) throw ConfigError("encoder: depth must be > 0");
  if (heads <= 0 || embed_dim % heads != 0)
    throw ConfigError("encoder: heads must divide embed_dim");
}

KnowledgeEncoder::KnowledgeEncoder(ParameterStore& store,
                                   const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  for (int i = 0; i < cfg_.depth; ++i) {
    blocks_.push_back(TransformerBlock::create(
        store, "encoder.block" + std::to_string(i), cfg_.embed_dim,
        cfg_.heads, rng));
  }
  head_ = Mlp::create(store, "encoder.head",
                      {cfg_.embed_dim, cfg_.embed_dim, cfg_.knowledge_dim},
                      rng);
  agg_mlp_ = Mlp::create(
      store, "encoder.agg",
      {cfg_.knowledge_dim, cfg_.knowledge_dim, cfg_.knowledge_dim}, rng);
}

Var KnowledgeEncoder::encode_patterns(Tape& tape, Var patterns, int segments,
                                      int rows) const {
  if (segments < 1 || rows < 1)
    throw ConfigError("encode_patterns: needs at least one segment and row");
  Offsets off = ad::uniform_offsets(segments, rows);
  Var x = patterns;
  for (const auto& block : blocks_) x = block(tape, x, off);
  Var pooled = tape.segment_mean(x, off);
  return head_(tape, pooled);
}

Var KnowledgeEncoder::aggregate(Tape& tape, Var s, int batch_size,
                                int pattern_count) const {
  if (pattern_count < 1) throw ConfigError("aggregate: K must be >= 1");
  Var pooled =
      tape.segment_mean(s, ad::uniform_offsets(batch_size, pattern_count));
  return agg_mlp_(tape, pooled);
}

KnowledgeBase::KnowledgeBase(ParameterStore& store,
                             const data::DatasetSchema& schema,
                             const ExtractorConfig& ext_cfg,
                             const EncoderConfig& enc_cfg, Rng& rng)
    : extractor_(store, schema, ext_cfg, rng), encoder_(store, enc_cfg, rng) {
  if (ext_cfg.embed_dim != enc_cfg.embed_dim)
    throw ConfigError("knowledge base: extractor and encoder widths differ");
}

KnowledgeForward KnowledgeBase::forward(Tape& tape, const Batch& batch,
                                        bool train, Rng* rng) const {
  KnowledgeForward out;
  out.ext = extractor_.extract(tape, batch, train, rng);
  const int k = extractor_.config().pattern_count;
  out.s = encoder_.encode_patterns(tape, out.ext.patterns, batch.size * k,
                                   extractor_.field_count());
  out.c = encoder_.aggregate(tape, out.s, batch.size, k);
  return out;
}

}  // namespace edk::model
