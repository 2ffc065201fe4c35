#include "edk/backbones.hpp"

#include <cmath>
#include <set>
#include <string>

#include "edk/errors.hpp"

namespace edk::model {

void BackboneConfig::validate() const {
  static const std::set<std::string> kinds = {"deepfm",  "dcn",     "pnn",
                                              "xdeepfm", "autoint", "din"};
  if (kinds.count(kind) == 0)
    throw ConfigError("backbone: unknown kind '" + kind + "'");
  if (embed_dim < 1) throw ConfigError("backbone: embed_dim must be >= 1");
  if (kind == "dcn" && cross_depth < 1)
    throw ConfigError("backbone: cross_depth must be >= 1");
  if (kind == "xdeepfm" && cin_sizes.empty())
    throw ConfigError("backbone: cin_sizes must be non-empty");
  if (kind == "autoint") {
    if (att_layers < 1 || att_heads < 1)
      throw ConfigError("backbone: att_layers and att_heads must be >= 1");
    if (embed_dim % att_heads != 0)
      throw ConfigError("backbone: att_heads must divide embed_dim");
  }
  if (item_field < 0) throw ConfigError("backbone: item_field must be >= 0");
  if (use_knowledge) {
    if (knowledge_dim < 1)
      throw ConfigError("backbone: knowledge_dim required with use_knowledge");
    if (knowledge_mode != "c" && knowledge_mode != "patterns")
      throw ConfigError("backbone: knowledge_mode must be 'c' or 'patterns'");
    if (knowledge_mode == "patterns" && pattern_count < 1)
      throw ConfigError("backbone: pattern_count required in patterns mode");
  }
}

Backbone::Backbone(ParameterStore& store, const data::DatasetSchema& schema,
                   const BackboneConfig& cfg, Rng& rng)
    : cfg_(cfg), schema_(schema), vocab_offs_(vocab_offsets(schema)),
      fields_(schema.field_count()) {
  cfg_.validate();
  if (cfg_.kind == "din" && !schema.has_history)
    throw ConfigError("backbone: din requires a schema with history");
  const bool needs_item =
      cfg_.kind == "din" ||
      (cfg_.use_knowledge && cfg_.knowledge_mode == "patterns");
  if (needs_item && cfg_.item_field >= fields_)
    throw ConfigError("backbone: item_field out of range");

  const int v = total_vocab(schema);
  const int db = cfg_.embed_dim;
  const int r = fields_ + (cfg_.use_knowledge ? 1 : 0);
  const int n = r * db;

  embed_ = &store.add("backbone.embed", v, db);
  nn::normal_init(embed_->value, rng, 0.1);
  bias_ = &store.add("backbone.bias", 1, 1);
  bias_->value.setZero();

  auto tower = [&](int in) {
    std::vector<int> w{in};
    w.insert(w.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    w.push_back(1);
    return w;
  };

  if (cfg_.kind == "deepfm" || cfg_.kind == "xdeepfm") {
    first_ = &store.add("backbone.first", v, 1);
    nn::normal_init(first_->value, rng, 0.01);
    deep_ = Mlp::create(store, "backbone.deep", tower(n), rng);
  }
  if (cfg_.kind == "dcn") {
    for (int l = 0; l < cfg_.cross_depth; ++l) {
      auto* w = &store.add("backbone.cross_w" + std::to_string(l), n, 1);
      nn::glorot_init(w->value, rng);
      auto* b = &store.add("backbone.cross_b" + std::to_string(l), 1, n);
      b->value.setZero();
      cross_w_.push_back(w);
      cross_b_.push_back(b);
    }
    std::vector<int> w{n};
    w.insert(w.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    dcn_deep_ = Mlp::create(store, "backbone.deep", w, rng);
    const int deep_out = cfg_.hidden.empty() ? n : cfg_.hidden.back();
    dcn_final_ = Linear::create(store, "backbone.final", n + deep_out, 1, rng);
  }
  if (cfg_.kind == "pnn") {
    const int pairs = r * (r - 1) / 2;
    deep_ = Mlp::create(store, "backbone.deep", tower(n + pairs), rng);
  }
  if (cfg_.kind == "xdeepfm") {
    int hp = r;
    int total = 0;
    for (std::size_t l = 0; l < cfg_.cin_sizes.size(); ++l) {
      const int hk = cfg_.cin_sizes[l];
      auto* w = &store.add("backbone.cin_w" + std::to_string(l), hk, hp * r);
      nn::glorot_init(w->value, rng);
      cin_w_.push_back(w);
      hp = hk;
      total += hk;
    }
    cin_final_ = Linear::create(store, "backbone.cin_final", total, 1, rng);
  }
  if (cfg_.kind == "autoint") {
    for (int l = 0; l < cfg_.att_layers; ++l) {
      const std::string p = "backbone.att" + std::to_string(l);
      AttLayer layer;
      layer.wq = Linear::create(store, p + ".wq", db, db, rng, false);
      layer.wk = Linear::create(store, p + ".wk", db, db, rng, false);
      layer.wv = Linear::create(store, p + ".wv", db, db, rng, false);
      layer.wo = Linear::create(store, p + ".wo", db, db, rng, false);
      att_.push_back(layer);
    }
    autoint_final_ = Linear::create(store, "backbone.final", n, 1, rng);
  }
  if (cfg_.kind == "din") {
    std::vector<int> aw{4 * db};
    aw.insert(aw.end(), cfg_.din_att_hidden.begin(), cfg_.din_att_hidden.end());
    aw.push_back(1);
    din_att_ = Mlp::create(store, "backbone.din_att", aw, rng);
    deep_ = Mlp::create(store, "backbone.deep", tower(n + db), rng);
  }
  if (cfg_.use_knowledge) {
    std::vector<int> aw{cfg_.knowledge_dim};
    aw.insert(aw.end(), cfg_.adapter_hidden.begin(), cfg_.adapter_hidden.end());
    aw.push_back(db);
    adapter_ = Mlp::create(store, "backbone.adapter", aw, rng);
    if (cfg_.knowledge_mode == "patterns") {
      pattern_query_ =
          &store.add("backbone.pattern_query", db, cfg_.knowledge_dim);
      nn::glorot_init(pattern_query_->value, rng);
    }
  }
}

Var Backbone::item_rows(Tape& tape, const Batch& batch) const {
  std::vector<int> idx(static_cast<std::size_t>(batch.size));
  for (int b = 0; b < batch.size; ++b)
    idx[static_cast<std::size_t>(b)] =
        batch.flat_ids[static_cast<std::size_t>(b * fields_ + cfg_.item_field)];
  return tape.gather_rows(nn::use(tape, *embed_), std::move(idx));
}

Var Backbone::adapt_knowledge(Tape& tape, const Batch& batch,
                              const Matrix& knowledge) const {
  if (cfg_.knowledge_mode == "c") {
    if (knowledge.rows() != batch.size ||
        knowledge.cols() != cfg_.knowledge_dim)
      throw DataError("backbone: knowledge rows must be B x d_k");
    return adapter_(tape, tape.constant(knowledge));
  }
  const int k = cfg_.pattern_count;
  if (knowledge.rows() != static_cast<Eigen::Index>(batch.size) * k ||
      knowledge.cols() != cfg_.knowledge_dim)
    throw DataError("backbone: knowledge rows must be (B*K) x d_k");
  Var s = tape.constant(knowledge);
  Var q = tape.matmul(item_rows(tape, batch), nn::use(tape, *pattern_query_));
  std::vector<int> rep(static_cast<std::size_t>(batch.size) * k);
  for (int b = 0; b < batch.size; ++b)
    for (int j = 0; j < k; ++j) rep[static_cast<std::size_t>(b) * k + j] = b;
  Var q_rep = tape.gather_rows(q, std::move(rep));
  Var scores =
      tape.scale(tape.row_sum(tape.mul(q_rep, s)),
                 1.0 / std::sqrt(static_cast<double>(cfg_.knowledge_dim)));
  Offsets off = ad::uniform_offsets(batch.size, k);
  Var w = tape.segment_softmax(scores, off);
  Var pooled = tape.segment_sum(tape.scale_rows(s, w), off);
  return adapter_(tape, pooled);
}

Var Backbone::interaction_rows(Tape& tape, const Batch& batch,
                               const Matrix* knowledge,
                               int* rows_per_instance) const {
  Var field = tape.gather_rows(nn::use(tape, *embed_), batch.flat_ids);
  if (!cfg_.use_knowledge) {
    *rows_per_instance = fields_;
    return field;
  }
  if (knowledge == nullptr)
    throw ConfigError("backbone: use_knowledge set but no knowledge given");
  Var extra = adapt_knowledge(tape, batch, *knowledge);
  Var stacked = tape.concat_rows(field, extra);
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(batch.size) * (fields_ + 1));
  for (int b = 0; b < batch.size; ++b) {
    for (int f = 0; f < fields_; ++f) order.push_back(b * fields_ + f);
    order.push_back(batch.size * fields_ + b);
  }
  *rows_per_instance = fields_ + 1;
  return tape.gather_rows(stacked, std::move(order));
}

Var Backbone::first_order(Tape& tape, const Batch& batch) const {
  Var fo = tape.gather_rows(nn::use(tape, *first_), batch.flat_ids);
  return tape.segment_sum(fo, ad::uniform_offsets(batch.size, fields_));
}

Var Backbone::forward_deepfm(Tape& tape, const Batch& batch, Var rows,
                             int r) const {
  Offsets off = ad::uniform_offsets(batch.size, r);
  Var sum = tape.segment_sum(rows, off);
  Var sq_of_sum = tape.mul(sum, sum);
  Var sum_of_sq = tape.segment_sum(tape.mul(rows, rows), off);
  Var second = tape.scale(tape.row_sum(tape.sub(sq_of_sum, sum_of_sq)), 0.5);
  Var deep = deep_(tape, tape.reshape(rows, batch.size, r * cfg_.embed_dim));
  Var logit = tape.add(tape.add(first_order(tape, batch), second), deep);
  return tape.add_row(logit, nn::use(tape, *bias_));
}

Var Backbone::forward_dcn(Tape& tape, const Batch& batch, Var rows,
                          int r) const {
  Var x0 = tape.reshape(rows, batch.size, r * cfg_.embed_dim);
  Var xl = x0;
  for (std::size_t l = 0; l < cross_w_.size(); ++l) {
    Var xw = tape.matmul(xl, nn::use(tape, *cross_w_[l]));
    Var cross = tape.scale_rows(x0, xw);
    xl = tape.add(tape.add_row(cross, nn::use(tape, *cross_b_[l])), xl);
  }
  Var deep = dcn_deep_(tape, x0);
  return dcn_final_(tape, tape.concat_cols(xl, deep));
}

Var Backbone::forward_pnn(Tape& tape, const Batch& batch, Var rows,
                          int r) const {
  Var z = tape.reshape(rows, batch.size, r * cfg_.embed_dim);
  Var gram = tape.segment_matmul_nt(rows, rows, r);
  std::vector<std::pair<int, int>> idx;
  idx.reserve(static_cast<std::size_t>(batch.size) * r * (r - 1) / 2);
  for (int b = 0; b < batch.size; ++b)
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) idx.emplace_back(b * r + i, j);
  const int pairs = r * (r - 1) / 2;
  Var p = tape.reshape(tape.gather_entries(gram, std::move(idx)), batch.size,
                       pairs);
  return deep_(tape, tape.concat_cols(z, p));
}

Var Backbone::forward_xdeepfm(Tape& tape, const Batch& batch, Var rows,
                              int r) const {
  Var xl = rows;
  int hp = r;
  Var pooled_all;
  for (std::size_t l = 0; l < cin_w_.size(); ++l) {
    const int hk = cfg_.cin_sizes[l];
    Var next = tape.cin_layer(xl, rows, nn::use(tape, *cin_w_[l]), hp, r);
    Var pooled = tape.reshape(tape.row_sum(next), batch.size, hk);
    pooled_all = l == 0 ? pooled : tape.concat_cols(pooled_all, pooled);
    xl = next;
    hp = hk;
  }
  Var cin_term = cin_final_(tape, pooled_all);
  Var deep = deep_(tape, tape.reshape(rows, batch.size, r * cfg_.embed_dim));
  Var logit = tape.add(tape.add(first_order(tape, batch), cin_term), deep);
  return tape.add_row(logit, nn::use(tape, *bias_));
}

Var Backbone::forward_autoint(Tape& tape, const Batch& batch, Var rows,
                              int r) const {
  Offsets off = ad::uniform_offsets(batch.size, r);
  Var x = rows;
  for (const auto& layer : att_) {
    Var mixed = nn::multihead_attention(tape, x, layer.wq, layer.wk, layer.wv,
                                        layer.wo, cfg_.att_heads, off);
    x = tape.relu(tape.add(mixed, x));
  }
  return autoint_final_(tape,
                        tape.reshape(x, batch.size, r * cfg_.embed_dim));
}

Var Backbone::forward_din(Tape& tape, const Batch& batch, Var rows,
                          int r) const {
  const int db = cfg_.embed_dim;
  const int64_t item_vocab =
      schema_.field_specs[static_cast<std::size_t>(cfg_.item_field)].vocab_size;
  const int item_off = vocab_offs_[static_cast<std::size_t>(cfg_.item_field)];

  Var flat = tape.reshape(rows, batch.size, r * db);
  const int total_hist = batch.hist_offsets.back();
  Var pooled{nullptr, -1};
  if (total_hist == 0) {
    pooled = tape.constant(Matrix::Zero(batch.size, db));
  } else {
    std::vector<int> hist_flat;
    std::vector<int> rep;
    hist_flat.reserve(static_cast<std::size_t>(total_hist));
    rep.reserve(static_cast<std::size_t>(total_hist));
    for (int b = 0; b < batch.size; ++b) {
      for (int t = batch.hist_offsets[static_cast<std::size_t>(b)];
           t < batch.hist_offsets[static_cast<std::size_t>(b) + 1]; ++t) {
        const int h = batch.hist_ids[static_cast<std::size_t>(t)];
        if (h >= item_vocab)
          throw DataError("din: history id " + std::to_string(h) +
                          " outside item vocab");
        hist_flat.push_back(item_off + h);
        rep.push_back(b);
      }
    }
    Var e_hist = tape.gather_rows(nn::use(tape, *embed_), std::move(hist_flat));
    Var e_item = tape.gather_rows(item_rows(tape, batch), std::move(rep));
    Var att_in = tape.concat_cols(
        tape.concat_cols(e_hist, e_item),
        tape.concat_cols(tape.sub(e_hist, e_item), tape.mul(e_hist, e_item)));
    Var a = din_att_(tape, att_in);
    Offsets off = ad::make_offsets(batch.hist_offsets);
    Var w = tape.segment_softmax(a, off);
    pooled = tape.segment_sum(tape.scale_rows(e_hist, w), off);
  }
  return deep_(tape, tape.concat_cols(flat, pooled));
}

Var Backbone::logits(Tape& tape, const Batch& batch,
                     const Matrix* knowledge) const {
  int r = 0;
  Var rows = interaction_rows(tape, batch, knowledge, &r);
  if (cfg_.kind == "deepfm") return forward_deepfm(tape, batch, rows, r);
  if (cfg_.kind == "dcn") return forward_dcn(tape, batch, rows, r);
  if (cfg_.kind == "pnn") return forward_pnn(tape, batch, rows, r);
  if (cfg_.kind == "xdeepfm") return forward_xdeepfm(tape, batch, rows, r);
  if (cfg_.kind == "autoint") return forward_autoint(tape, batch, rows, r);
  return forward_din(tape, batch, rows, r);
}

Var Backbone::loss(Tape& tape, const Batch& batch,
                   const Matrix* knowledge) const {
  return tape.bce_with_logits_mean(logits(tape, batch, knowledge),
                                   batch.labels);
}

std::vector<double> Backbone::predict(const Batch& batch,
                                      const Matrix* knowledge) const {
  Tape tape;
  Var lg = logits(tape, batch, knowledge);
  const Matrix& z = tape.val(lg);
  std::vector<double> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z(i, 0)));
    out[static_cast<std::size_t>(i)] =
        std::min(1.0 - 1e-7, std::max(1e-7, p));
  }
  return out;
}

}  // namespace edk::model
