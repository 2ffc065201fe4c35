#include "edk/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "edk/errors.hpp"

namespace edk::cfg {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object())
    throw ConfigError("config: section '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (allowed.count(key) == 0)
      throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: bad value for '") + key +
                        "': " + e.what());
    }
  }
}

std::vector<data::LabelRule> parse_rules(const json& arr, const char* where) {
  std::vector<data::LabelRule> rules;
  for (const auto& r : arr) {
    check_keys(r, {"if", "prob"}, where);
    data::LabelRule rule;
    if (!r.contains("if") || !r.contains("prob"))
      throw ConfigError(std::string("config: rule in ") + where +
                        " needs 'if' and 'prob'");
    for (const auto& pair : r.at("if")) {
      if (!pair.is_array() || pair.size() != 2)
        throw ConfigError(std::string("config: rule condition in ") + where +
                          " must be [field, value]");
      rule.conjunction.emplace_back(pair.at(0).get<int>(),
                                    pair.at(1).get<int64_t>());
    }
    rule.prob = r.at("prob").get<double>();
    rules.push_back(std::move(rule));
  }
  return rules;
}

json rules_json(const std::vector<data::LabelRule>& rules) {
  json arr = json::array();
  for (const auto& r : rules) {
    json cond = json::array();
    for (const auto& [f, v] : r.conjunction) cond.push_back({f, v});
    arr.push_back({{"if", cond}, {"prob", r.prob}});
  }
  return arr;
}

void parse_data(const json& j, DataSection& out) {
  check_keys(j, {"path", "schema_path", "synthetic"}, "data");
  read(j, "path", out.path);
  read(j, "schema_path", out.schema_path);
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    check_keys(s,
               {"vocab_sizes", "n_records", "t0", "t1", "t_end",
                "invariant_rules", "spurious_rules", "noise_rate", "seed",
                "has_history", "max_history_len", "user_field", "item_field"},
               "data.synthetic");
    auto& c = out.synthetic;
    read(s, "vocab_sizes", c.vocab_sizes);
    read(s, "n_records", c.n_records);
    read(s, "t0", c.t0);
    read(s, "t1", c.t1);
    read(s, "t_end", c.t_end);
    if (s.contains("invariant_rules"))
      c.invariant_rules = parse_rules(s.at("invariant_rules"),
                                      "data.synthetic.invariant_rules");
    if (s.contains("spurious_rules"))
      c.spurious_rules =
          parse_rules(s.at("spurious_rules"), "data.synthetic.spurious_rules");
    read(s, "noise_rate", c.noise_rate);
    read(s, "seed", c.seed);
    read(s, "has_history", c.has_history);
    read(s, "max_history_len", c.max_history_len);
    read(s, "user_field", c.user_field);
    read(s, "item_field", c.item_field);
  }
}

void parse_split(const json& j, data::SplitSpec& out) {
  check_keys(j, {"t0", "t1", "valid_fraction", "split_seed"}, "split");
  read(j, "t0", out.t0);
  read(j, "t1", out.t1);
  read(j, "valid_fraction", out.valid_fraction);
  read(j, "split_seed", out.split_seed);
}

void parse_compression(const json& j, CompressionSection& out) {
  check_keys(j,
             {"pattern_count", "embed_dim", "knowledge_dim", "mask",
              "encoder_depth", "encoder_heads", "alpha", "beta", "lambda1",
              "lambda2", "use_dim", "use_vclub", "use_disentangle", "dropout",
              "infonce_temperature", "lr", "weight_decay", "epochs",
              "batch_size", "valid_holdout", "patience", "seed"},
             "compression");
  read(j, "pattern_count", out.pattern_count);
  read(j, "embed_dim", out.embed_dim);
  read(j, "knowledge_dim", out.knowledge_dim);
  if (j.contains("mask")) {
    const json& m = j.at("mask");
    check_keys(m, {"temperature", "stretch_lo", "stretch_hi", "clamp"},
               "compression.mask");
    read(m, "temperature", out.mask.temperature);
    read(m, "stretch_lo", out.mask.stretch_lo);
    read(m, "stretch_hi", out.mask.stretch_hi);
    if (m.contains("clamp")) {
      const auto mode = m.at("clamp").get<std::string>();
      if (mode == "clip")
        out.mask.clamp = model::ClampMode::Clip;
      else if (mode == "tanh")
        out.mask.clamp = model::ClampMode::Tanh;
      else
        throw ConfigError("config: mask.clamp must be 'clip' or 'tanh'");
    }
  }
  read(j, "encoder_depth", out.encoder_depth);
  read(j, "encoder_heads", out.encoder_heads);
  read(j, "alpha", out.alpha);
  read(j, "beta", out.beta);
  read(j, "lambda1", out.lambda1);
  read(j, "lambda2", out.lambda2);
  read(j, "use_dim", out.use_dim);
  read(j, "use_vclub", out.use_vclub);
  read(j, "use_disentangle", out.use_disentangle);
  read(j, "dropout", out.dropout);
  read(j, "infonce_temperature", out.infonce_temperature);
  read(j, "lr", out.lr);
  read(j, "weight_decay", out.weight_decay);
  read(j, "epochs", out.epochs);
  read(j, "batch_size", out.batch_size);
  read(j, "valid_holdout", out.valid_holdout);
  read(j, "patience", out.patience);
  read(j, "seed", out.seed);
}

void parse_backbone(const json& j, model::BackboneConfig& out) {
  check_keys(j,
             {"kind", "embed_dim", "hidden", "cross_depth", "cin_sizes",
              "att_layers", "att_heads", "din_att_hidden", "use_knowledge",
              "knowledge_mode", "knowledge_dim", "pattern_count",
              "adapter_hidden", "item_field"},
             "backbone");
  read(j, "kind", out.kind);
  read(j, "embed_dim", out.embed_dim);
  read(j, "hidden", out.hidden);
  read(j, "cross_depth", out.cross_depth);
  read(j, "cin_sizes", out.cin_sizes);
  read(j, "att_layers", out.att_layers);
  read(j, "att_heads", out.att_heads);
  read(j, "din_att_hidden", out.din_att_hidden);
  read(j, "use_knowledge", out.use_knowledge);
  read(j, "knowledge_mode", out.knowledge_mode);
  read(j, "knowledge_dim", out.knowledge_dim);
  read(j, "pattern_count", out.pattern_count);
  read(j, "adapter_hidden", out.adapter_hidden);
  read(j, "item_field", out.item_field);
}

void parse_train(const json& j, TrainSection& out) {
  check_keys(j,
             {"lr", "weight_decay", "epochs", "batch_size", "patience",
              "grid_search", "lr_grid", "wd_grid", "seed"},
             "train");
  read(j, "lr", out.lr);
  read(j, "weight_decay", out.weight_decay);
  read(j, "epochs", out.epochs);
  read(j, "batch_size", out.batch_size);
  read(j, "patience", out.patience);
  read(j, "grid_search", out.grid_search);
  read(j, "lr_grid", out.lr_grid);
  read(j, "wd_grid", out.wd_grid);
  read(j, "seed", out.seed);
}

void parse_ablation(const json& j, AblationSection& out) {
  check_keys(j, {"k_sweep", "seeds"}, "ablation");
  read(j, "k_sweep", out.k_sweep);
  read(j, "seeds", out.seeds);
}

}  // namespace

void CompressionSection::validate() const {
  if (pattern_count < 1)
    throw ConfigError("compression: pattern_count must be >= 1");
  if (embed_dim < 1 || knowledge_dim < 1)
    throw ConfigError("compression: widths must be >= 1");
  mask.validate();
  if (encoder_depth < 1 || encoder_heads < 1 ||
      embed_dim % encoder_heads != 0)
    throw ConfigError("compression: encoder_heads must divide embed_dim");
  if (alpha < 0 || beta < 0 || lambda1 < 0 || lambda2 < 0)
    throw ConfigError("compression: loss weights must be >= 0");
  if (!(dropout > 0.0 && dropout < 1.0))
    throw ConfigError("compression: dropout must be in (0,1)");
  if (!(infonce_temperature > 0.0))
    throw ConfigError("compression: infonce_temperature must be > 0");
  if (lr <= 0 || weight_decay < 0)
    throw ConfigError("compression: bad optimizer settings");
  if (epochs < 1 || batch_size < 2)
    throw ConfigError("compression: epochs >= 1 and batch_size >= 2 required");
  if (!(valid_holdout > 0.0 && valid_holdout < 1.0))
    throw ConfigError("compression: valid_holdout must be in (0,1)");
  if (patience < 1) throw ConfigError("compression: patience must be >= 1");
}

void TrainSection::validate() const {
  if (lr <= 0 || weight_decay < 0)
    throw ConfigError("train: bad optimizer settings");
  if (epochs < 1 || batch_size < 1)
    throw ConfigError("train: epochs and batch_size must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (grid_search && (lr_grid.empty() || wd_grid.empty()))
    throw ConfigError("train: grid_search needs non-empty grids");
}

void AblationSection::validate() const {
  if (seeds.empty()) throw ConfigError("ablation: seeds must be non-empty");
  for (const int k : k_sweep)
    if (k < 1) throw ConfigError("ablation: k_sweep entries must be >= 1");
}

Config Config::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: parse failure: ") + e.what());
  }
  check_keys(j, {"data", "split", "compression", "backbone", "train",
                 "ablation"},
             "top level");
  Config c;
  if (j.contains("data")) parse_data(j.at("data"), c.data);
  if (j.contains("split")) parse_split(j.at("split"), c.split);
  if (j.contains("compression"))
    parse_compression(j.at("compression"), c.compression);
  if (j.contains("backbone")) parse_backbone(j.at("backbone"), c.backbone);
  if (j.contains("train")) parse_train(j.at("train"), c.train);
  if (j.contains("ablation")) parse_ablation(j.at("ablation"), c.ablation);
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string Config::resolved_json() const {
  json j;
  j["data"]["path"] = data.path;
  j["data"]["schema_path"] = data.schema_path;
  const auto& s = data.synthetic;
  j["data"]["synthetic"] = {
      {"vocab_sizes", s.vocab_sizes},
      {"n_records", s.n_records},
      {"t0", s.t0},
      {"t1", s.t1},
      {"t_end", s.t_end},
      {"invariant_rules", rules_json(s.invariant_rules)},
      {"spurious_rules", rules_json(s.spurious_rules)},
      {"noise_rate", s.noise_rate},
      {"seed", s.seed},
      {"has_history", s.has_history},
      {"max_history_len", s.max_history_len},
      {"user_field", s.user_field},
      {"item_field", s.item_field}};
  j["split"] = {{"t0", split.t0},
                {"t1", split.t1},
                {"valid_fraction", split.valid_fraction},
                {"split_seed", split.split_seed}};
  j["compression"] = {
      {"pattern_count", compression.pattern_count},
      {"embed_dim", compression.embed_dim},
      {"knowledge_dim", compression.knowledge_dim},
      {"mask",
       {{"temperature", compression.mask.temperature},
        {"stretch_lo", compression.mask.stretch_lo},
        {"stretch_hi", compression.mask.stretch_hi},
        {"clamp",
         compression.mask.clamp == model::ClampMode::Clip ? "clip" : "tanh"}}},
      {"encoder_depth", compression.encoder_depth},
      {"encoder_heads", compression.encoder_heads},
      {"alpha", compression.alpha},
      {"beta", compression.beta},
      {"lambda1", compression.lambda1},
      {"lambda2", compression.lambda2},
      {"use_dim", compression.use_dim},
      {"use_vclub", compression.use_vclub},
      {"use_disentangle", compression.use_disentangle},
      {"dropout", compression.dropout},
      {"infonce_temperature", compression.infonce_temperature},
      {"lr", compression.lr},
      {"weight_decay", compression.weight_decay},
      {"epochs", compression.epochs},
      {"batch_size", compression.batch_size},
      {"valid_holdout", compression.valid_holdout},
      {"patience", compression.patience},
      {"seed", compression.seed}};
  j["backbone"] = {{"kind", backbone.kind},
                   {"embed_dim", backbone.embed_dim},
                   {"hidden", backbone.hidden},
                   {"cross_depth", backbone.cross_depth},
                   {"cin_sizes", backbone.cin_sizes},
                   {"att_layers", backbone.att_layers},
                   {"att_heads", backbone.att_heads},
                   {"din_att_hidden", backbone.din_att_hidden},
                   {"use_knowledge", backbone.use_knowledge},
                   {"knowledge_mode", backbone.knowledge_mode},
                   {"knowledge_dim", backbone.knowledge_dim},
                   {"pattern_count", backbone.pattern_count},
                   {"adapter_hidden", backbone.adapter_hidden},
                   {"item_field", backbone.item_field}};
  j["train"] = {{"lr", train.lr},
                {"weight_decay", train.weight_decay},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"patience", train.patience},
                {"grid_search", train.grid_search},
                {"lr_grid", train.lr_grid},
                {"wd_grid", train.wd_grid},
                {"seed", train.seed}};
  j["ablation"] = {{"k_sweep", ablation.k_sweep},
                   {"seeds", ablation.seeds}};
  return j.dump(2);
}

}  // namespace edk::cfg
