#include "edk/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "edk/errors.hpp"
#include "edk/rng.hpp"
#include "json.hpp"

namespace edk::data {

using nlohmann::json;

void DatasetSchema::validate() const {
  if (field_specs.size() < 2)
    throw ConfigError("schema: at least 2 fields required");
  std::vector<std::string> names;
  for (const auto& f : field_specs) {
    if (f.vocab_size < 1)
      throw ConfigError("schema: vocab_size must be >= 1 for field " + f.name);
    names.push_back(f.name);
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end())
    throw ConfigError("schema: field names must be unique");
  if (max_history_len < 0)
    throw ConfigError("schema: max_history_len must be >= 0");
  if (has_history && max_history_len == 0)
    throw ConfigError("schema: has_history requires max_history_len > 0");
}

std::string DatasetSchema::to_json() const {
  json j;
  j["fields"] = json::array();
  for (const auto& f : field_specs)
    j["fields"].push_back({{"name", f.name}, {"vocab_size", f.vocab_size}});
  j["has_history"] = has_history;
  j["max_history_len"] = max_history_len;
  return j.dump(2);
}

DatasetSchema DatasetSchema::from_json(const std::string& text) {
  DatasetSchema s;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
  }
  try {
    for (const auto& f : j.at("fields"))
      s.field_specs.push_back(
          {f.at("name").get<std::string>(), f.at("vocab_size").get<int64_t>()});
    s.has_history = j.value("has_history", false);
    s.max_history_len = j.value("max_history_len", 0);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema: missing field: ") + e.what());
  }
  s.validate();
  return s;
}

uint64_t DatasetSchema::fingerprint() const { return fnv1a64(to_json()); }

void SplitSpec::validate() const {
  if (t0 >= t1) throw ConfigError("split: t0 must be < t1");
  if (valid_fraction <= 0.0 || valid_fraction >= 1.0)
    throw ConfigError("split: valid_fraction must be in (0, 1)");
}

void SyntheticConfig::validate() const {
  if (vocab_sizes.size() < 2)
    throw ConfigError("synthetic: at least 2 fields required");
  if (n_records <= 0) throw ConfigError("synthetic: n_records must be > 0");
  if (!(0 < t0 && t0 < t1 && t1 < t_end))
    throw ConfigError("synthetic: need 0 < t0 < t1 < t_end");
  if (noise_rate < 0.0 || noise_rate > 1.0)
    throw ConfigError("synthetic: noise_rate must be in [0, 1]");
  auto check_rules = [&](const std::vector<LabelRule>& rules,
                         const char* kind) {
    for (const auto& r : rules) {
      if (r.prob < 0.0 || r.prob > 1.0)
        throw ConfigError(std::string("synthetic: ") + kind +
                          " rule probability outside [0, 1]");
      if (r.conjunction.empty())
        throw ConfigError(std::string("synthetic: ") + kind +
                          " rule with empty conjunction");
      for (auto [f, v] : r.conjunction) {
        if (f < 0 || f >= static_cast<int>(vocab_sizes.size()))
          throw ConfigError(std::string("synthetic: ") + kind +
                            " rule references invalid field " +
                            std::to_string(f));
        if (v < 0 || v >= vocab_sizes[f])
          throw ConfigError(std::string("synthetic: ") + kind +
                            " rule references invalid value " +
                            std::to_string(v) + " for field " +
                            std::to_string(f));
      }
    }
  };
  check_rules(invariant_rules, "invariant");
  check_rules(spurious_rules, "spurious");

  // Contradictory rules: identical conjunction assigned twice.
  auto key_of = [](const LabelRule& r) {
    auto c = r.conjunction;
    std::sort(c.begin(), c.end());
    std::string k;
    for (auto [f, v] : c)
      k += std::to_string(f) + ":" + std::to_string(v) + ";";
    return k;
  };
  std::map<std::string, double> seen;
  for (const auto* rules : {&invariant_rules, &spurious_rules})
    for (const auto& r : *rules) {
      auto [it, inserted] = seen.emplace(key_of(r), r.prob);
      if (!inserted)
        throw ConfigError(
            "synthetic: contradictory rules on identical conjunction " +
            key_of(r));
    }
  if (has_history) {
    if (max_history_len <= 0)
      throw ConfigError("synthetic: has_history requires max_history_len > 0");
    if (user_field < 0 || user_field >= static_cast<int>(vocab_sizes.size()) ||
        item_field < 0 || item_field >= static_cast<int>(vocab_sizes.size()) ||
        user_field == item_field)
      throw ConfigError("synthetic: invalid user_field/item_field");
  }
}

DatasetSchema SyntheticConfig::schema() const {
  DatasetSchema s;
  for (size_t i = 0; i < vocab_sizes.size(); ++i)
    s.field_specs.push_back({"field_" + std::to_string(i), vocab_sizes[i]});
  s.has_history = has_history;
  s.max_history_len = max_history_len;
  return s;
}

namespace {

int64_t parse_int(const std::string& tok, int line_no, const char* what) {
  int64_t out = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError("row " + std::to_string(line_no) + ": invalid " + what +
                    " '" + tok + "'");
  return out;
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string expected_header(const DatasetSchema& schema) {
  std::string h;
  for (int i = 0; i < schema.field_count(); ++i)
    h += "field_" + std::to_string(i) + ",";
  h += "label,timestamp";
  if (schema.has_history) h += ",history";
  return h;
}

}  // namespace

Records load_dataset(const std::string& path, const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string want = expected_header(schema);
  if (line != want)
    throw DataError("row 1: header mismatch, expected '" + want + "'");

  const int f = schema.field_count();
  const int base_cols = f + 2;
  const int total_cols = base_cols + (schema.has_history ? 1 : 0);
  Records records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto toks = split_line(line, ',');
    if (static_cast<int>(toks.size()) != total_cols)
      throw DataError("row " + std::to_string(line_no) + ": expected " +
                      std::to_string(total_cols) + " columns, got " +
                      std::to_string(toks.size()));
    InstanceRecord rec;
    rec.field_values.resize(f);
    for (int i = 0; i < f; ++i) {
      int64_t v = parse_int(toks[i], line_no, "field id");
      if (v < 0 || v >= schema.field_specs[i].vocab_size)
        throw DataError("row " + std::to_string(line_no) + ": id " +
                        std::to_string(v) + " out of range for field " +
                        schema.field_specs[i].name);
      rec.field_values[i] = v;
    }
    int64_t label = parse_int(toks[f], line_no, "label");
    if (label != 0 && label != 1)
      throw DataError("row " + std::to_string(line_no) + ": label " +
                      std::to_string(label) + " not in {0,1}");
    rec.label = static_cast<int>(label);
    rec.timestamp = parse_int(toks[f + 1], line_no, "timestamp");
    if (schema.has_history && !toks[f + 2].empty()) {
      // history ids are validated against the item vocab at model time;
      // here only non-negativity is enforced
      for (const auto& tok : split_line(toks[f + 2], '|')) {
        int64_t v = parse_int(tok, line_no, "history id");
        if (v < 0)
          throw DataError("row " + std::to_string(line_no) +
                          ": negative history id");
        rec.history.push_back(v);
      }
      if (static_cast<int>(rec.history.size()) > schema.max_history_len)
        throw DataError("row " + std::to_string(line_no) +
                        ": history longer than max_history_len");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_dataset(const std::string& path, const Records& records,
                   const DatasetSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file: " + path);
  out << expected_header(schema) << "\n";
  for (const auto& rec : records) {
    for (size_t i = 0; i < rec.field_values.size(); ++i)
      out << rec.field_values[i] << ",";
    out << rec.label << "," << rec.timestamp;
    if (schema.has_history) {
      out << ",";
      for (size_t i = 0; i < rec.history.size(); ++i) {
        if (i) out << "|";
        out << rec.history[i];
      }
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed: " + path);
}

Split temporal_split(const Records& records, const SplitSpec& spec) {
  spec.validate();
  if (records.empty()) throw DataError("temporal_split: no records");
  Split split;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.timestamp < spec.t0) {
      split.old_logs.push_back(r);
    } else if (r.timestamp < spec.t1) {
      split.train.push_back(r);
    } else {
      uint64_t h = splitmix64(spec.split_seed ^ static_cast<uint64_t>(i));
      double u = static_cast<double>(h >> 11) * 0x1.0p-53;
      (u < spec.valid_fraction ? split.valid : split.test).push_back(r);
    }
  }
  if (split.old_logs.empty()) throw ConfigError("temporal_split: D_old empty");
  if (split.train.empty()) throw ConfigError("temporal_split: D_train empty");
  if (split.valid.empty()) throw ConfigError("temporal_split: D_valid empty");
  if (split.test.empty()) throw ConfigError("temporal_split: D_test empty");
  return split;
}

Records generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const int f = static_cast<int>(cfg.vocab_sizes.size());
  Rng rng(derive_seed(cfg.seed, "synthetic"));

  std::vector<int64_t> timestamps(cfg.n_records);
  for (auto& t : timestamps)
    t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(cfg.t_end)));
  std::sort(timestamps.begin(), timestamps.end());

  // last <= max_history_len positively labeled items per user, time order
  std::map<int64_t, std::vector<int64_t>> user_history;

  Records records;
  records.reserve(cfg.n_records);
  for (int64_t n = 0; n < cfg.n_records; ++n) {
    InstanceRecord rec;
    rec.timestamp = timestamps[n];
    rec.field_values.resize(f);
    for (int i = 0; i < f; ++i)
      rec.field_values[i] = static_cast<int64_t>(
          rng.uniform_int(static_cast<uint64_t>(cfg.vocab_sizes[i])));

    auto matches = [&](const LabelRule& r) {
      for (auto [fi, v] : r.conjunction)
        if (rec.field_values[fi] != v) return false;
      return true;
    };
    double prob_sum = 0.0;
    int prob_n = 0;
    for (const auto& r : cfg.invariant_rules)
      if (matches(r)) {
        prob_sum += r.prob;
        ++prob_n;
      }
    for (const auto& r : cfg.spurious_rules)
      if (matches(r)) {
        prob_sum += rec.timestamp < cfg.t1 ? r.prob : 1.0 - r.prob;
        ++prob_n;
      }
    double p = prob_n == 0 ? 0.5 : prob_sum / prob_n;
    int label = rng.bernoulli(p) ? 1 : 0;
    if (cfg.noise_rate > 0.0 && rng.bernoulli(cfg.noise_rate))
      label = 1 - label;
    rec.label = label;

    if (cfg.has_history) {
      auto& hist = user_history[rec.field_values[cfg.user_field]];
      rec.history = hist;
      if (label == 1) {
        hist.push_back(rec.field_values[cfg.item_field]);
        if (static_cast<int>(hist.size()) > cfg.max_history_len)
          hist.erase(hist.begin());
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace edk::data
