#ifndef EDK_DATA_HPP
#define EDK_DATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace edk::data {

struct FieldSpec {
  std::string name;
  int64_t vocab_size = 0;
};

struct DatasetSchema {
  std::vector<FieldSpec> field_specs;
  bool has_history = false;
  int max_history_len = 0;

  int field_count() const { return static_cast<int>(field_specs.size()); }
  void validate() const;  // throws ConfigError

  std::string to_json() const;
  static DatasetSchema from_json(const std::string& text);
  // FNV-1a over the canonical JSON serialization.
  uint64_t fingerprint() const;
};

struct InstanceRecord {
  std::vector<int64_t> field_values;
  int label = 0;
  int64_t timestamp = 0;
  std::vector<int64_t> history;  // item ids; only when schema.has_history
};

using Records = std::vector<InstanceRecord>;

struct SplitSpec {
  int64_t t0 = 0;
  int64_t t1 = 0;
  double valid_fraction = 0.5;
  uint64_t split_seed = 0;

  void validate() const;
};

struct Split {
  Records old_logs;   // t <  t0   (knowledge-base construction)
  Records train;      // t0 <= t < t1
  Records valid;      // t >= t1, hashed into validation
  Records test;       // t >= t1, remainder
};

// One label rule: records matching every (field, value) pair of the
// conjunction get label probability `prob`.
struct LabelRule {
  std::vector<std::pair<int, int64_t>> conjunction;
  double prob = 0.5;
};

struct SyntheticConfig {
  std::vector<int64_t> vocab_sizes;   // length F
  int64_t n_records = 0;
  int64_t t0 = 0;                     // suggested old/train boundary
  int64_t t1 = 0;                     // spurious-rule flip point
  int64_t t_end = 0;                  // timestamps drawn from [0, t_end)
  std::vector<LabelRule> invariant_rules;  // stable across time
  std::vector<LabelRule> spurious_rules;   // prob flips to 1-prob at t1
  double noise_rate = 0.0;
  uint64_t seed = 0;
  bool has_history = false;
  int max_history_len = 0;
  int user_field = 0;  // history bookkeeping key
  int item_field = 1;  // history item ids come from this field's vocab

  void validate() const;
  DatasetSchema schema() const;
};

// CSV round trip. Header: field_0,...,field_{F-1},label,timestamp[,history];
// history is a '|'-separated id list (possibly empty).
Records load_dataset(const std::string& path, const DatasetSchema& schema);
void write_dataset(const std::string& path, const Records& records,
                   const DatasetSchema& schema);

// Global-timestamp split. Post-t1 records go to valid/test by a seeded hash
// of the record index. Throws ConfigError naming any empty partition.
Split temporal_split(const Records& records, const SplitSpec& spec);

Records generate_synthetic(const SyntheticConfig& cfg);

}  // namespace edk::data

#endif  // EDK_DATA_HPP
