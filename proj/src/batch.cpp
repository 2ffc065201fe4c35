#include "edk/batch.hpp"

#include <string>

#include "edk/errors.hpp"

namespace edk::model {

std::vector<int> vocab_offsets(const data::DatasetSchema& schema) {
  std::vector<int> offs(schema.field_specs.size(), 0);
  int acc = 0;
  for (std::size_t f = 0; f < schema.field_specs.size(); ++f) {
    offs[f] = acc;
    acc += static_cast<int>(schema.field_specs[f].vocab_size);
  }
  return offs;
}

int total_vocab(const data::DatasetSchema& schema) {
  int acc = 0;
  for (const auto& fs : schema.field_specs)
    acc += static_cast<int>(fs.vocab_size);
  return acc;
}

Batch make_batch(const data::Records& records,
                 const data::DatasetSchema& schema,
                 const std::vector<int>& indices) {
  const int F = schema.field_count();
  const auto offs = vocab_offsets(schema);

  Batch b;
  b.size = static_cast<int>(indices.size());
  b.fields = F;
  b.flat_ids.reserve(indices.size() * static_cast<std::size_t>(F));
  b.labels.reserve(indices.size());
  b.timestamps.reserve(indices.size());
  b.hist_offsets.reserve(indices.size() + 1);
  b.hist_offsets.push_back(0);

  for (const int idx : indices) {
    if (idx < 0 || idx >= static_cast<int>(records.size())) {
      throw DataError("make_batch: record index " + std::to_string(idx) +
                      " out of range");
    }
    const auto& rec = records[static_cast<std::size_t>(idx)];
    if (static_cast<int>(rec.field_values.size()) != F) {
      throw DataError("make_batch: record " + std::to_string(idx) + " has " +
                      std::to_string(rec.field_values.size()) +
                      " fields, schema expects " + std::to_string(F));
    }
    for (int f = 0; f < F; ++f) {
      const int64_t v = rec.field_values[static_cast<std::size_t>(f)];
      const int64_t cap = schema.field_specs[static_cast<std::size_t>(f)].vocab_size;
      if (v < 0 || v >= cap) {
        throw DataError("make_batch: record " + std::to_string(idx) +
                        " field " + std::to_string(f) + " id " +
                        std::to_string(v) + " outside vocab [0, " +
                        std::to_string(cap) + ")");
      }
      b.flat_ids.push_back(offs[static_cast<std::size_t>(f)] +
                           static_cast<int>(v));
    }
    b.labels.push_back(static_cast<double>(rec.label));
    b.timestamps.push_back(rec.timestamp);
    if (schema.has_history) {
      // Range checks against the item vocab happen at model time; the schema
      // does not pin which field the history ids index.
      for (const int64_t h : rec.history) {
        if (h < 0) {
          throw DataError("make_batch: record " + std::to_string(idx) +
                          " has negative history id " + std::to_string(h));
        }
        b.hist_ids.push_back(static_cast<int>(h));
      }
    }
    b.hist_offsets.push_back(static_cast<int>(b.hist_ids.size()));
  }
  return b;
}

Batch make_batch(const data::Records& records,
                 const data::DatasetSchema& schema) {
  std::vector<int> idx(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) idx[i] = static_cast<int>(i);
  return make_batch(records, schema, idx);
}

}  // namespace edk::model
