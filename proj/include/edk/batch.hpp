#ifndef EDK_BATCH_HPP
#define EDK_BATCH_HPP

#include <vector>

#include "edk/data.hpp"

namespace edk::model {

// Dense index view of a set of records. Field ids are flattened into a
// single id space (field i starts at vocab offset i) so one embedding table
// serves all fields.
struct Batch {
  int size = 0;    // instances
  int fields = 0;  // F
  std::vector<int> flat_ids;      // size*fields, (instance, field) order
  std::vector<double> labels;
  std::vector<int64_t> timestamps;
  // History item ids (raw, not offset); ragged via offsets of length size+1.
  std::vector<int> hist_ids;
  std::vector<int> hist_offsets;
};

// Vocab offsets: offset[i] = sum of vocab sizes of fields < i.
std::vector<int> vocab_offsets(const data::DatasetSchema& schema);
int total_vocab(const data::DatasetSchema& schema);

// Validates ids against the schema; throws DataError on violations.
Batch make_batch(const data::Records& records,
                 const data::DatasetSchema& schema,
                 const std::vector<int>& indices);
Batch make_batch(const data::Records& records,
                 const data::DatasetSchema& schema);

}  // namespace edk::model

#endif  // EDK_BATCH_HPP
