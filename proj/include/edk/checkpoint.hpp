#ifndef EDK_CHECKPOINT_HPP
#define EDK_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "edk/nn.hpp"

namespace edk::ckpt {

using ad::Matrix;

struct NamedMatrix {
  std::string name;
  Matrix value;
};

// Single-file container: magic, JSON manifest (names, shapes, offsets,
// per-array CRC32, schema fingerprint, config snapshot), then raw f64
// little-endian payload in row-major order.
struct Checkpoint {
  int version = 1;
  std::string kind;  // "knowledge_base" or "backbone"
  uint64_t schema_fingerprint = 0;
  std::string config_json;  // resolved-config snapshot
  std::vector<NamedMatrix> params;
};

void save(const std::string& path, const Checkpoint& c);
// Verifies magic, manifest shape consistency, and checksums.
Checkpoint load(const std::string& path);

// Parameters whose names start with `prefix`; empty prefix takes all.
std::vector<NamedMatrix> collect(const nn::ParameterStore& store,
                                 const std::string& prefix = "");
// Copies values into same-named store parameters; shapes must match.
void assign(nn::ParameterStore& store, const std::vector<NamedMatrix>& params);

}  // namespace edk::ckpt

#endif  // EDK_CHECKPOINT_HPP
