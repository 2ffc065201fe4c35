#ifndef EDK_CONFIG_HPP
#define EDK_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "edk/backbones.hpp"
#include "edk/data.hpp"
#include "edk/extractor.hpp"

namespace edk::cfg {

// Dataset source: a CSV path with a schema file, or an inline synthetic
// generator spec (used when path is empty).
struct DataSection {
  std::string path;
  std::string schema_path;
  data::SyntheticConfig synthetic;

  bool use_synthetic() const { return path.empty(); }
};

struct CompressionSection {
  int pattern_count = 20;  // K
  int embed_dim = 16;      // d
  int knowledge_dim = 8;   // d_k
  model::MaskSettings mask;
  int encoder_depth = 3;
  int encoder_heads = 3;
  double alpha = 1.0;
  double beta = 1.0;
  double lambda1 = 0.1;
  double lambda2 = 0.01;
  bool use_dim = true;
  bool use_vclub = true;
  bool use_disentangle = true;
  double dropout = 0.1;             // contrastive view dropout rho
  double infonce_temperature = 0.5; // tau
  double lr = 3e-4;
  double weight_decay = 1e-5;
  int epochs = 30;
  int batch_size = 256;
  double valid_holdout = 0.1;  // slice of D_old for the plateau check
  int patience = 3;
  uint64_t seed = 1;

  void validate() const;
};

struct TrainSection {
  double lr = 1e-3;
  double weight_decay = 1e-5;
  int epochs = 30;
  int batch_size = 256;
  int patience = 3;
  bool grid_search = false;
  std::vector<double> lr_grid = {1e-4, 3e-4, 5e-4, 1e-3};
  std::vector<double> wd_grid = {1e-4, 3e-4, 5e-4, 5e-5, 3e-5, 1e-5};
  uint64_t seed = 1;

  void validate() const;
};

struct AblationSection {
  std::vector<int> k_sweep = {5, 10, 15, 20, 25};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

struct Config {
  DataSection data;
  data::SplitSpec split;
  CompressionSection compression;
  model::BackboneConfig backbone;
  TrainSection train;
  AblationSection ablation;

  // Strict parse: unknown keys raise ConfigError. Absent sections and keys
  // take the defaults above.
  static Config from_json_text(const std::string& text);
  static Config from_file(const std::string& path);

  // Every default materialized; what pipeline runs embed and snapshot.
  std::string resolved_json() const;
};

}  // namespace edk::cfg

#endif  // EDK_CONFIG_HPP
