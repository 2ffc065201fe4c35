#ifndef EDK_PIPELINE_HPP
#define EDK_PIPELINE_HPP

#include <memory>
#include <string>
#include <vector>

#include "edk/backbones.hpp"
#include "edk/checkpoint.hpp"
#include "edk/config.hpp"
#include "edk/data.hpp"
#include "edk/encoder.hpp"
#include "edk/regularizers.hpp"

namespace edk::pipe {

using ad::Matrix;

struct Prepared {
  data::DatasetSchema schema;
  data::Records records;
  data::Split split;
};

// Materializes the dataset (synthetic or file) and the temporal split.
Prepared prepare_data(const cfg::Config& config);

struct StepLog {
  int epoch = 0;
  int step = 0;  // global step index
  double total = 0, ce = 0, dim = 0, vclub = 0, dis = 0, l0 = 0;
};

struct EpochLog {
  int epoch = 0;
  double total = 0, ce = 0, dim = 0, vclub = 0, dis = 0, l0 = 0;
  double holdout = 0;  // l_compression on the held-out slice of D_old
};

struct CompressResult {
  ckpt::Checkpoint kb;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
};

// Stage one: trains the knowledge base on D_old and returns the frozen
// extractor+encoder parameters plus the loss curves.
CompressResult compress(const data::Records& d_old,
                        const data::DatasetSchema& schema,
                        const cfg::Config& config);

// Frozen KB rebuilt from a checkpoint; serves per-instance knowledge.
class KnowledgeService {
 public:
  KnowledgeService(const ckpt::Checkpoint& kb,
                   const data::DatasetSchema& schema);

  // Rows align with `records`. c: N x d_k; encoded patterns: (N*K) x d_k.
  Matrix abbreviated(const data::Records& records) const;
  Matrix patterns_encoded(const data::Records& records) const;
  // Eval-mode mask, (N*F) x K.
  Matrix eval_mask(const data::Records& records) const;
  // Mean-pooled memorization embedding per instance, N x d.
  Matrix pooled_input(const data::Records& records) const;

  int knowledge_dim() const { return enc_cfg_.knowledge_dim; }
  int pattern_count() const { return ext_cfg_.pattern_count; }
  int field_count() const { return schema_.field_count(); }
  const ckpt::Checkpoint& checkpoint() const { return ckpt_; }

 private:
  ckpt::Checkpoint ckpt_;
  data::DatasetSchema schema_;
  model::ExtractorConfig ext_cfg_;
  model::EncoderConfig enc_cfg_;
  nn::ParameterStore store_;
  std::unique_ptr<model::KnowledgeBase> kb_;
};

struct TrainResult {
  ckpt::Checkpoint model;
  double best_valid_auc = 0;
  int best_epoch = 0;
  double lr = 0;            // selected values (grid or fixed)
  double weight_decay = 0;
  std::vector<double> valid_auc_per_epoch;  // selected cell
};

// Stage two: trains one backbone on D_train with the frozen KB (or without,
// when kb is null), early-stopped on validation AUC.
TrainResult train_backbone(const data::Split& split,
                           const data::DatasetSchema& schema,
                           const KnowledgeService* kb,
                           const cfg::Config& config);

struct EvalReport {
  double auc = 0;
  double logloss = 0;
  int n = 0;
  uint64_t seed = 0;
  std::string config_json;
};

EvalReport evaluate(const ckpt::Checkpoint& model, const KnowledgeService* kb,
                    const data::Records& records,
                    const data::DatasetSchema& schema);

struct AblationRow {
  std::string cell;  // full | wo_disentangled | wo_essential | wo_both | k=N
  int k = 0;
  uint64_t seed = 0;
  double auc = 0;
  double logloss = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;     // one per (cell, seed)
  std::vector<AblationRow> summary;  // one per cell, mean over seeds
};

std::string ablation_csv(const std::vector<AblationRow>& rows);

// Principle ablation (4 cells) plus the K sweep, each over ablation.seeds.
AblationTable ablate(const cfg::Config& config);

struct PatternStats {
  std::vector<long> histogram;  // index = mask cardinality, 0..F
  long total = 0;               // K * |D|
};

// Writes histogram.csv and vectors.csv under out_dir and returns the
// histogram. vectors.csv holds |D| pooled-input rows plus |D|*K pattern
// vectors.
PatternStats pattern_stats(const KnowledgeService& kb,
                           const data::Records& records,
                           const std::string& out_dir);

}  // namespace edk::pipe

#endif  // EDK_PIPELINE_HPP
