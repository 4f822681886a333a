#pragma once

#include <string>
#include <vector>

#include "mdl/model.hpp"
#include "mdl/schema.hpp"

namespace mdl {

struct EvalReport {
  bool regression = false;
  double logloss = 0.0;
  double auc = 0.0;
  double mse = 0.0;
  size_t n = 0;

  std::string summary_line() const;
  std::string kv_block() const;
};

// Score for one instance: sigmoid of the logit for binary tasks, the raw
// output for regression. Label-free test-time refinement happens inside.
double predict_one(const Model& model, const SparseInstance& inst);
std::vector<double> predict_many(const Model& model, const std::vector<SparseInstance>& insts);

// Mann-Whitney AUC with midrank tie handling, O(n log n).
// Requires both classes present.
double auc(const std::vector<double>& scores, const std::vector<double>& labels);

// Mean binary cross-entropy over probability scores, clamped to
// [1e-15, 1 - 1e-15] before the logs.
double logloss_mean(const std::vector<double>& scores, const std::vector<double>& labels);
double mse_mean(const std::vector<double>& preds, const std::vector<double>& labels);

EvalReport evaluate(const Model& model, const std::vector<SparseInstance>& insts);

void write_predictions_csv(const std::string& path, const std::vector<double>& scores);

// Writes W0 and the instance's refined mu^(T) o W^(T) as two CSV blocks with
// field-name headers. Off-diagonal entries are divided by the block's max
// absolute off-diagonal value (1 if all zero); diagonals are emitted as-is.
void dump_dependencies(const Model& model, const SparseInstance& inst,
                       const FieldSchema& schema, const std::string& path);

}  // namespace mdl
