#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mdl/backbone.hpp"
#include "mdl/embedding.hpp"
#include "mdl/mat.hpp"
#include "mdl/schema.hpp"

namespace mdl {

enum class TaskKind { kBinary, kRegression };
enum class TrainMode { kMdl, kNoDep, kGlobalDep };
enum class OptimizerKind { kAdam, kAdagrad };

std::string task_name(TaskKind t);
std::string mode_name(TrainMode m);
std::string optimizer_name(OptimizerKind o);
TaskKind task_from_name(const std::string& s);
TrainMode mode_from_name(const std::string& s);
OptimizerKind optimizer_from_name(const std::string& s);

struct TrainConfig {
  int k = 10;
  int T = 4;
  double eta = 0.1;          // inner-loop step size
  double gamma = 1e-3;       // outer learning rate
  double lambda = 1.0;       // simplex budget
  int batch_size = 2048;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int epochs = 100;
  int patience = 5;
  uint64_t seed = 1;
  TaskKind task = TaskKind::kBinary;
  TrainMode mode = TrainMode::kMdl;
  double zeta = 0.1;         // global-dep regularization weight
  bool first_order = false;  // stop gradients at the inner-loop boundary
  bool mu0_ones = false;     // start mu at 1_m instead of (lambda/m) 1_m
  double init_scale = 0.01;
  double clip_norm = 100.0;  // 0 disables clipping
  int threads = 0;           // 0 = hardware concurrency

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_kv() const;
  void apply_kv(const std::string& key, const std::string& value);
  static TrainConfig from_kv(const std::map<std::string, std::string>& kv);
};

// Read a flat key=value config file ('#' comments, blank lines allowed).
std::map<std::string, std::string> read_kv_file(const std::string& path);

struct OptState {
  bool present = false;
  OptimizerKind kind = OptimizerKind::kAdam;
  long step = 0;
  std::vector<Mat> m1;  // Adam first moment / Adagrad accumulator
  std::vector<Mat> m2;  // Adam second moment
};

struct Model {
  uint64_t schema_hash = 0;
  EmbeddingState emb;
  Mat w0;  // global dependency matrix, diag pinned to -1
  BackboneParams backbone;
  TrainConfig cfg;
  OptState opt;
  double best_val = 0.0;

  int field_count() const { return emb.field_count(); }
};

// Fresh model with V ~ N(0, scale^2), W0 = diag(-1), backbone initialized.
Model init_model(const FieldSchema& schema, const TrainConfig& cfg);

// Parameter blocks in the fixed checkpoint order:
// V, W0, Phi, then per MLP layer its weight and bias.
std::vector<Mat*> param_blocks(Model& model);
std::vector<const Mat*> param_blocks(const Model& model);
std::vector<std::string> param_block_names(const Model& model);

constexpr uint32_t kCheckpointVersion = 1;

// Atomic write (temp file + rename). Round trip is byte-identical.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// Raw model output for one instance (logit for binary tasks), following the
// inference procedure: refine from W0 under the dependency loss, then the
// backbone forward. Mode no_dep zeroes the dependency block; global_dep
// feeds (W0, mu0) without refinement.
double predict_logit(const Model& model, const SparseInstance& inst);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace mdl
