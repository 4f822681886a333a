#pragma once

#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "mdl/model.hpp"
#include "mdl/tape.hpp"

namespace mdl {

/// Gradient (or moment) storage mirroring param_blocks() order and shapes.
struct ModelGrads {
  std::vector<Mat> blocks;

  void match(const Model& model);
  void zero();
  void add(const ModelGrads& other);
  void scale_all(double c);
  double global_norm() const;
  bool all_finite() const;

  Mat& v() { return blocks[0]; }
  Mat& w0() { return blocks[1]; }
  Mat& phi() { return blocks[2]; }
  const Mat& v() const { return blocks[0]; }
  const Mat& w0() const { return blocks[1]; }
  const Mat& phi() const { return blocks[2]; }
  Mat& mlp_w(int layer) { return blocks[3 + 2 * layer]; }
  Mat& mlp_b(int layer) { return blocks[4 + 2 * layer]; }
};

// Adam: beta1 0.9, beta2 0.999, eps 1e-8, bias correction.
void adam_step(const std::vector<Mat*>& params, const ModelGrads& grads, OptState& state,
               double gamma);
// Adagrad: squared-gradient accumulator, eps 1e-10.
void adagrad_step(const std::vector<Mat*>& params, const ModelGrads& grads, OptState& state,
                  double gamma);

// Dispatches to the configured optimizer and re-pins diag(W0) = -1 after the
// update.
void optimizer_step(Model& model, const ModelGrads& grads, double gamma);

// Scales all gradients so the global L2 norm is at most max_norm; 0 disables.
void clip_gradients(ModelGrads& grads, double max_norm);

// Records one instance's loss on the tape: embed, T refinement steps (per the
// configured mode), backbone, task loss. Leaf gradients land in `sinks` when
// backward runs. Returns the scalar loss node.
Var instance_loss_graph(Tape& tape, const Model& model, ModelGrads& sinks,
                        const SparseInstance& inst);

// Mean loss over a batch; mean gradients are ADDED into `grads` (call zero()
// first). Deterministic for a fixed batch regardless of thread count: the
// batch is cut into fixed-size chunks accumulated independently and reduced
// in chunk order.
double batch_gradients(const Model& model, const std::vector<const SparseInstance*>& batch,
                       ModelGrads& grads, int threads);

// Exact reverse-mode outer gradients through the unrolled inner loop (or the
// first-order approximation when the config asks for it).
ModelGrads outer_gradients(const std::vector<SparseInstance>& batch, const Model& model,
                           double* mean_loss = nullptr);

struct DivergenceError : std::runtime_error {
  DivergenceError(int epoch, size_t batch_index)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch_index)),
        epoch(epoch),
        batch_index(batch_index) {}
  int epoch;
  size_t batch_index;
};

// Full training loop: per-epoch shuffled batches, optimizer updates through
// the unrolled graph, validation-based early stopping, best model returned.
// The log stream (if given) receives one line per epoch:
//   epoch,train_loss,val_loss,val_auc_or_mse,seconds
Model train(const DatasetSplit& data, const FieldSchema& schema, const TrainConfig& cfg,
            std::ostream* log = nullptr);

}  // namespace mdl
