#include "mdl/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "mdl/dependency.hpp"
#include "mdl/eval.hpp"

namespace mdl {

namespace {
constexpr size_t kChunkInstances = 256;  // reduction granularity, not tied to threads
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kAdagradEps = 1e-10;
}  // namespace

void ModelGrads::match(const Model& model) {
  auto params = param_blocks(model);
  blocks.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    blocks[i].assign_zero(params[i]->rows, params[i]->cols);
}

void ModelGrads::zero() {
  for (Mat& b : blocks) std::fill(b.data.begin(), b.data.end(), 0.0);
}

void ModelGrads::add(const ModelGrads& other) {
  for (size_t i = 0; i < blocks.size(); ++i) axpy(1.0, other.blocks[i], blocks[i]);
}

void ModelGrads::scale_all(double c) {
  for (Mat& b : blocks)
    for (double& x : b.data) x *= c;
}

double ModelGrads::global_norm() const {
  double sq = 0.0;
  for (const Mat& b : blocks) sq += frob_norm_sq(b);
  return std::sqrt(sq);
}

bool ModelGrads::all_finite() const {
  for (const Mat& b : blocks)
    if (!b.all_finite()) return false;
  return true;
}

void clip_gradients(ModelGrads& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double norm = grads.global_norm();
  if (norm > max_norm) grads.scale_all(max_norm / norm);
}

namespace {

void ensure_opt_state(const std::vector<Mat*>& params, OptState& state, bool second_moment) {
  if (!state.present) {
    state.present = true;
    state.step = 0;
    state.m1.clear();
    state.m2.clear();
    for (const Mat* p : params) state.m1.emplace_back(p->rows, p->cols);
    if (second_moment)
      for (const Mat* p : params) state.m2.emplace_back(p->rows, p->cols);
  }
}

void check_grads_finite(const ModelGrads& grads) {
  if (!grads.all_finite())
    throw std::invalid_argument("optimizer: non-finite gradients");
}

}  // namespace

void adam_step(const std::vector<Mat*>& params, const ModelGrads& grads, OptState& state,
               double gamma) {
  check_grads_finite(grads);
  state.kind = OptimizerKind::kAdam;
  ensure_opt_state(params, state, true);
  ++state.step;
  double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    Mat& m = state.m1[i];
    Mat& v = state.m2[i];
    const Mat& g = grads.blocks[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      m.data[j] = kAdamBeta1 * m.data[j] + (1.0 - kAdamBeta1) * g.data[j];
      v.data[j] = kAdamBeta2 * v.data[j] + (1.0 - kAdamBeta2) * g.data[j] * g.data[j];
      double mhat = m.data[j] / bc1;
      double vhat = v.data[j] / bc2;
      p.data[j] -= gamma * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

void adagrad_step(const std::vector<Mat*>& params, const ModelGrads& grads, OptState& state,
                  double gamma) {
  check_grads_finite(grads);
  state.kind = OptimizerKind::kAdagrad;
  ensure_opt_state(params, state, false);
  ++state.step;
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    Mat& acc = state.m1[i];
    const Mat& g = grads.blocks[i];
    for (size_t j = 0; j < p.data.size(); ++j) {
      acc.data[j] += g.data[j] * g.data[j];
      p.data[j] -= gamma * g.data[j] / (std::sqrt(acc.data[j]) + kAdagradEps);
    }
  }
}

void optimizer_step(Model& model, const ModelGrads& grads, double gamma) {
  auto params = param_blocks(model);
  if (model.cfg.optimizer == OptimizerKind::kAdam)
    adam_step(params, grads, model.opt, gamma);
  else
    adagrad_step(params, grads, model.opt, gamma);
  for (int i = 0; i < model.w0.rows; ++i) model.w0.at(i, i) = -1.0;  // Pi_w
}

namespace {

Var dep_block_graph(Tape& t, Var w, Var mu, double lambda) {
  Var scaled = t.hadamard_colscale(mu, w);
  Var norm = t.scale(scaled, 1.0 / lambda);
  return t.flatten(norm);
}

}  // namespace

Var instance_loss_graph(Tape& t, const Model& model, ModelGrads& sinks,
                        const SparseInstance& inst) {
  const TrainConfig& cfg = model.cfg;
  const int m = model.field_count();
  const double lambda = cfg.lambda;
  if (cfg.task == TaskKind::kBinary && inst.label != 0.0 && inst.label != 1.0)
    throw std::invalid_argument("binary task label must be 0 or 1, got " +
                                std::to_string(inst.label));

  Var e = t.embed_cols(&model.emb.v, &sinks.v(), embed_columns(inst, model.emb));

  Var dep;
  Var w0v;   // shared W0 leaf for modes that read it twice
  Var mu0v;
  switch (cfg.mode) {
    case TrainMode::kMdl: {
      if (cfg.first_order && cfg.T > 0) {
        // stop-gradient at the inner-loop boundary: the refined pair enters
        // the graph as constants
        RefineResult r =
            refine(t.value(e), model.w0, cfg.T, cfg.eta, lambda, cfg.mu0_ones);
        Var wt = t.constant(std::move(r.w));
        Var mut = t.constant(std::move(r.mu));
        dep = dep_block_graph(t, wt, mut, lambda);
      } else {
        Var w = t.leaf(&model.w0, &sinks.w0());
        Var mu = t.constant(initial_mu(m, lambda, cfg.mu0_ones));
        for (int step = 0; step < cfg.T; ++step) {
          Var ew = t.matmul(e, w);
          Var gw = t.matmul_ta(e, ew);  // E^T (E W), keeps the step O(k m^2)
          Var sc = t.hadamard_colscale(mu, gw);
          Var wh = t.sub_scaled(w, sc, cfg.eta / lambda);
          w = t.fix_diag(wh, -1.0);
          Var z = t.matmul(e, w);
          Var r = t.col_sqnorm(z);
          Var mh = t.sub_scaled(mu, r, cfg.eta / 2.0);
          mu = t.simplex_project(mh, lambda);
        }
        dep = dep_block_graph(t, w, mu, lambda);
      }
      break;
    }
    case TrainMode::kNoDep:
      dep = t.constant(Mat(m * m, 1));
      break;
    case TrainMode::kGlobalDep: {
      w0v = t.leaf(&model.w0, &sinks.w0());
      mu0v = t.constant(initial_mu(m, lambda, cfg.mu0_ones));
      dep = dep_block_graph(t, w0v, mu0v, lambda);
      break;
    }
  }

  Var phi = t.leaf(&model.backbone.phi, &sinks.phi());
  Var pf = t.pairwise_bilinear(e, phi);
  Var x = t.concat_rows({pf, dep});
  int layers = static_cast<int>(model.backbone.mlp.size());
  for (int l = 0; l < layers; ++l) {
    Var w = t.leaf(&model.backbone.mlp[l].w, &sinks.mlp_w(l));
    Var b = t.leaf(&model.backbone.mlp[l].b, &sinks.mlp_b(l));
    x = t.dense(w, x, b);
    if (l + 1 < layers) x = t.relu(x);
  }

  Var loss = cfg.task == TaskKind::kBinary ? t.bce_with_logit(x, inst.label)
                                           : t.squared_error(x, inst.label);

  if (cfg.mode == TrainMode::kGlobalDep) {
    // objective ell + zeta * L with the dependency loss at (W0, mu0)
    Var ew = t.matmul(e, w0v);
    Var sq = t.col_sqnorm(ew);
    Var dl = t.dot(mu0v, sq);
    loss = t.add(loss, t.scale(dl, cfg.zeta / (2.0 * lambda)));
  }
  return loss;
}

namespace {

struct ChunkCtx {
  Tape tape;
  ModelGrads grads;
  double loss_sum = 0.0;
};

// Fixed-size chunks keep the floating-point reduction order a function of
// the batch alone, so results do not depend on the thread count.
double chunked_batch_gradients(const Model& model,
                               const std::vector<const SparseInstance*>& batch,
                               ModelGrads& grads, int threads,
                               std::vector<ChunkCtx>& pool) {
  size_t n = batch.size();
  size_t nchunks = (n + kChunkInstances - 1) / kChunkInstances;
  if (pool.size() < nchunks) pool.resize(nchunks);
  double weight = 1.0 / static_cast<double>(n);

  auto run_chunk = [&](size_t c) {
    ChunkCtx& ctx = pool[c];
    if (ctx.grads.blocks.empty()) ctx.grads.match(model);
    ctx.grads.zero();
    ctx.loss_sum = 0.0;
    size_t begin = c * kChunkInstances;
    size_t end = std::min(n, begin + kChunkInstances);
    for (size_t i = begin; i < end; ++i) {
      ctx.tape.reset();
      Var loss = instance_loss_graph(ctx.tape, model, ctx.grads, *batch[i]);
      ctx.loss_sum += ctx.tape.value(loss).data[0];
      ctx.tape.backward(loss, weight);
    }
  };

  int workers = std::min<int>(threads, static_cast<int>(nchunks));
  if (workers <= 1) {
    for (size_t c = 0; c < nchunks; ++c) run_chunk(c);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> ts;
    ts.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      ts.emplace_back([&] {
        for (;;) {
          size_t c = next.fetch_add(1);
          if (c >= nchunks) break;
          run_chunk(c);
        }
      });
    }
    for (auto& th : ts) th.join();
  }

  double total = 0.0;
  for (size_t c = 0; c < nchunks; ++c) {
    grads.add(pool[c].grads);
    total += pool[c].loss_sum;
  }
  return total * weight;
}

}  // namespace

double batch_gradients(const Model& model, const std::vector<const SparseInstance*>& batch,
                       ModelGrads& grads, int threads) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  std::vector<ChunkCtx> pool;
  return chunked_batch_gradients(model, batch, grads, threads, pool);
}

ModelGrads outer_gradients(const std::vector<SparseInstance>& batch, const Model& model,
                           double* mean_loss) {
  std::vector<const SparseInstance*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& inst : batch) ptrs.push_back(&inst);
  ModelGrads grads;
  grads.match(model);
  double loss = batch_gradients(model, ptrs, grads, 1);
  if (mean_loss) *mean_loss = loss;
  return grads;
}

Model train(const DatasetSplit& data, const FieldSchema& schema, const TrainConfig& cfg,
            std::ostream* log) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty train split");

  Model model = init_model(schema, cfg);
  int threads = cfg.threads > 0 ? cfg.threads
                                : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;

  ModelGrads grads;
  grads.match(model);
  std::vector<ChunkCtx> pool;

  const bool regression = cfg.task == TaskKind::kRegression;
  const bool have_val = !data.validation.empty();
  Model best;
  double best_sel = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  std::vector<double> val_labels;
  val_labels.reserve(data.validation.size());
  for (const auto& inst : data.validation) val_labels.push_back(inst.label);

  std::vector<const SparseInstance*> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<size_t> order = epoch_order(data.train.size(), cfg.seed, epoch);
    std::vector<BatchRange> ranges = batch_ranges(data.train.size(), cfg.batch_size);

    double loss_sum = 0.0;
    for (size_t bi = 0; bi < ranges.size(); ++bi) {
      batch.clear();
      for (size_t i = ranges[bi].begin; i < ranges[bi].end; ++i)
        batch.push_back(&data.train[order[i]]);
      grads.zero();
      double loss = chunked_batch_gradients(model, batch, grads, threads, pool);
      if (!std::isfinite(loss)) throw DivergenceError(epoch, bi);
      clip_gradients(grads, cfg.clip_norm);
      optimizer_step(model, grads, cfg.gamma);
      loss_sum += loss * static_cast<double>(batch.size());
    }
    double train_loss = loss_sum / static_cast<double>(data.train.size());

    double val_loss = std::nan("");
    double val_metric = std::nan("");
    if (have_val) {
      std::vector<double> scores = predict_many(model, data.validation);
      if (regression) {
        val_loss = mse_mean(scores, val_labels);
        val_metric = val_loss;
      } else {
        val_loss = logloss_mean(scores, val_labels);
        val_metric = auc(scores, val_labels);
      }
    }
    double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) {
      (*log) << epoch << ',' << format_double(train_loss) << ',' << format_double(val_loss)
             << ',' << format_double(val_metric) << ',' << format_double(seconds) << '\n';
      log->flush();
    }

    if (have_val) {
      double sel = val_loss;  // smallest logloss / MSE wins
      if (sel < best_sel) {
        best_sel = sel;
        best = model;
        best.best_val = sel;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= cfg.patience) {
        break;
      }
    }
  }

  if (have_val && std::isfinite(best_sel)) return best;
  model.best_val = std::nan("");
  return model;
}

}  // namespace mdl
