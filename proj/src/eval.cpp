#include "mdl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mdl/dependency.hpp"

namespace mdl {

std::string EvalReport::summary_line() const {
  std::ostringstream os;
  if (regression)
    os << "n=" << n << " mse=" << format_double(mse);
  else
    os << "n=" << n << " logloss=" << format_double(logloss) << " auc=" << format_double(auc);
  return os.str();
}

std::string EvalReport::kv_block() const {
  std::ostringstream os;
  os << "n=" << n << '\n';
  if (regression) {
    os << "mse=" << format_double(mse) << '\n';
  } else {
    os << "logloss=" << format_double(logloss) << '\n';
    os << "auc=" << format_double(auc) << '\n';
  }
  return os.str();
}

double predict_one(const Model& model, const SparseInstance& inst) {
  double out = predict_logit(model, inst);
  return model.cfg.task == TaskKind::kBinary ? sigmoid_scalar(out) : out;
}

std::vector<double> predict_many(const Model& model, const std::vector<SparseInstance>& insts) {
  std::vector<double> scores;
  scores.reserve(insts.size());
  for (const auto& inst : insts) scores.push_back(predict_one(model, inst));
  return scores;
}

double auc(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores and labels differ in length");
  size_t n = scores.size();
  size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0)
      throw std::invalid_argument("auc: labels must be 0 or 1");
    if (y == 1.0) ++pos;
  }
  size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw std::invalid_argument("auc: undefined, labels contain a single class");

  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // rank sum of positives with midranks over score ties
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (size_t t = i; t < j; ++t)
      if (labels[idx[t]] == 1.0) rank_sum += midrank;
    i = j;
  }
  double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double logloss_mean(const std::vector<double>& scores, const std::vector<double>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw std::invalid_argument("logloss_mean: empty or mismatched input");
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    double p = std::min(1.0 - 1e-15, std::max(1e-15, scores[i]));
    sum += labels[i] == 1.0 ? -std::log(p) : -std::log(1.0 - p);
  }
  return sum / static_cast<double>(scores.size());
}

double mse_mean(const std::vector<double>& preds, const std::vector<double>& labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("mse_mean: empty or mismatched input");
  double sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - labels[i];
    sum += d * d;
  }
  return sum / static_cast<double>(preds.size());
}

EvalReport evaluate(const Model& model, const std::vector<SparseInstance>& insts) {
  if (insts.empty()) throw std::invalid_argument("evaluate: empty input");
  std::vector<double> scores = predict_many(model, insts);
  std::vector<double> labels;
  labels.reserve(insts.size());
  for (const auto& inst : insts) labels.push_back(inst.label);
  EvalReport rep;
  rep.n = insts.size();
  rep.regression = model.cfg.task == TaskKind::kRegression;
  if (rep.regression) {
    rep.mse = mse_mean(scores, labels);
  } else {
    rep.logloss = logloss_mean(scores, labels);
    rep.auc = auc(scores, labels);
  }
  return rep;
}

void write_predictions_csv(const std::string& path, const std::vector<double>& scores) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write predictions file: " + path);
  out << "row_id,score\n";
  for (size_t i = 0; i < scores.size(); ++i) out << i << ',' << format_double(scores[i]) << '\n';
  if (!out) throw std::runtime_error("failed writing predictions file: " + path);
}

namespace {

void write_matrix_block(std::ostream& out, const std::string& title, const Mat& w,
                        const std::vector<std::string>& names) {
  double max_abs = 0.0;
  for (int i = 0; i < w.rows; ++i)
    for (int j = 0; j < w.cols; ++j)
      if (i != j) max_abs = std::max(max_abs, std::abs(w.at(i, j)));
  double scale = max_abs > 0.0 ? max_abs : 1.0;

  out << "# " << title << '\n';
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (int i = 0; i < w.rows; ++i) {
    out << names[i];
    for (int j = 0; j < w.cols; ++j) {
      double v = i == j ? w.at(i, j) : w.at(i, j) / scale;
      out << ',' << format_double(v);
    }
    out << '\n';
  }
}

}  // namespace

void dump_dependencies(const Model& model, const SparseInstance& inst,
                       const FieldSchema& schema, const std::string& path) {
  if (schema.content_hash() != model.schema_hash)
    throw std::invalid_argument("dump_dependencies: schema hash mismatch");
  std::vector<std::string> names;
  for (const auto& f : schema.fields) names.push_back(f.name);

  Mat e = embed(inst, model.emb);
  RefineResult r = refine(e, model.w0, model.cfg.T, model.cfg.eta, model.cfg.lambda,
                          model.cfg.mu0_ones);
  Mat weighted = hadamard_colscale(r.mu, r.w);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dependency dump: " + path);
  write_matrix_block(out, "W0", model.w0, names);
  out << '\n';
  write_matrix_block(out, "muT_WT", weighted, names);
  if (!out) throw std::runtime_error("failed writing dependency dump: " + path);
}

}  // namespace mdl
