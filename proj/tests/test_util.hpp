#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "mdl/dependency.hpp"
#include "mdl/mat.hpp"
#include "mdl/rng.hpp"
#include "mdl/schema.hpp"

namespace mdl::testutil {

inline Mat random_mat(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (double& x : m.data) x = rng.uniform(lo, hi);
  return m;
}

// Central finite difference of f with respect to one scalar slot.
inline double central_diff(double* x, const std::function<double()>& f, double h = 1e-5) {
  double orig = *x;
  *x = orig + h;
  double fp = f();
  *x = orig - h;
  double fm = f();
  *x = orig;
  return (fp - fm) / (2.0 * h);
}

inline bool grad_close(double analytic, double fd, double rel = 1e-4, double abs_tol = 1e-7) {
  double scale = std::max(std::abs(analytic), std::abs(fd));
  return std::abs(analytic - fd) <= std::max(abs_tol, rel * scale);
}

// Root-finding oracle for the simplex projection: sum_k max(mu_hat_k - b, 0)
// is continuous and non-increasing in b, so bisection pins the shift without
// any sorting. Independent of the closed-form route under test.
inline Mat simplex_oracle_bisect(const Mat& mu_hat, double lambda, int iters = 200) {
  int m = mu_hat.rows;
  double lo = mu_hat.data[0], hi = mu_hat.data[0];
  for (double v : mu_hat.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo -= lambda;  // sum at lo is >= m*lambda - lambda >= lambda > 0 for m >= 2
  auto excess = [&](double b) {
    double s = 0.0;
    for (double v : mu_hat.data) s += std::max(v - b, 0.0);
    return s - lambda;
  };
  for (int it = 0; it < iters; ++it) {
    double mid = 0.5 * (lo + hi);
    if (excess(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double beta = 0.5 * (lo + hi);
  Mat mu(m, 1);
  for (int i = 0; i < m; ++i) mu.data[i] = std::max(mu_hat.data[i] - beta, 0.0);
  // repair the budget exactly: spread the residual over the support
  double sum = 0.0;
  int support = 0;
  for (double v : mu.data) {
    sum += v;
    if (v > 0.0) ++support;
  }
  if (support > 0) {
    double fix = (lambda - sum) / support;
    for (double& v : mu.data)
      if (v > 0.0) v += fix;
  }
  return mu;
}

// Brute-force active-set oracle: enumerate every candidate support, solve the
// equality-constrained projection on it, keep the KKT-feasible solution.
// Exponential in m; use for m <= 12.
inline Mat simplex_oracle_enumerate(const Mat& mu_hat, double lambda) {
  int m = mu_hat.rows;
  if (m > 20) throw std::invalid_argument("enumeration oracle limited to small m");
  Mat best;
  double best_obj = 0.0;
  bool found = false;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    double sum = 0.0;
    int size = 0;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) {
        sum += mu_hat.data[i];
        ++size;
      }
    double beta = (sum - lambda) / size;
    bool ok = true;
    Mat mu(m, 1);
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        mu.data[i] = mu_hat.data[i] - beta;
        if (mu.data[i] < 0.0) ok = false;  // primal feasibility
      } else if (mu_hat.data[i] - beta > 0.0) {
        ok = false;  // dual feasibility: alpha_k = beta - mu_hat_k >= 0 off support
      }
    }
    if (!ok) continue;
    double obj = 0.0;
    for (int i = 0; i < m; ++i) {
      double d = mu_hat.data[i] - mu.data[i];
      obj += d * d;
    }
    if (!found || obj < best_obj) {
      best = mu;
      best_obj = obj;
      found = true;
    }
  }
  if (!found) throw std::logic_error("enumeration oracle found no feasible support");
  return best;
}

// KKT certificate for a projection result, every condition to `tol`:
// stationarity + complementary slackness on the support (mu_k = mu_hat_k - beta),
// non-negative multiplier off it (mu_hat_k - beta <= 0), primal feasibility,
// and the exact budget.
inline bool kkt_holds(const Mat& mu_hat, double lambda, const ProjectionResult& res,
                      double tol = 1e-12) {
  int m = mu_hat.rows;
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    double mu = res.mu.data[i];
    if (mu < -tol) return false;  // primal: mu >= 0
    if (mu > 0.0) {
      if (std::abs(mu - (mu_hat.data[i] - res.beta)) > tol) return false;
    } else {
      if (mu_hat.data[i] - res.beta > tol) return false;
    }
    sum += mu;
  }
  return std::abs(sum - lambda) <= tol * std::max(1.0, lambda);
}

// Dependency loss in the per-field summation form, written independently of
// the matrix-form implementation.
inline double dep_loss_sum_form(const Mat& e, const Mat& w, const Mat& mu, double lambda) {
  int k = e.rows, m = e.cols;
  double total = 0.0;
  for (int f = 0; f < m; ++f) {
    double sq = 0.0;
    for (int r = 0; r < k; ++r) {
      double combo = 0.0;
      for (int i = 0; i < m; ++i)
        if (i != f) combo += w.at(i, f) * e.at(r, i);
      double resid = e.at(r, f) - combo;
      sq += resid * resid;
    }
    total += mu.data[f] * 0.5 * sq;
  }
  return total / lambda;
}

// Tiny all-categorical schema for model-level tests: m fields of d features.
inline FieldSchema toy_schema(int m, int d) {
  FieldSchema schema;
  for (int f = 0; f < m; ++f) {
    FieldSpec spec;
    spec.name = "f" + std::to_string(f);
    spec.kind = FieldKind::kCategorical;
    spec.min_count = 1;
    for (int j = 0; j + 1 < d; ++j) spec.vocab["v" + std::to_string(j)] = j;
    spec.oov_index = d - 1;
    spec.cardinality = d;
    schema.fields.push_back(std::move(spec));
  }
  return schema;
}

inline SparseInstance random_instance(const FieldSchema& schema, Rng& rng, double label) {
  SparseInstance inst;
  for (const auto& f : schema.fields)
    inst.feature.push_back(static_cast<double>(rng.bounded(f.cardinality)));
  inst.label = label;
  return inst;
}

}  // namespace mdl::testutil
