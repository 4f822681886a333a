#include "mdl/dependency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mdl {

ProjectionResult simplex_project(const Mat& mu_hat, double lambda) {
  if (mu_hat.cols != 1 || mu_hat.rows < 1) shape_error("simplex_project", mu_hat);
  if (!(lambda > 0.0))
    throw std::invalid_argument("simplex_project: lambda must be positive, got " +
                                std::to_string(lambda));
  if (!mu_hat.all_finite())
    throw std::invalid_argument("simplex_project: non-finite input");

  const int m = mu_hat.rows;
  std::vector<double> sorted(mu_hat.data);
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());

  // K = max{ i : sorted[i-1] - (prefix_sum(i) - lambda)/i > 0 }. The i = 1
  // candidate is always valid (the term equals lambda > 0).
  int k_active = 1;
  double prefix = sorted[0];
  double beta = (prefix - lambda) / 1.0;
  for (int i = 2; i <= m; ++i) {
    prefix += sorted[i - 1];
    double cand = (prefix - lambda) / i;
    if (sorted[i - 1] - cand > 0.0) {
      k_active = i;
      beta = cand;
    }
  }

  ProjectionResult res;
  res.K = k_active;
  res.beta = beta;
  res.mu.assign_zero(m, 1);
  res.support.reserve(k_active);
  for (int k = 0; k < m; ++k) {
    if (mu_hat.data[k] > beta) {
      res.mu.data[k] = mu_hat.data[k] - beta;
      res.support.push_back(k);
    }
  }
  return res;
}

double dependency_loss(const Mat& e, const Mat& w, const Mat& mu, double lambda) {
  if (!(lambda > 0.0))
    throw std::invalid_argument("dependency_loss: lambda must be positive");
  if (w.rows != w.cols || w.rows != e.cols) shape_error("dependency_loss", e, w);
  if (mu.cols != 1 || mu.rows != e.cols) shape_error("dependency_loss", mu, e);
  Mat ew = matmul(e, w);
  Mat sq = col_sqnorm(ew);
  return dot(mu, sq) / (2.0 * lambda);
}

Mat inner_step_w(const Mat& e, const Mat& w, const Mat& mu, double eta, double lambda) {
  Mat ew = matmul(e, w);
  Mat grad;                      // E^T (E W), m x m
  matmul_ta_into(e, ew, grad);
  Mat scaled = hadamard_colscale(mu, grad);
  Mat stepped;
  sub_scaled_into(w, scaled, eta / lambda, stepped);
  return fix_diag(stepped, -1.0);
}

Mat inner_step_mu(const Mat& e, const Mat& w_new, const Mat& mu, double eta, double lambda) {
  Mat ew = matmul(e, w_new);
  Mat sq = col_sqnorm(ew);
  Mat mu_hat;
  sub_scaled_into(mu, sq, eta / 2.0, mu_hat);
  return simplex_project(mu_hat, lambda).mu;
}

Mat initial_mu(int m, double lambda, bool mu0_ones) {
  return Mat::filled(m, 1, mu0_ones ? 1.0 : lambda / m);
}

RefineResult refine(const Mat& e, const Mat& w0, int steps, double eta, double lambda,
                    bool mu0_ones) {
  if (steps < 0) throw std::invalid_argument("refine: negative step count");
  RefineResult r;
  r.w = w0;
  r.mu = initial_mu(e.cols, lambda, mu0_ones);
  r.loss_trace.reserve(steps + 1);
  r.loss_trace.push_back(dependency_loss(e, r.w, r.mu, lambda));
  for (int t = 0; t < steps; ++t) {
    r.w = inner_step_w(e, r.w, r.mu, eta, lambda);
    r.mu = inner_step_mu(e, r.w, r.mu, eta, lambda);
    r.loss_trace.push_back(dependency_loss(e, r.w, r.mu, lambda));
  }
  return r;
}

}  // namespace mdl
