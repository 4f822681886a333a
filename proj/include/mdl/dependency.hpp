#pragma once

#include <vector>

#include "mdl/mat.hpp"

namespace mdl {

/// Solution of the Euclidean projection onto {mu >= 0, sum(mu) = lambda},
/// together with the KKT certificate (active set, multiplier).
struct ProjectionResult {
  Mat mu;                    // projected vector, m x 1
  int K = 0;                 // active-set size
  double beta = 0.0;         // optimal shift multiplier
  std::vector<int> support;  // indices with mu[k] > 0, ascending
};

// Closed-form projection: sort descending, find the largest prefix whose
// shifted entries stay positive, shift and clip. O(m log m).
ProjectionResult simplex_project(const Mat& mu_hat, double lambda);

// (1/(2*lambda)) * <mu o (E W), E W>, the weighted reconstruction error of
// each field's embedding from the other fields.
double dependency_loss(const Mat& e, const Mat& w, const Mat& mu, double lambda);

// One projected-gradient step on W:  Pi_w(W - (eta/lambda) * mu o (E^T E W)).
// The product is evaluated as E^T (E W) so the step stays O(k m^2).
Mat inner_step_w(const Mat& e, const Mat& w, const Mat& mu, double eta, double lambda);

// One projected-gradient step on mu against the already-updated W:
// Pi_simplex(mu - (eta/2) * per-column squared norms of E W_new).
Mat inner_step_mu(const Mat& e, const Mat& w_new, const Mat& mu, double eta, double lambda);

struct RefineResult {
  Mat w;                     // W^(T)
  Mat mu;                    // mu^(T)
  std::vector<double> loss_trace;  // loss at step 0..T
};

// T alternating steps (W first, then mu) from W0 and mu^(0); mu^(0) is the
// uniform budget split (lambda/m) unless mu0_ones asks for the all-ones start.
RefineResult refine(const Mat& e, const Mat& w0, int steps, double eta, double lambda,
                    bool mu0_ones = false);

Mat initial_mu(int m, double lambda, bool mu0_ones = false);

}  // namespace mdl
