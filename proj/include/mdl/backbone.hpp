#pragma once

#include <cstdint>
#include <vector>

#include "mdl/mat.hpp"

namespace mdl {

constexpr int kMlpHiddenWidth = 100;
constexpr int kMlpHiddenLayers = 3;

struct MlpLayer {
  Mat w;
  Mat b;
};

/// Pairwise bilinear interaction matrices plus the MLP head. The pair blocks
/// are stacked into one (P*k) x k matrix, lexicographic in (i, j), i < j.
struct BackboneParams {
  int m = 0;
  int k = 0;
  Mat phi;                      // (m(m-1)/2 * k) x k
  std::vector<MlpLayer> mlp;    // 3 hidden ReLU layers + linear output

  int pair_count() const { return m * (m - 1) / 2; }
  int input_width() const { return pair_count() + m * m; }
};

// Phi ~ normal(0, phi_scale^2); hidden weights He-initialized, biases zero.
BackboneParams init_backbone(int m, int k, uint64_t seed, double phi_scale = 0.01);

// e_i^T Phi^{i,j} e_j for all pairs i < j, lexicographic; length m(m-1)/2.
Mat pairwise_features(const Mat& e, const Mat& phi_stack);

// vec((mu/lambda) o W): column k of W scaled by mu[k]/lambda, flattened.
Mat dependency_block(const Mat& w, const Mat& mu, double lambda);

// MLP over [pairwise features; dependency block]; returns the raw output
// (a logit for binary tasks).
double backbone_forward(const Mat& e, const Mat& dep_block, const BackboneParams& params);
double backbone_forward(const Mat& e, const Mat& w_t, const Mat& mu_t,
                        const BackboneParams& params, double lambda);

// Binary: stable cross-entropy on the logit. Regression: squared error.
double task_loss(double output, double y, bool regression);

}  // namespace mdl
