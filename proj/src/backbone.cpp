#include "mdl/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mdl/rng.hpp"

namespace mdl {

BackboneParams init_backbone(int m, int k, uint64_t seed, double phi_scale) {
  if (m < 2) throw std::invalid_argument("backbone needs at least 2 fields");
  if (k < 1) throw std::invalid_argument("backbone needs embedding dimension >= 1");
  BackboneParams p;
  p.m = m;
  p.k = k;
  Rng phi_rng(mix_seed(seed, 0xf1));
  p.phi.assign_zero(p.pair_count() * k, k);
  for (double& x : p.phi.data) x = phi_rng.normal(0.0, phi_scale);

  Rng mlp_rng(mix_seed(seed, 0x317));
  int in = p.input_width();
  std::vector<int> widths(kMlpHiddenLayers, kMlpHiddenWidth);
  widths.push_back(1);
  for (int out : widths) {
    MlpLayer layer;
    layer.w.assign_zero(out, in);
    double stddev = std::sqrt(2.0 / in);
    for (double& x : layer.w.data) x = mlp_rng.normal(0.0, stddev);
    layer.b.assign_zero(out, 1);
    p.mlp.push_back(std::move(layer));
    in = out;
  }
  return p;
}

Mat pairwise_features(const Mat& e, const Mat& phi_stack) {
  int k = e.rows, m = e.cols;
  int pairs = m * (m - 1) / 2;
  if (phi_stack.cols != k || phi_stack.rows != pairs * k)
    shape_error("pairwise_features", e, phi_stack);
  Mat out(pairs, 1);
  int p = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j, ++p) {
      const double* phi = &phi_stack.data[static_cast<size_t>(p) * k * k];
      double s = 0.0;
      for (int r = 0; r < k; ++r) {
        double inner = 0.0;
        for (int c = 0; c < k; ++c) inner += phi[static_cast<size_t>(r) * k + c] * e.at(c, j);
        s += e.at(r, i) * inner;
      }
      out.data[p] = s;
    }
  }
  return out;
}

Mat dependency_block(const Mat& w, const Mat& mu, double lambda) {
  Mat scaled = hadamard_colscale(mu, w);
  Mat block;
  scale_into(scaled, 1.0 / lambda, block);
  return flatten(block);
}

double backbone_forward(const Mat& e, const Mat& dep_block, const BackboneParams& params) {
  Mat pf = pairwise_features(e, params.phi);
  Mat x;
  concat_rows_into({&pf, &dep_block}, x);
  if (x.rows != params.input_width())
    throw std::invalid_argument("backbone input width " + std::to_string(x.rows) +
                                " does not match parameters (" +
                                std::to_string(params.input_width()) + ")");
  Mat h;
  for (size_t l = 0; l < params.mlp.size(); ++l) {
    matmul_into(params.mlp[l].w, x, h);
    add_into(h, params.mlp[l].b, x);
    if (l + 1 < params.mlp.size()) relu_into(x, x);
  }
  return x.data[0];
}

double backbone_forward(const Mat& e, const Mat& w_t, const Mat& mu_t,
                        const BackboneParams& params, double lambda) {
  return backbone_forward(e, dependency_block(w_t, mu_t, lambda), params);
}

double task_loss(double output, double y, bool regression) {
  if (regression) {
    double d = output - y;
    return d * d;
  }
  if (y != 0.0 && y != 1.0)
    throw std::invalid_argument("binary task label must be 0 or 1, got " + std::to_string(y));
  return bce_with_logit(output, y);
}

}  // namespace mdl
