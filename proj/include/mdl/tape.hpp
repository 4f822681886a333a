#pragma once

#include <cstdint>
#include <vector>

#include "mdl/mat.hpp"

namespace mdl {

/// Handle to a tape node.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

// Generalized Jacobian of the simplex projection at a point with the given
// active set: on the support, g - mean(g over support); zero elsewhere.
Mat backward_simplex_projection(const Mat& upstream, const std::vector<int>& support);

// Gradient through the diagonal-pinning projection: the output diagonal is
// constant, so its gradient is dropped; off-diagonal passes through.
Mat backward_diag_projection(const Mat& upstream);

// One column selection for the embedding gather: column `col` of V scaled by
// `scale` (1.0 for one-hot fields, the raw value for numeric-raw fields).
struct EmbedCol {
  int col = 0;
  double scale = 1.0;
};

// Define-by-run reverse-mode tape over Mat. Forward values are computed as
// ops are recorded; backward() walks the nodes once in reverse. Leaves may
// reference external parameter/gradient storage so per-instance graphs can
// scatter straight into shared accumulators. reset() keeps node buffers so
// an identically-shaped graph re-records without reallocating.
class Tape {
 public:
  Var leaf(const Mat* value, Mat* grad_sink);  // external storage, not copied
  Var constant(Mat value);                     // untracked
  Var input(Mat value);                        // tape-owned, tracked

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var sub_scaled(Var a, Var b, double c);  // a - c*b
  Var scale(Var a, double c);
  Var hadamard(Var a, Var b);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var matmul(Var a, Var b);
  Var matmul_ta(Var a, Var b);  // a^T b
  Var gram(Var e);              // e^T e
  Var hadamard_colscale(Var mu, Var m);
  Var col_sqnorm(Var m);
  Var fix_diag(Var m, double v);
  Var simplex_project(Var mu_hat, double lambda);
  Var concat_rows(const std::vector<Var>& parts);
  Var flatten(Var m);
  Var bilinear(Var a, Var phi, Var b);
  // All pairs (i,j), i<j, lexicographic; phi_stack is (P*k) x k with the
  // k x k block for pair p at rows [p*k, (p+1)*k).
  Var pairwise_bilinear(Var e, Var phi_stack);
  Var dense(Var w, Var x, Var b);  // w*x + b
  Var embed_cols(const Mat* v, Mat* v_grad, std::vector<EmbedCol> cols);
  Var dot(Var a, Var b);
  Var bce_with_logit(Var logit, double label);
  Var squared_error(Var out, double label);
  Var sum_all(Var a);

  const Mat& value(Var v) const;
  // Gradient of a tracked node; zero-filled if the node does not reach the
  // loss. Valid after backward().
  const Mat& grad(Var v);

  // Reverse sweep from a scalar node; seeds d(loss)/d(loss) = seed.
  void backward(Var loss, double seed = 1.0);

  void reset();
  int size() const { return used_; }

 private:
  enum class Op : uint8_t {
    kLeaf, kConst, kAdd, kSub, kSubScaled, kScale, kHadamard, kRelu,
    kSigmoid, kMatmul, kMatmulTA, kGram, kColScale, kColSqnorm, kFixDiag,
    kSimplexProj, kConcatRows, kFlatten, kBilinear, kPairwiseBilinear,
    kDense, kEmbedCols, kDot, kBceWithLogit, kSquaredError, kSumAll,
  };

  struct Node {
    Op op = Op::kConst;
    int a = -1, b = -1, c = -1;
    double scalar = 0.0;  // op parameter: scale factor, diag value, lambda, label
    Mat value;
    const Mat* ext_value = nullptr;
    Mat* ext_grad = nullptr;      // external leaf gradient (same shape as value)
    Mat* scatter_sink = nullptr;  // embed_cols gradient target (shape of V)
    Mat grad;
    bool grad_set = false;
    bool tracked = true;
    std::vector<int> support;     // simplex projection active set
    std::vector<EmbedCol> cols;   // embedding gather
    std::vector<int> parts;       // concat operands
  };

  Node& fresh(Op op);
  Var finish();
  const Mat& val(int i) const;
  // Gradient accumulation target for node i; nullptr if untracked.
  Mat* gsink(int i);
  void check(Var v, const char* op) const;

  std::vector<Node> nodes_;
  int used_ = 0;
  Mat tmp_, tmp2_;  // backward scratch
};

}  // namespace mdl
