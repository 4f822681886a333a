#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace mdl {

// Row-major dense matrix of 64-bit floats. Column vectors are n x 1.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> d);

  static Mat col(std::vector<double> v);
  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rws);
  static Mat filled(int r, int c, double v);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  int size() const { return rows * cols; }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;

  // Resize and zero-fill, reusing capacity where possible.
  void assign_zero(int r, int c);
  void fill(double v);
  std::string shape() const;  // e.g. "3x4"
};

// Shape-checked kernels. The *_into forms write into `out` (which may not
// alias inputs) and reuse its storage; value-returning wrappers allocate.
void add_into(const Mat& a, const Mat& b, Mat& out);
void sub_into(const Mat& a, const Mat& b, Mat& out);
// out = a - c*b
void sub_scaled_into(const Mat& a, const Mat& b, double c, Mat& out);
void scale_into(const Mat& a, double c, Mat& out);
void hadamard_into(const Mat& a, const Mat& b, Mat& out);
void relu_into(const Mat& a, Mat& out);
void sigmoid_into(const Mat& a, Mat& out);
void matmul_into(const Mat& a, const Mat& b, Mat& out);
// out = a^T * b
void matmul_ta_into(const Mat& a, const Mat& b, Mat& out);
// out = a * b^T
void matmul_tb_into(const Mat& a, const Mat& b, Mat& out);
// out = e^T e
void gram_into(const Mat& e, Mat& out);
// Scale column k of m by mu[k]; mu is a length-cols column vector.
void colscale_into(const Mat& mu, const Mat& m, Mat& out);
// out[k] = squared L2 norm of column k, as a cols x 1 vector.
void col_sqnorm_into(const Mat& m, Mat& out);
// Copy with the diagonal forced to `v`; m must be square.
void fix_diag_into(const Mat& m, double v, Mat& out);
// Reshape to a (rows*cols) x 1 column vector, row-major order.
void flatten_into(const Mat& m, Mat& out);
void concat_rows_into(const std::vector<const Mat*>& parts, Mat& out);

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double c);
Mat hadamard(const Mat& a, const Mat& b);
Mat relu(const Mat& a);
Mat sigmoid(const Mat& a);
Mat matmul(const Mat& a, const Mat& b);
Mat gram(const Mat& e);
Mat hadamard_colscale(const Mat& mu, const Mat& m);
Mat col_sqnorm(const Mat& m);
Mat fix_diag(const Mat& m, double v);
Mat flatten(const Mat& m);

// a^T Phi b for column vectors a (k), b (k) and Phi (k x k).
double bilinear(const Mat& a, const Mat& phi, const Mat& b);
double dot(const Mat& a, const Mat& b);
// out += c * src
void axpy(double c, const Mat& src, Mat& out);
double frob_norm_sq(const Mat& m);

// Numerically stable scalar helpers shared by losses and metrics.
double sigmoid_scalar(double z);
double bce_with_logit(double logit, double y);

[[noreturn]] void shape_error(const char* op, const Mat& a, const Mat& b);
[[noreturn]] void shape_error(const char* op, const Mat& a);

}  // namespace mdl
