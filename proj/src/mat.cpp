#include "mdl/mat.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mdl {

Mat::Mat(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
  if (static_cast<size_t>(r) * c != data.size())
    throw std::invalid_argument("Mat: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape());
}

Mat Mat::col(std::vector<double> v) {
  int n = static_cast<int>(v.size());
  return Mat(n, 1, std::move(v));
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rws) {
  int r = static_cast<int>(rws.size());
  int c = r > 0 ? static_cast<int>(rws.begin()->size()) : 0;
  Mat m(r, c);
  int i = 0;
  for (const auto& row : rws) {
    if (static_cast<int>(row.size()) != c)
      throw std::invalid_argument("Mat::from_rows: ragged rows");
    int j = 0;
    for (double v : row) m.at(i, j++) = v;
    ++i;
  }
  return m;
}

Mat Mat::filled(int r, int c, double v) {
  Mat m(r, c);
  m.fill(v);
  return m;
}

bool Mat::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Mat::assign_zero(int r, int c) {
  rows = r;
  cols = c;
  data.assign(static_cast<size_t>(r) * c, 0.0);
}

void Mat::fill(double v) {
  for (double& x : data) x = v;
}

std::string Mat::shape() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void shape_error(const char* op, const Mat& a, const Mat& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch (" + a.shape() + " vs " +
                              b.shape() + ")");
}

void shape_error(const char* op, const Mat& a) {
  throw std::invalid_argument(std::string(op) + ": bad shape (" + a.shape() + ")");
}

namespace {

void resize_out(Mat& out, int r, int c) {
  out.rows = r;
  out.cols = c;
  out.data.resize(static_cast<size_t>(r) * c);
}

}  // namespace

void add_into(const Mat& a, const Mat& b, Mat& out) {
  if (!a.same_shape(b)) shape_error("add", a, b);
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
}

void sub_into(const Mat& a, const Mat& b, Mat& out) {
  if (!a.same_shape(b)) shape_error("sub", a, b);
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
}

void sub_scaled_into(const Mat& a, const Mat& b, double c, Mat& out) {
  if (!a.same_shape(b)) shape_error("sub_scaled", a, b);
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - c * b.data[i];
}

void scale_into(const Mat& a, double c, Mat& out) {
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = c * a.data[i];
}

void hadamard_into(const Mat& a, const Mat& b, Mat& out) {
  if (!a.same_shape(b)) shape_error("hadamard", a, b);
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
}

void relu_into(const Mat& a, Mat& out) {
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
}

void sigmoid_into(const Mat& a, Mat& out) {
  resize_out(out, a.rows, a.cols);
  for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = sigmoid_scalar(a.data[i]);
}

void matmul_into(const Mat& a, const Mat& b, Mat& out) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  resize_out(out, a.rows, b.cols);
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
    double* orow = &out.data[static_cast<size_t>(i) * b.cols];
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
}

void matmul_ta_into(const Mat& a, const Mat& b, Mat& out) {
  if (a.rows != b.rows) shape_error("matmul_ta", a, b);
  resize_out(out, a.cols, b.cols);
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = &a.data[static_cast<size_t>(k) * a.cols];
    const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
    for (int i = 0; i < a.cols; ++i) {
      double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = &out.data[static_cast<size_t>(i) * b.cols];
      for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
}

void matmul_tb_into(const Mat& a, const Mat& b, Mat& out) {
  if (a.cols != b.cols) shape_error("matmul_tb", a, b);
  resize_out(out, a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i) * a.cols];
    double* orow = &out.data[static_cast<size_t>(i) * b.rows];
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = &b.data[static_cast<size_t>(j) * b.cols];
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      orow[j] = s;
    }
  }
}

void gram_into(const Mat& e, Mat& out) { matmul_ta_into(e, e, out); }

void colscale_into(const Mat& mu, const Mat& m, Mat& out) {
  if (mu.cols != 1 || mu.rows != m.cols) shape_error("hadamard_colscale", mu, m);
  resize_out(out, m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    const double* mrow = &m.data[static_cast<size_t>(i) * m.cols];
    double* orow = &out.data[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) orow[j] = mu.data[j] * mrow[j];
  }
}

void col_sqnorm_into(const Mat& m, Mat& out) {
  resize_out(out, m.cols, 1);
  std::fill(out.data.begin(), out.data.end(), 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* mrow = &m.data[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) out.data[j] += mrow[j] * mrow[j];
  }
}

void fix_diag_into(const Mat& m, double v, Mat& out) {
  if (m.rows != m.cols) shape_error("fix_diag", m);
  resize_out(out, m.rows, m.cols);
  out.data = m.data;
  for (int i = 0; i < m.rows; ++i) out.at(i, i) = v;
}

void flatten_into(const Mat& m, Mat& out) {
  resize_out(out, m.rows * m.cols, 1);
  out.data = m.data;
}

void concat_rows_into(const std::vector<const Mat*>& parts, Mat& out) {
  int total = 0;
  for (const Mat* p : parts) {
    if (p->cols != 1) shape_error("concat_rows", *p);
    total += p->rows;
  }
  resize_out(out, total, 1);
  size_t off = 0;
  for (const Mat* p : parts) {
    std::copy(p->data.begin(), p->data.end(), out.data.begin() + off);
    off += p->data.size();
  }
}

Mat add(const Mat& a, const Mat& b) { Mat o; add_into(a, b, o); return o; }
Mat sub(const Mat& a, const Mat& b) { Mat o; sub_into(a, b, o); return o; }
Mat scale(const Mat& a, double c) { Mat o; scale_into(a, c, o); return o; }
Mat hadamard(const Mat& a, const Mat& b) { Mat o; hadamard_into(a, b, o); return o; }
Mat relu(const Mat& a) { Mat o; relu_into(a, o); return o; }
Mat sigmoid(const Mat& a) { Mat o; sigmoid_into(a, o); return o; }
Mat matmul(const Mat& a, const Mat& b) { Mat o; matmul_into(a, b, o); return o; }
Mat gram(const Mat& e) { Mat o; gram_into(e, o); return o; }
Mat hadamard_colscale(const Mat& mu, const Mat& m) { Mat o; colscale_into(mu, m, o); return o; }
Mat col_sqnorm(const Mat& m) { Mat o; col_sqnorm_into(m, o); return o; }
Mat fix_diag(const Mat& m, double v) { Mat o; fix_diag_into(m, v, o); return o; }
Mat flatten(const Mat& m) { Mat o; flatten_into(m, o); return o; }

double bilinear(const Mat& a, const Mat& phi, const Mat& b) {
  if (a.cols != 1 || b.cols != 1 || phi.rows != a.rows || phi.cols != b.rows)
    shape_error("bilinear", phi, a);
  double s = 0.0;
  for (int i = 0; i < phi.rows; ++i) {
    const double* prow = &phi.data[static_cast<size_t>(i) * phi.cols];
    double inner = 0.0;
    for (int j = 0; j < phi.cols; ++j) inner += prow[j] * b.data[j];
    s += a.data[i] * inner;
  }
  return s;
}

double dot(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) shape_error("dot", a, b);
  double s = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

void axpy(double c, const Mat& src, Mat& out) {
  if (!src.same_shape(out)) shape_error("axpy", src, out);
  for (size_t i = 0; i < src.data.size(); ++i) out.data[i] += c * src.data[i];
}

double frob_norm_sq(const Mat& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return s;
}

double sigmoid_scalar(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// max(z,0) - z*y + log(1 + exp(-|z|)); overflow-free for any logit.
double bce_with_logit(double logit, double y) {
  double m = logit > 0.0 ? logit : 0.0;
  return m - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace mdl
