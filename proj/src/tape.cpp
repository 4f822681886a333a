#include "mdl/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "mdl/dependency.hpp"

namespace mdl {

Mat backward_simplex_projection(const Mat& upstream, const std::vector<int>& support) {
  if (upstream.cols != 1) shape_error("backward_simplex_projection", upstream);
  if (support.empty())
    throw std::invalid_argument("backward_simplex_projection: empty active set");
  Mat out(upstream.rows, 1);
  double mean = 0.0;
  for (int k : support) mean += upstream.data[k];
  mean /= static_cast<double>(support.size());
  for (int k : support) out.data[k] = upstream.data[k] - mean;
  return out;
}

Mat backward_diag_projection(const Mat& upstream) {
  if (upstream.rows != upstream.cols) shape_error("backward_diag_projection", upstream);
  Mat out = upstream;
  for (int i = 0; i < out.rows; ++i) out.at(i, i) = 0.0;
  return out;
}

namespace {

void acc(Mat& dst, const Mat& src) {
  if (!dst.same_shape(src)) shape_error("grad accumulate", dst, src);
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void acc_scaled(Mat& dst, const Mat& src, double c) {
  if (!dst.same_shape(src)) shape_error("grad accumulate", dst, src);
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += c * src.data[i];
}

int pair_count(int m) { return m * (m - 1) / 2; }

}  // namespace

Tape::Node& Tape::fresh(Op op) {
  if (used_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
  Node& n = nodes_[used_];
  n.op = op;
  n.a = n.b = n.c = -1;
  n.scalar = 0.0;
  n.ext_value = nullptr;
  n.ext_grad = nullptr;
  n.scatter_sink = nullptr;
  n.grad_set = false;
  n.tracked = true;
  n.support.clear();
  n.cols.clear();
  n.parts.clear();
  return n;
}

Var Tape::finish() { return Var{used_++}; }

const Mat& Tape::val(int i) const {
  const Node& n = nodes_[i];
  return n.ext_value ? *n.ext_value : n.value;
}

void Tape::check(Var v, const char* op) const {
  if (!v.valid() || v.i >= used_)
    throw std::invalid_argument(std::string(op) + ": invalid tape handle");
}

Mat* Tape::gsink(int i) {
  Node& n = nodes_[i];
  if (!n.tracked) return nullptr;
  if (n.ext_grad) return n.ext_grad;
  if (!n.grad_set) {
    const Mat& v = val(i);
    n.grad.assign_zero(v.rows, v.cols);
    n.grad_set = true;
  }
  return &n.grad;
}

Var Tape::leaf(const Mat* value, Mat* grad_sink) {
  Node& n = fresh(Op::kLeaf);
  n.ext_value = value;
  n.ext_grad = grad_sink;
  n.tracked = grad_sink != nullptr;
  return finish();
}

Var Tape::constant(Mat value) {
  Node& n = fresh(Op::kConst);
  n.value = std::move(value);
  n.tracked = false;
  return finish();
}

Var Tape::input(Mat value) {
  Node& n = fresh(Op::kLeaf);
  n.value = std::move(value);
  return finish();
}

Var Tape::add(Var a, Var b) {
  check(a, "add"); check(b, "add");
  Node& n = fresh(Op::kAdd);
  n.a = a.i; n.b = b.i;
  add_into(val(a.i), val(b.i), n.value);
  return finish();
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub"); check(b, "sub");
  Node& n = fresh(Op::kSub);
  n.a = a.i; n.b = b.i;
  sub_into(val(a.i), val(b.i), n.value);
  return finish();
}

Var Tape::sub_scaled(Var a, Var b, double c) {
  check(a, "sub_scaled"); check(b, "sub_scaled");
  Node& n = fresh(Op::kSubScaled);
  n.a = a.i; n.b = b.i; n.scalar = c;
  sub_scaled_into(val(a.i), val(b.i), c, n.value);
  return finish();
}

Var Tape::scale(Var a, double c) {
  check(a, "scale");
  Node& n = fresh(Op::kScale);
  n.a = a.i; n.scalar = c;
  scale_into(val(a.i), c, n.value);
  return finish();
}

Var Tape::hadamard(Var a, Var b) {
  check(a, "hadamard"); check(b, "hadamard");
  Node& n = fresh(Op::kHadamard);
  n.a = a.i; n.b = b.i;
  hadamard_into(val(a.i), val(b.i), n.value);
  return finish();
}

Var Tape::relu(Var a) {
  check(a, "relu");
  Node& n = fresh(Op::kRelu);
  n.a = a.i;
  relu_into(val(a.i), n.value);
  return finish();
}

Var Tape::sigmoid(Var a) {
  check(a, "sigmoid");
  Node& n = fresh(Op::kSigmoid);
  n.a = a.i;
  sigmoid_into(val(a.i), n.value);
  return finish();
}

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul"); check(b, "matmul");
  Node& n = fresh(Op::kMatmul);
  n.a = a.i; n.b = b.i;
  matmul_into(val(a.i), val(b.i), n.value);
  return finish();
}

Var Tape::matmul_ta(Var a, Var b) {
  check(a, "matmul_ta"); check(b, "matmul_ta");
  Node& n = fresh(Op::kMatmulTA);
  n.a = a.i; n.b = b.i;
  matmul_ta_into(val(a.i), val(b.i), n.value);
  return finish();
}

Var Tape::gram(Var e) {
  check(e, "gram");
  Node& n = fresh(Op::kGram);
  n.a = e.i;
  gram_into(val(e.i), n.value);
  return finish();
}

Var Tape::hadamard_colscale(Var mu, Var m) {
  check(mu, "hadamard_colscale"); check(m, "hadamard_colscale");
  Node& n = fresh(Op::kColScale);
  n.a = mu.i; n.b = m.i;
  colscale_into(val(mu.i), val(m.i), n.value);
  return finish();
}

Var Tape::col_sqnorm(Var m) {
  check(m, "col_sqnorm");
  Node& n = fresh(Op::kColSqnorm);
  n.a = m.i;
  col_sqnorm_into(val(m.i), n.value);
  return finish();
}

Var Tape::fix_diag(Var m, double v) {
  check(m, "fix_diag");
  Node& n = fresh(Op::kFixDiag);
  n.a = m.i; n.scalar = v;
  fix_diag_into(val(m.i), v, n.value);
  return finish();
}

Var Tape::simplex_project(Var mu_hat, double lambda) {
  check(mu_hat, "simplex_project");
  Node& n = fresh(Op::kSimplexProj);
  n.a = mu_hat.i; n.scalar = lambda;
  ProjectionResult res = mdl::simplex_project(val(mu_hat.i), lambda);
  n.value = std::move(res.mu);
  n.support = std::move(res.support);
  return finish();
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  for (Var p : parts) check(p, "concat_rows");
  Node& n = fresh(Op::kConcatRows);
  std::vector<const Mat*> ptrs;
  ptrs.reserve(parts.size());
  for (Var p : parts) {
    n.parts.push_back(p.i);
    ptrs.push_back(&val(p.i));
  }
  concat_rows_into(ptrs, n.value);
  return finish();
}

Var Tape::flatten(Var m) {
  check(m, "flatten");
  Node& n = fresh(Op::kFlatten);
  n.a = m.i;
  flatten_into(val(m.i), n.value);
  return finish();
}

Var Tape::bilinear(Var a, Var phi, Var b) {
  check(a, "bilinear"); check(phi, "bilinear"); check(b, "bilinear");
  Node& n = fresh(Op::kBilinear);
  n.a = a.i; n.b = phi.i; n.c = b.i;
  n.value.assign_zero(1, 1);
  n.value.data[0] = mdl::bilinear(val(n.a), val(n.b), val(n.c));
  return finish();
}

Var Tape::pairwise_bilinear(Var e, Var phi_stack) {
  check(e, "pairwise_bilinear"); check(phi_stack, "pairwise_bilinear");
  Node& n = fresh(Op::kPairwiseBilinear);
  n.a = e.i; n.b = phi_stack.i;
  const Mat& ev = val(n.a);
  const Mat& ph = val(n.b);
  int k = ev.rows, m = ev.cols, pairs = pair_count(m);
  if (ph.cols != k || ph.rows != pairs * k) shape_error("pairwise_bilinear", ev, ph);
  n.value.assign_zero(pairs, 1);
  int p = 0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j, ++p) {
      const double* phi = &ph.data[static_cast<size_t>(p) * k * k];
      double s = 0.0;
      for (int r = 0; r < k; ++r) {
        double inner = 0.0;
        for (int c = 0; c < k; ++c) inner += phi[static_cast<size_t>(r) * k + c] * ev.at(c, j);
        s += ev.at(r, i) * inner;
      }
      n.value.data[p] = s;
    }
  }
  return finish();
}

Var Tape::dense(Var w, Var x, Var b) {
  check(w, "dense"); check(x, "dense"); check(b, "dense");
  Node& n = fresh(Op::kDense);
  n.a = w.i; n.b = x.i; n.c = b.i;
  matmul_into(val(n.a), val(n.b), n.value);
  acc(n.value, val(n.c));
  return finish();
}

Var Tape::embed_cols(const Mat* v, Mat* v_grad, std::vector<EmbedCol> cols) {
  Node& n = fresh(Op::kEmbedCols);
  n.scatter_sink = v_grad;
  n.cols = std::move(cols);
  int k = v->rows, m = static_cast<int>(n.cols.size());
  n.value.assign_zero(k, m);
  for (int i = 0; i < m; ++i) {
    const EmbedCol& ec = n.cols[i];
    if (ec.col < 0 || ec.col >= v->cols)
      throw std::invalid_argument("embed_cols: column " + std::to_string(ec.col) +
                                  " out of range for V " + v->shape());
    for (int r = 0; r < k; ++r) n.value.at(r, i) = ec.scale * v->at(r, ec.col);
  }
  return finish();
}

Var Tape::dot(Var a, Var b) {
  check(a, "dot"); check(b, "dot");
  Node& n = fresh(Op::kDot);
  n.a = a.i; n.b = b.i;
  n.value.assign_zero(1, 1);
  n.value.data[0] = mdl::dot(val(n.a), val(n.b));
  return finish();
}

Var Tape::bce_with_logit(Var logit, double label) {
  check(logit, "bce_with_logit");
  Node& n = fresh(Op::kBceWithLogit);
  n.a = logit.i; n.scalar = label;
  const Mat& z = val(n.a);
  if (z.rows != 1 || z.cols != 1) shape_error("bce_with_logit", z);
  n.value.assign_zero(1, 1);
  n.value.data[0] = mdl::bce_with_logit(z.data[0], label);
  return finish();
}

Var Tape::squared_error(Var out, double label) {
  check(out, "squared_error");
  Node& n = fresh(Op::kSquaredError);
  n.a = out.i; n.scalar = label;
  const Mat& z = val(n.a);
  if (z.rows != 1 || z.cols != 1) shape_error("squared_error", z);
  n.value.assign_zero(1, 1);
  double d = z.data[0] - label;
  n.value.data[0] = d * d;
  return finish();
}

Var Tape::sum_all(Var a) {
  check(a, "sum_all");
  Node& n = fresh(Op::kSumAll);
  n.a = a.i;
  n.value.assign_zero(1, 1);
  double s = 0.0;
  for (double x : val(n.a).data) s += x;
  n.value.data[0] = s;
  return finish();
}

const Mat& Tape::value(Var v) const {
  check(v, "value");
  return val(v.i);
}

const Mat& Tape::grad(Var v) {
  check(v, "grad");
  Node& n = nodes_[v.i];
  if (n.ext_grad) return *n.ext_grad;
  if (!n.grad_set) {
    const Mat& x = val(v.i);
    n.grad.assign_zero(x.rows, x.cols);
    n.grad_set = true;
  }
  return n.grad;
}

void Tape::reset() { used_ = 0; }

void Tape::backward(Var loss, double seed) {
  if (used_ == 0) throw std::invalid_argument("backward: nothing recorded");
  check(loss, "backward");
  const Mat& lv = val(loss.i);
  if (lv.rows != 1 || lv.cols != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + lv.shape());

  for (int i = 0; i <= loss.i; ++i) nodes_[i].grad_set = false;

  {
    Node& ln = nodes_[loss.i];
    if (!ln.tracked) return;  // constant loss: no leaf can be reached
    if (ln.ext_grad) {        // degenerate: loss is itself an external leaf
      ln.ext_grad->data[0] += seed;
      return;
    }
    ln.grad.assign_zero(1, 1);
    ln.grad.data[0] = seed;
    ln.grad_set = true;
  }

  for (int i = loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.tracked || n.ext_grad || !n.grad_set) continue;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kLeaf:
        break;  // tape-owned input: gradient stays readable in n.grad
      case Op::kAdd:
        if (Mat* ga = gsink(n.a)) acc(*ga, g);
        if (Mat* gb = gsink(n.b)) acc(*gb, g);
        break;
      case Op::kSub:
        if (Mat* ga = gsink(n.a)) acc(*ga, g);
        if (Mat* gb = gsink(n.b)) acc_scaled(*gb, g, -1.0);
        break;
      case Op::kSubScaled:
        if (Mat* ga = gsink(n.a)) acc(*ga, g);
        if (Mat* gb = gsink(n.b)) acc_scaled(*gb, g, -n.scalar);
        break;
      case Op::kScale:
        if (Mat* ga = gsink(n.a)) acc_scaled(*ga, g, n.scalar);
        break;
      case Op::kHadamard:
        if (Mat* ga = gsink(n.a)) {
          hadamard_into(g, val(n.b), tmp_);
          acc(*ga, tmp_);
        }
        if (Mat* gb = gsink(n.b)) {
          hadamard_into(g, val(n.a), tmp_);
          acc(*gb, tmp_);
        }
        break;
      case Op::kRelu:
        if (Mat* ga = gsink(n.a)) {
          const Mat& x = val(n.a);
          for (size_t j = 0; j < g.data.size(); ++j)
            if (x.data[j] > 0.0) ga->data[j] += g.data[j];
        }
        break;
      case Op::kSigmoid:
        if (Mat* ga = gsink(n.a)) {
          for (size_t j = 0; j < g.data.size(); ++j) {
            double s = n.value.data[j];
            ga->data[j] += g.data[j] * s * (1.0 - s);
          }
        }
        break;
      case Op::kMatmul:
        if (Mat* ga = gsink(n.a)) {
          matmul_tb_into(g, val(n.b), tmp_);
          acc(*ga, tmp_);
        }
        if (Mat* gb = gsink(n.b)) {
          matmul_ta_into(val(n.a), g, tmp_);
          acc(*gb, tmp_);
        }
        break;
      case Op::kMatmulTA:  // out = a^T b
        if (Mat* ga = gsink(n.a)) {
          matmul_tb_into(val(n.b), g, tmp_);
          acc(*ga, tmp_);
        }
        if (Mat* gb = gsink(n.b)) {
          matmul_into(val(n.a), g, tmp_);
          acc(*gb, tmp_);
        }
        break;
      case Op::kGram:  // out = e^T e; de = e (g + g^T)
        if (Mat* ga = gsink(n.a)) {
          tmp2_.assign_zero(g.rows, g.cols);
          for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) tmp2_.at(r, c) = g.at(r, c) + g.at(c, r);
          matmul_into(val(n.a), tmp2_, tmp_);
          acc(*ga, tmp_);
        }
        break;
      case Op::kColScale: {
        const Mat& mu = val(n.a);
        const Mat& m = val(n.b);
        if (Mat* gmu = gsink(n.a)) {
          for (int c = 0; c < m.cols; ++c) {
            double s = 0.0;
            for (int r = 0; r < m.rows; ++r) s += g.at(r, c) * m.at(r, c);
            gmu->data[c] += s;
          }
        }
        if (Mat* gm = gsink(n.b)) {
          for (int r = 0; r < m.rows; ++r)
            for (int c = 0; c < m.cols; ++c) gm->at(r, c) += mu.data[c] * g.at(r, c);
        }
        break;
      }
      case Op::kColSqnorm:
        if (Mat* gm = gsink(n.a)) {
          const Mat& m = val(n.a);
          for (int r = 0; r < m.rows; ++r)
            for (int c = 0; c < m.cols; ++c) gm->at(r, c) += 2.0 * m.at(r, c) * g.data[c];
        }
        break;
      case Op::kFixDiag:
        if (Mat* ga = gsink(n.a)) {
          Mat masked = backward_diag_projection(g);
          acc(*ga, masked);
        }
        break;
      case Op::kSimplexProj:
        if (Mat* ga = gsink(n.a)) {
          Mat back = backward_simplex_projection(g, n.support);
          acc(*ga, back);
        }
        break;
      case Op::kConcatRows: {
        int off = 0;
        for (int pi : n.parts) {
          const Mat& pv = val(pi);
          if (Mat* gp = gsink(pi)) {
            for (int r = 0; r < pv.rows; ++r) gp->data[r] += g.data[off + r];
          }
          off += pv.rows;
        }
        break;
      }
      case Op::kFlatten:
        if (Mat* ga = gsink(n.a)) {
          for (size_t j = 0; j < g.data.size(); ++j) ga->data[j] += g.data[j];
        }
        break;
      case Op::kBilinear: {
        double gs = g.data[0];
        const Mat& a = val(n.a);
        const Mat& phi = val(n.b);
        const Mat& b = val(n.c);
        if (Mat* ga = gsink(n.a)) {
          matmul_into(phi, b, tmp_);
          acc_scaled(*ga, tmp_, gs);
        }
        if (Mat* gphi = gsink(n.b)) {
          matmul_tb_into(a, b, tmp_);
          acc_scaled(*gphi, tmp_, gs);
        }
        if (Mat* gb = gsink(n.c)) {
          matmul_ta_into(phi, a, tmp_);
          acc_scaled(*gb, tmp_, gs);
        }
        break;
      }
      case Op::kPairwiseBilinear: {
        const Mat& e = val(n.a);
        const Mat& ph = val(n.b);
        int k = e.rows, m = e.cols;
        Mat* ge = gsink(n.a);
        Mat* gph = gsink(n.b);
        int p = 0;
        for (int fi = 0; fi < m; ++fi) {
          for (int fj = fi + 1; fj < m; ++fj, ++p) {
            double gp = g.data[p];
            if (gp == 0.0) continue;
            const double* phi = &ph.data[static_cast<size_t>(p) * k * k];
            for (int r = 0; r < k; ++r) {
              const double* phirow = phi + static_cast<size_t>(r) * k;
              double er = e.at(r, fi);
              double rowdot = 0.0;
              for (int c = 0; c < k; ++c) {
                double ec = e.at(c, fj);
                rowdot += phirow[c] * ec;
                if (gph) gph->data[static_cast<size_t>(p) * k * k + r * k + c] += gp * er * ec;
                if (ge) ge->at(c, fj) += gp * er * phirow[c];
              }
              if (ge) ge->at(r, fi) += gp * rowdot;
            }
          }
        }
        break;
      }
      case Op::kDense: {
        const Mat& x = val(n.b);
        if (Mat* gw = gsink(n.a)) {
          matmul_tb_into(g, x, tmp_);
          acc(*gw, tmp_);
        }
        if (Mat* gx = gsink(n.b)) {
          matmul_ta_into(val(n.a), g, tmp_);
          acc(*gx, tmp_);
        }
        if (Mat* gb = gsink(n.c)) acc(*gb, g);
        break;
      }
      case Op::kEmbedCols:
        if (n.scatter_sink) {
          Mat& vg = *n.scatter_sink;
          int k = n.value.rows;
          for (int f = 0; f < n.value.cols; ++f) {
            const EmbedCol& ec = n.cols[f];
            for (int r = 0; r < k; ++r) vg.at(r, ec.col) += ec.scale * g.at(r, f);
          }
        }
        break;
      case Op::kDot:
        if (Mat* ga = gsink(n.a)) acc_scaled(*ga, val(n.b), g.data[0]);
        if (Mat* gb = gsink(n.b)) acc_scaled(*gb, val(n.a), g.data[0]);
        break;
      case Op::kBceWithLogit:
        if (Mat* ga = gsink(n.a)) {
          double z = val(n.a).data[0];
          ga->data[0] += g.data[0] * (sigmoid_scalar(z) - n.scalar);
        }
        break;
      case Op::kSquaredError:
        if (Mat* ga = gsink(n.a)) {
          double z = val(n.a).data[0];
          ga->data[0] += g.data[0] * 2.0 * (z - n.scalar);
        }
        break;
      case Op::kSumAll:
        if (Mat* ga = gsink(n.a)) {
          for (size_t j = 0; j < ga->data.size(); ++j) ga->data[j] += g.data[0];
        }
        break;
    }
  }
}

}  // namespace mdl
