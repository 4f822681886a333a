#include "doctest.h"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "mdl/tape.hpp"
#include "test_util.hpp"

using namespace mdl;
using namespace mdl::testutil;

TEST_CASE("grad of sum(A o A)") {
  Tape t;
  Var a = t.input(Mat::from_rows({{1, -2}}));
  Var loss = t.sum_all(t.hadamard(a, a));
  t.backward(loss);
  const Mat& g = t.grad(a);
  CHECK(g.at(0, 0) == 2);
  CHECK(g.at(0, 1) == -4);
}

TEST_CASE("disconnected leaf gets zero gradient") {
  Tape t;
  Var a = t.input(Mat::from_rows({{1, 2}}));
  Var b = t.input(Mat::from_rows({{3, 4}}));
  Var loss = t.sum_all(a);
  t.backward(loss);
  CHECK(t.grad(b).data == std::vector<double>{0, 0});
}

TEST_CASE("backward rejects misuse") {
  Tape t;
  CHECK_THROWS_AS(t.backward(Var{0}), std::invalid_argument);
  Var a = t.input(Mat::from_rows({{1, 2}}));
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar loss
}

TEST_CASE("backward is linear in the upstream seed") {
  Rng rng(7);
  Tape t1, t2;
  Mat a0 = random_mat(3, 3, rng);
  Mat b0 = random_mat(3, 3, rng);
  Var a1 = t1.input(a0), b1 = t1.input(b0);
  Var l1 = t1.sum_all(t1.matmul(a1, b1));
  t1.backward(l1, 1.0);
  Var a2 = t2.input(a0), b2 = t2.input(b0);
  Var l2 = t2.sum_all(t2.matmul(a2, b2));
  t2.backward(l2, 2.5);
  for (int i = 0; i < 9; ++i)
    CHECK(t2.grad(a2).data[i] == doctest::Approx(2.5 * t1.grad(a1).data[i]).epsilon(1e-14));
}

TEST_CASE("replay with identical inputs is bit-identical") {
  Rng rng(11);
  Mat a0 = random_mat(4, 4, rng);
  auto run = [&](Mat& grad_out) {
    Tape t;
    Var a = t.input(a0);
    Var h = t.relu(t.gram(a));
    Var loss = t.sum_all(t.hadamard(h, h));
    t.backward(loss);
    grad_out = t.grad(a);
    return t.value(loss).data[0];
  };
  Mat g1, g2;
  double v1 = run(g1), v2 = run(g2);
  CHECK(v1 == v2);
  CHECK(g1.data == g2.data);
}

TEST_CASE("simplex projection backward: fixed active-set Jacobian") {
  CHECK(backward_simplex_projection(Mat::col({1, 1}), {0, 1}).data ==
        std::vector<double>{0, 0});
  Mat g = backward_simplex_projection(Mat::col({1, 0}), {0, 1});
  CHECK(g.data[0] == doctest::Approx(0.5));
  CHECK(g.data[1] == doctest::Approx(-0.5));
  CHECK(backward_simplex_projection(Mat::col({1, 5}), {0}).data ==
        std::vector<double>{0, 0});
  CHECK_THROWS_AS(backward_simplex_projection(Mat::col({1, 2}), {}), std::invalid_argument);
}

TEST_CASE("diagonal projection backward zeroes the diagonal") {
  Mat g = backward_diag_projection(Mat::from_rows({{1, 2}, {3, 4}}));
  CHECK(g.data == std::vector<double>{0, 2, 3, 0});
  Mat z = backward_diag_projection(Mat(3, 3));
  CHECK(z.data == std::vector<double>(9, 0.0));
  CHECK_THROWS_AS(backward_diag_projection(Mat(2, 3)), std::invalid_argument);
}

namespace {

// Finite-difference check of d(loss)/d(input entries) for a graph builder.
// The builder maps the current contents of `inputs` to a scalar.
void fd_check(std::vector<Mat>& inputs,
              const std::function<double(const std::vector<Mat>&, std::vector<Mat>*)>& eval,
              double rel = 1e-4) {
  std::vector<Mat> grads;
  eval(inputs, &grads);
  for (size_t mi = 0; mi < inputs.size(); ++mi) {
    for (size_t j = 0; j < inputs[mi].data.size(); ++j) {
      double fd = central_diff(&inputs[mi].data[j], [&] { return eval(inputs, nullptr); });
      INFO("input ", mi, " entry ", j, " analytic ", grads[mi].data[j], " fd ", fd);
      CHECK(grad_close(grads[mi].data[j], fd, rel));
    }
  }
}

}  // namespace

TEST_CASE("every kernel passes finite-difference gradient checks") {
  Rng rng(2024);
  // weighted sum against fixed random coefficients makes gradients non-uniform
  auto weighted_loss = [](Tape& t, Var out, Rng& wrng) {
    const Mat& v = t.value(out);
    Mat w(v.rows, v.cols);
    for (double& x : w.data) x = wrng.uniform(-1, 1);
    return t.sum_all(t.hadamard(out, t.constant(std::move(w))));
  };

  for (int trial = 0; trial < 100; ++trial) {
    int n = 2 + static_cast<int>(rng.bounded(4));  // 2..5
    int kind = trial % 10;
    std::vector<Mat> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> build;
    switch (kind) {
      case 0:  // matmul
        inputs = {random_mat(n, n, rng), random_mat(n, n, rng)};
        build = [](Tape& t, const std::vector<Var>& in) { return t.matmul(in[0], in[1]); };
        break;
      case 1:  // gram
        inputs = {random_mat(n, n, rng)};
        build = [](Tape& t, const std::vector<Var>& in) { return t.gram(in[0]); };
        break;
      case 2:  // hadamard_colscale
        inputs = {random_mat(n, 1, rng), random_mat(3, n, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.hadamard_colscale(in[0], in[1]);
        };
        break;
      case 3:  // add / sub / scale chain
        inputs = {random_mat(n, n, rng), random_mat(n, n, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.scale(t.sub(t.add(in[0], in[1]), in[1]), 1.7);
        };
        break;
      case 4:  // relu (inputs shifted away from the kink)
        inputs = {random_mat(n, n, rng)};
        for (double& x : inputs[0].data) x += (x >= 0 ? 0.5 : -0.5);
        build = [](Tape& t, const std::vector<Var>& in) { return t.relu(in[0]); };
        break;
      case 5:  // sigmoid
        inputs = {random_mat(n, n, rng)};
        build = [](Tape& t, const std::vector<Var>& in) { return t.sigmoid(in[0]); };
        break;
      case 6:  // concat + flatten
        inputs = {random_mat(n, 1, rng), random_mat(2, 2, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.concat_rows({in[0], t.flatten(in[1])});
        };
        break;
      case 7:  // bilinear
        inputs = {random_mat(n, 1, rng), random_mat(n, n, rng), random_mat(n, 1, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.bilinear(in[0], in[1], in[2]);
        };
        break;
      case 8:  // col_sqnorm + sub_scaled
        inputs = {random_mat(3, n, rng), random_mat(n, 1, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.sub_scaled(in[1], t.col_sqnorm(in[0]), 0.3);
        };
        break;
      default:  // dense + matmul_ta
        inputs = {random_mat(n, n, rng), random_mat(n, 1, rng), random_mat(n, 1, rng)};
        build = [](Tape& t, const std::vector<Var>& in) {
          return t.matmul_ta(in[0], t.dense(in[0], in[1], in[2]));
        };
        break;
    }
    uint64_t wseed = rng.next();
    auto eval = [&](const std::vector<Mat>& cur, std::vector<Mat>* grads) {
      Tape t;
      std::vector<Var> vars;
      for (const Mat& m : cur) vars.push_back(t.input(m));
      Rng wrng(wseed);
      Var loss = weighted_loss(t, build(t, vars), wrng);
      if (grads) {
        t.backward(loss);
        grads->clear();
        for (Var v : vars) grads->push_back(t.grad(v));
      }
      return t.value(loss).data[0];
    };
    fd_check(inputs, eval);
  }
}

TEST_CASE("projection ops pass finite-difference checks away from kinks") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    int m = 3 + static_cast<int>(rng.bounded(4));
    std::vector<Mat> inputs = {random_mat(m, m, rng)};
    uint64_t wseed = rng.next();
    double lambda = 1.0;
    auto eval = [&](const std::vector<Mat>& cur, std::vector<Mat>* grads) {
      Tape t;
      Var w = t.input(cur[0]);
      Var pinned = t.fix_diag(w, -1.0);
      Var mu = t.simplex_project(t.col_sqnorm(pinned), lambda);
      Rng wrng(wseed);
      Mat coef(m, 1);
      for (double& x : coef.data) x = wrng.uniform(-1, 1);
      Var loss = t.dot(mu, t.constant(std::move(coef)));
      if (grads) {
        t.backward(loss);
        grads->clear();
        grads->push_back(t.grad(w));
      }
      return t.value(loss).data[0];
    };
    fd_check(inputs, eval, 2e-4);
  }
}

TEST_CASE("external leaves accumulate into their sinks") {
  Mat w = Mat::from_rows({{1, 2}, {3, 4}});
  Mat sink(2, 2);
  Tape t;
  Var wv = t.leaf(&w, &sink);
  Var loss = t.sum_all(t.hadamard(wv, wv));
  t.backward(loss);
  CHECK(sink.data == std::vector<double>{2, 4, 6, 8});
  // second sweep on a fresh recording keeps accumulating
  t.reset();
  wv = t.leaf(&w, &sink);
  loss = t.sum_all(t.hadamard(wv, wv));
  t.backward(loss);
  CHECK(sink.data == std::vector<double>{4, 8, 12, 16});
}
