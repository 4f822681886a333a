#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "mdl/mat.hpp"

using namespace mdl;

TEST_CASE("hadamard_colscale scales columns by mu") {
  Mat mu = Mat::col({2, 3});
  Mat m = Mat::from_rows({{1, 1}, {1, 1}});
  Mat out = hadamard_colscale(mu, m);
  CHECK(out.at(0, 0) == 2);
  CHECK(out.at(0, 1) == 3);
  CHECK(out.at(1, 0) == 2);
  CHECK(out.at(1, 1) == 3);
}

TEST_CASE("bilinear on 1-d operands") {
  Mat a = Mat::col({3});
  Mat phi = Mat::from_rows({{2}});
  Mat b = Mat::col({4});
  CHECK(bilinear(a, phi, b) == 24);
}

TEST_CASE("gram of a row vector") {
  Mat e = Mat::from_rows({{1, 2}});
  Mat g = gram(e);
  CHECK(g.rows == 2);
  CHECK(g.at(0, 0) == 1);
  CHECK(g.at(0, 1) == 2);
  CHECK(g.at(1, 0) == 2);
  CHECK(g.at(1, 1) == 4);
}

TEST_CASE("shape mismatch errors carry both shapes") {
  Mat a(2, 3), b(4, 5);
  try {
    matmul(a, b);
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("4x5") != std::string::npos);
  }
}

TEST_CASE("matmul against hand computation") {
  Mat a = Mat::from_rows({{1, 2}, {3, 4}});
  Mat b = Mat::from_rows({{5, 6}, {7, 8}});
  Mat c = matmul(a, b);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
}

TEST_CASE("fix_diag pins the diagonal and keeps the rest") {
  Mat w = Mat::from_rows({{5, 2}, {3, 7}});
  Mat out = fix_diag(w, -1.0);
  CHECK(out.at(0, 0) == -1);
  CHECK(out.at(1, 1) == -1);
  CHECK(out.at(0, 1) == 2);
  CHECK(out.at(1, 0) == 3);
  CHECK_THROWS_AS(fix_diag(Mat(2, 3), -1.0), std::invalid_argument);
}

TEST_CASE("flatten is row-major") {
  Mat w = Mat::from_rows({{1, 2}, {3, 4}});
  Mat f = flatten(w);
  CHECK(f.rows == 4);
  CHECK(f.cols == 1);
  CHECK(f.data == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("bce_with_logit is stable at extreme logits") {
  CHECK(bce_with_logit(0.0, 1.0) == doctest::Approx(std::log(2.0)));
  for (double z : {-40.0, 40.0})
    for (double y : {0.0, 1.0}) CHECK(std::isfinite(bce_with_logit(z, y)));
  CHECK(bce_with_logit(40.0, 1.0) == doctest::Approx(std::exp(-40.0)).epsilon(1e-6));
}

TEST_CASE("col_sqnorm sums squared column entries") {
  Mat m = Mat::from_rows({{1, 2}, {3, 4}});
  Mat n = col_sqnorm(m);
  CHECK(n.data == std::vector<double>{10, 20});
}
