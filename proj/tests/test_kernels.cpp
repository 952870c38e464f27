#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fkan/kernels.hpp"

using namespace fkan;
using kernels::Kind;

TEST_CASE("kernel values at the center and unit offset", "[kernels]") {
  REQUIRE(kernels::eval(Kind::Gaussian, 0.0) == 1.0);
  REQUIRE(kernels::eval(Kind::Matern52, 0.0) == 1.0);
  REQUIRE(kernels::eval(Kind::Gaussian, 1.0) == Catch::Approx(std::exp(-1.0)));
}

TEST_CASE("kernel symmetry and strict maximum at zero", "[kernels]") {
  for (Kind kind : {Kind::Gaussian, Kind::Matern52}) {
    for (int i = 1; i <= 400; ++i) {
      const double u = 5.0 * i / 400.0;
      const double kp = kernels::eval(kind, u);
      REQUIRE(kp == kernels::eval(kind, -u));
      REQUIRE(kp < 1.0);
      REQUIRE(kp > 0.0);
      // strictly decreasing in |u|
      REQUIRE(kp < kernels::eval(kind, u - 5.0 / 400.0));
    }
  }
}

TEST_CASE("closed-form derivatives at special points", "[kernels]") {
  auto g0 = kernels::derivs(Kind::Gaussian, 0.0);
  REQUIRE(g0.k == 1.0);
  REQUIRE(g0.d1 == 0.0);
  REQUIRE(g0.d2 == -2.0);
  REQUIRE(g0.d3 == 0.0);

  auto m0 = kernels::derivs(Kind::Matern52, 0.0);
  REQUIRE(m0.k == 1.0);
  REQUIRE(m0.d1 == 0.0);
  REQUIRE(m0.d2 == Catch::Approx(-5.0 / 3.0));
  REQUIRE(std::isnan(m0.d3));  // undefined at the center
}

namespace {

// Each derivative order checked as a central difference of the closed form
// one order below; errors are scaled by the largest magnitude of that order
// on the grid.
void check_derivative_ladder(Kind kind, double tol) {
  const double h = 1e-5;
  double max_mag[4] = {0, 0, 0, 0};
  double max_err[4] = {0, 0, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    const double u = -5.0 + 10.0 * (i + 0.5) / 1000.0;
    if (std::abs(u) < 1e-3) continue;  // grid excludes the center
    auto d = kernels::derivs(kind, u);
    auto dp = kernels::derivs(kind, u + h);
    auto dm = kernels::derivs(kind, u - h);
    const double fd1 = (dp.k - dm.k) / (2.0 * h);
    const double fd2 = (dp.d1 - dm.d1) / (2.0 * h);
    const double fd3 = (dp.d2 - dm.d2) / (2.0 * h);
    max_mag[1] = std::max(max_mag[1], std::abs(d.d1));
    max_mag[2] = std::max(max_mag[2], std::abs(d.d2));
    max_mag[3] = std::max(max_mag[3], std::abs(d.d3));
    max_err[1] = std::max(max_err[1], std::abs(fd1 - d.d1));
    max_err[2] = std::max(max_err[2], std::abs(fd2 - d.d2));
    max_err[3] = std::max(max_err[3], std::abs(fd3 - d.d3));
  }
  for (int ord = 1; ord <= 3; ++ord) {
    REQUIRE(max_err[ord] / max_mag[ord] < tol);
  }
}

}  // namespace

TEST_CASE("derivatives match finite differences on a grid", "[kernels]") {
  check_derivative_ladder(Kind::Gaussian, 1e-7);
  check_derivative_ladder(Kind::Matern52, 1e-7);
}

TEST_CASE("derivatives at a generic point agree closely with differences", "[kernels]") {
  const double u = 0.7, h = 1e-5;
  auto d = kernels::derivs(Kind::Gaussian, u);
  auto dp = kernels::derivs(Kind::Gaussian, u + h);
  auto dm = kernels::derivs(Kind::Gaussian, u - h);
  REQUIRE(std::abs((dp.k - dm.k) / (2 * h) - d.d1) / std::abs(d.d1) < 1e-8);
  REQUIRE(std::abs((dp.d1 - dm.d1) / (2 * h) - d.d2) / std::abs(d.d2) < 1e-8);
  REQUIRE(std::abs((dp.d2 - dm.d2) / (2 * h) - d.d3) / std::abs(d.d3) < 1e-8);
}

TEST_CASE("tracked kernel application differentiates the closed form", "[kernels]") {
  ad::Tape t;
  ad::Var u = t.leaf(0.35);
  ad::Var k = kernels::apply(Kind::Gaussian, u);
  auto g = ad::backward(t, k, 1);
  REQUIRE(g[0] == Catch::Approx(kernels::derivs(Kind::Gaussian, 0.35).d1));

  // Dual2 application: d2 channel of K(x) w.r.t. x equals K''.
  ad::Dual2 x = ad::dual2_input(0.35);
  ad::Dual2 kd = kernels::apply(Kind::Matern52, x);
  auto d = kernels::derivs(Kind::Matern52, 0.35);
  REQUIRE(kd.v.v == Catch::Approx(d.k));
  REQUIRE(kd.d1.v == Catch::Approx(d.d1));
  REQUIRE(kd.d2.v == Catch::Approx(d.d2));
}

TEST_CASE("smoothness guard separates the kernels", "[kernels]") {
  REQUIRE(kernels::smooth_enough(Kind::Gaussian, 2));
  REQUIRE(kernels::smooth_enough(Kind::Matern52, 1));
  REQUIRE_FALSE(kernels::smooth_enough(Kind::Matern52, 2));
}
