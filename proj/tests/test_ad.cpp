#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fkan/ad.hpp"

using namespace fkan;
using ad::Dual2;
using ad::Tape;
using ad::Var;

TEST_CASE("backward: polynomial, constant, product rule", "[ad]") {
  {
    Tape t;
    Var theta = t.leaf(3.0);
    Var loss = ad::sqr(theta);
    auto g = ad::backward(t, loss, 1);
    REQUIRE(g[0] == Catch::Approx(6.0));
  }
  {
    Tape t;
    t.leaf(3.0);
    Var loss = t.leaf(7.0);  // no dependence on the first leaf
    auto g = ad::backward(t, loss, 1);
    REQUIRE(g[0] == 0.0);
  }
  {
    Tape t;
    Var a = t.leaf(2.0);
    Var b = t.leaf(0.0);
    Var loss = a * ad::sin_(b);
    auto g = ad::backward(t, loss, 2);
    REQUIRE(g[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(g[1] == Catch::Approx(2.0));
  }
}

TEST_CASE("backward rejects values that are not tape scalars", "[ad]") {
  Tape t;
  t.leaf(1.0);
  std::vector<double> g(1, 0.0);
  REQUIRE_THROWS_AS(t.backward(Var{2.0}, g), ContractViolation);
  Tape other;
  Var x = other.leaf(1.0);
  REQUIRE_THROWS_AS(t.backward(x, g), ContractViolation);
}

TEST_CASE("constant folding keeps structure exact", "[ad]") {
  Tape t;
  Var x = t.leaf(2.0);
  Var y = (x + 5.0) * 3.0 - 1.0;
  REQUIRE(y.v == Catch::Approx(20.0));
  auto g = ad::backward(t, y, 1);
  REQUIRE(g[0] == Catch::Approx(3.0));
  Var z = Var{0.0} * x + Var{1.0} * x;  // zero and identity folds
  REQUIRE(z.idx == x.idx);
}

TEST_CASE("dot and sum nodes match elementwise composition", "[ad]") {
  Tape t;
  std::vector<double> wv{0.5, -1.5, 2.0}, xv{1.0, 2.0, 3.0};
  std::vector<Var> w(3), x(3);
  t.seed(wv);
  for (int i = 0; i < 3; ++i) w[i] = Var{wv[i], i, &t};
  for (int i = 0; i < 3; ++i) x[i] = t.leaf(xv[i]);
  Var d = t.dot(w, x, t.leaf(0.25));
  REQUIRE(d.v == Catch::Approx(0.25 + 0.5 - 3.0 + 6.0));
  auto g = ad::backward(t, d, 3);
  REQUIRE(g[0] == Catch::Approx(1.0));
  REQUIRE(g[1] == Catch::Approx(2.0));
  REQUIRE(g[2] == Catch::Approx(3.0));
}

TEST_CASE("grad_check on quadratic and constant", "[ad]") {
  auto quad = [](Tape&, std::span<const Var> xs) {
    Var acc{};
    for (std::size_t i = 0; i < xs.size(); ++i) acc = acc + ad::sqr(xs[i]) * (1.0 + i);
    return acc;
  };
  std::vector<double> p{0.3, -0.7, 1.1};
  REQUIRE(ad::grad_check(quad, p, 1e-8) < 1e-7);

  auto constant = [](Tape& t, std::span<const Var>) { return t.leaf(0.0) + 4.2; };
  REQUIRE(ad::grad_check(constant, p, 1e-8) == 0.0);
}

namespace {

// Second-order finite differences of a scalar function of one input.
template <class F>
void check_dual2(F f, double x0, double tol = 1e-4) {
  Tape t;
  Dual2 in = ad::dual2_input(x0);
  Dual2 out = f(in);
  const double h = 1e-4;
  Tape t2;
  auto val = [&](double x) { return f(ad::dual2_const(x)).v.v; };
  const double f0 = val(x0);
  const double fp = val(x0 + h), fm = val(x0 - h);
  const double fd1 = (fp - fm) / (2.0 * h);
  const double fd2 = (fp - 2.0 * f0 + fm) / (h * h);
  REQUIRE(out.v.v == Catch::Approx(f0).epsilon(1e-12));
  REQUIRE(out.d1.v == Catch::Approx(fd1).epsilon(tol).margin(tol));
  REQUIRE(out.d2.v == Catch::Approx(fd2).epsilon(tol).margin(tol));
}

}  // namespace

TEST_CASE("Dual2 second-order chain rule on composites", "[ad]") {
  check_dual2([](Dual2 x) { return ad::exp_(ad::sin_(x) * 0.7 + x * x * 0.3); }, 0.4);
  check_dual2([](Dual2 x) { return ad::tanh_(x * 1.3) * ad::sigmoid_(x); }, -0.6);
  check_dual2([](Dual2 x) { return ad::silu_(x * 2.0) + ad::sqr(x); }, 0.9);
  check_dual2([](Dual2 x) { return ad::silu_(ad::sin_(3.0 * x)) * ad::exp_(-x); }, 1.2);
}

TEST_CASE("Dual2 channels stay parameter-differentiable", "[ad]") {
  // d/dtheta of (u, u_x, u_xx) for u = sin(theta * x) matches closed forms.
  Tape t;
  const double theta0 = 1.7, x0 = 0.5;
  Var theta = t.leaf(theta0);
  Dual2 x = ad::dual2_input(x0);
  Dual2 u = ad::sin_(x * theta);

  // u_x = theta cos(theta x); d(u_x)/dtheta = cos - theta x sin
  auto gx = ad::backward(t, u.d1, 1);
  REQUIRE(gx[0] == Catch::Approx(std::cos(theta0 * x0) -
                                 theta0 * x0 * std::sin(theta0 * x0))
                       .epsilon(1e-12));
  // u_xx = -theta^2 sin(theta x); d(u_xx)/dtheta = -2 theta sin - theta^2 x cos
  auto gxx = ad::backward(t, u.d2, 1);
  REQUIRE(gxx[0] == Catch::Approx(-2.0 * theta0 * std::sin(theta0 * x0) -
                                  theta0 * theta0 * x0 * std::cos(theta0 * x0))
                        .epsilon(1e-12));
}

TEST_CASE("eval_with_input_derivs on closed-form fields", "[ad]") {
  auto square = [](std::span<const Dual2> in) { return ad::sqr(in[0]); };
  std::vector<double> x{1.5};
  auto got = ad::eval_with_input_derivs(square, x, 0);
  REQUIRE(got[0].v == Catch::Approx(2.25));
  REQUIRE(got[1].v == Catch::Approx(3.0));
  REQUIRE(got[2].v == Catch::Approx(2.0));

  auto sine = [](std::span<const Dual2> in) { return ad::sin_(in[0]); };
  std::vector<double> z{0.0};
  auto s = ad::eval_with_input_derivs(sine, z, 0);
  REQUIRE(s[0].v == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(s[1].v == Catch::Approx(1.0));
  REQUIRE(s[2].v == Catch::Approx(0.0).margin(1e-15));

  REQUIRE_THROWS_AS(ad::eval_with_input_derivs(sine, z, 1), ContractViolation);
}
