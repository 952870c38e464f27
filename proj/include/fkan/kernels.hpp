#pragma once

// Univariate radial kernels K(u), u = (x - c)/sigma, with closed-form
// derivatives up to third order. Third derivatives feed the tape partials of
// second-order input derivatives.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fkan/ad.hpp"

namespace fkan::kernels {

enum class Kind { Gaussian, Matern52 };

inline std::string to_string(Kind k) {
  return k == Kind::Gaussian ? "gaussian" : "matern52";
}

inline Kind parse(const std::string& s) {
  if (s == "gaussian") return Kind::Gaussian;
  if (s == "matern52") return Kind::Matern52;
  throw std::invalid_argument("unknown kernel: " + s);
}

struct Derivs {
  double k, d1, d2, d3;
};

inline double eval(Kind kind, double u) {
  if (kind == Kind::Gaussian) return std::exp(-u * u);
  const double r = std::abs(u);
  const double s5r = std::sqrt(5.0) * r;
  return (1.0 + s5r + (5.0 / 3.0) * r * r) * std::exp(-s5r);
}

/// K and its first three derivatives with respect to u.
///
/// The Matern-5/2 kernel is even in u; its odd-order derivatives pick up
/// sign(u). Its third derivative at u = 0 is reported as NaN (treated as
/// undefined here) rather than a one-sided limit.
inline Derivs derivs(Kind kind, double u) {
  if (kind == Kind::Gaussian) {
    const double k = std::exp(-u * u);
    return {k, -2.0 * u * k, (4.0 * u * u - 2.0) * k,
            (12.0 * u - 8.0 * u * u * u) * k};
  }
  const double s = std::sqrt(5.0);
  const double r = std::abs(u);
  const double sg = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
  const double e = std::exp(-s * r);
  const double k = (1.0 + s * r + (5.0 / 3.0) * r * r) * e;
  const double dr1 = -(5.0 / 3.0) * r * (1.0 + s * r) * e;
  const double dr2 = -(5.0 / 3.0) * (1.0 + s * r - 5.0 * r * r) * e;
  const double dr3 = (25.0 / 3.0) * r * (3.0 - s * r) * e;
  const double d3 =
      u == 0.0 ? std::numeric_limits<double>::quiet_NaN() : sg * dr3;
  return {k, sg * dr1, dr2, d3};
}

/// True when derivative channels of order `order` can be parameter-
/// differentiated everywhere (order+1 kernel derivatives exist).
inline bool smooth_enough(Kind kind, int order) {
  if (kind == Kind::Gaussian) return true;
  return order <= 1;
}

inline double apply(Kind kind, double u) { return eval(kind, u); }

inline ad::Var apply(Kind kind, ad::Var u) {
  const Derivs d = derivs(kind, u.v);
  if (u.is_const()) return ad::Var{d.k};
  return u.tape->node1(d.k, u, d.d1);
}

inline ad::Dual2 apply(Kind kind, const ad::Dual2& u) {
  const Derivs d = derivs(kind, u.v.v);
  return ad::apply_c3(u, d.k, d.d1, d.d2, d.d3);
}

}  // namespace fkan::kernels
