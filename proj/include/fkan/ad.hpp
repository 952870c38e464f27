#pragma once

// Reverse-mode scalar autodiff on a Wengert tape, plus second-order forward
// duals whose channels live on the same tape (forward-over-reverse). Local
// partial derivatives are computed at record time, so the backward sweep is a
// single pass of fused multiply-adds over the parent lists.
//
// Constants (Var with idx < 0) fold away: adding a constant reuses the parent
// node unchanged, multiplying by a structural zero yields a constant zero, so
// sparse derivative structure costs nothing on the tape.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fkan {

class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

namespace ad {

class Tape;

/// A value tracked on a tape. idx < 0 marks a constant (no tape node).
struct Var {
  double v = 0.0;
  std::int32_t idx = -1;
  Tape* tape = nullptr;

  constexpr bool is_const() const { return idx < 0; }
  constexpr bool is_zero() const { return idx < 0 && v == 0.0; }
};

class Tape {
 public:
  std::size_t size() const { return ends_.size(); }
  std::size_t entry_count() const { return parents_.size(); }

  void clear() {
    ends_.clear();
    parents_.clear();
    partials_.clear();
  }

  /// Independent node (parameter leaf or tracked input).
  Var leaf(double v) {
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  /// Leaves for a parameter vector; node k holds values[k], so adjoints of
  /// nodes [0, n) are the gradient with respect to the vector.
  void seed(std::span<const double> values) {
    for (double v : values) leaf(v);
  }

  Var node1(double v, Var a, double pa) {
    parents_.push_back(a.idx);
    partials_.push_back(pa);
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  Var node2(double v, Var a, double pa, Var b, double pb) {
    parents_.push_back(a.idx);
    partials_.push_back(pa);
    parents_.push_back(b.idx);
    partials_.push_back(pb);
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  /// bias + sum_k a[k]*b[k] as a single node with one entry per non-constant
  /// argument.
  Var dot(std::span<const Var> a, std::span<const Var> b, Var bias = {}) {
    double v = bias.v;
    bool any = !bias.is_const();
    if (any) {
      parents_.push_back(bias.idx);
      partials_.push_back(1.0);
    }
    for (std::size_t k = 0; k < a.size(); ++k) {
      v += a[k].v * b[k].v;
      if (!a[k].is_const()) {
        parents_.push_back(a[k].idx);
        partials_.push_back(b[k].v);
        any = true;
      }
      if (!b[k].is_const()) {
        parents_.push_back(b[k].idx);
        partials_.push_back(a[k].v);
        any = true;
      }
    }
    if (!any) return {v};
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  Var sum(std::span<const Var> xs) {
    double v = 0.0;
    bool any = false;
    for (const Var& x : xs) {
      v += x.v;
      if (!x.is_const()) {
        parents_.push_back(x.idx);
        partials_.push_back(1.0);
        any = true;
      }
    }
    if (!any) return {v};
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  /// sum_k c[k]*x[k] with constant coefficients.
  Var lincomb(std::span<const Var> xs, std::span<const double> cs) {
    double v = 0.0;
    bool any = false;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      v += cs[k] * xs[k].v;
      if (!xs[k].is_const()) {
        parents_.push_back(xs[k].idx);
        partials_.push_back(cs[k]);
        any = true;
      }
    }
    if (!any) return {v};
    ends_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return {v, static_cast<std::int32_t>(ends_.size() - 1), this};
  }

  /// Reverse sweep from a scalar loss; adds the adjoints of the first
  /// grad.size() nodes (the leaves seeded from a parameter vector) into grad.
  void backward(Var loss, std::span<double> grad) {
    if (loss.is_const() || loss.tape != this ||
        static_cast<std::size_t>(loss.idx) >= size()) {
      throw ContractViolation("backward: loss is not a scalar node on this tape");
    }
    adj_.assign(size(), 0.0);
    adj_[static_cast<std::size_t>(loss.idx)] = 1.0;
    for (std::int64_t i = static_cast<std::int64_t>(size()) - 1; i >= 0; --i) {
      const double a = adj_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const std::uint32_t lo = i > 0 ? ends_[static_cast<std::size_t>(i - 1)] : 0u;
      const std::uint32_t hi = ends_[static_cast<std::size_t>(i)];
      for (std::uint32_t u = lo; u < hi; ++u) {
        adj_[static_cast<std::size_t>(parents_[u])] += partials_[u] * a;
      }
    }
    const std::size_t n = std::min(grad.size(), size());
    for (std::size_t p = 0; p < n; ++p) grad[p] += adj_[p];
  }

 private:
  std::vector<std::uint32_t> ends_;
  std::vector<std::int32_t> parents_;
  std::vector<double> partials_;
  std::vector<double> adj_;
};

/// Gradient of a scalar loss with respect to the first n_params leaves.
inline std::vector<double> backward(Tape& tape, Var loss, std::size_t n_params) {
  std::vector<double> g(n_params, 0.0);
  tape.backward(loss, g);
  return g;
}

// ---- Var arithmetic ------------------------------------------------------

inline Var operator+(Var a, Var b) {
  if (a.is_const()) {
    if (b.is_const()) return {a.v + b.v};
    return {a.v + b.v, b.idx, b.tape};  // constant shift is free
  }
  if (b.is_const()) return {a.v + b.v, a.idx, a.tape};
  return a.tape->node2(a.v + b.v, a, 1.0, b, 1.0);
}
inline Var operator+(Var a, double c) { return a + Var{c}; }
inline Var operator+(double c, Var a) { return a + Var{c}; }

inline Var operator-(Var a) {
  if (a.is_const()) return {-a.v};
  return a.tape->node1(-a.v, a, -1.0);
}

inline Var operator-(Var a, Var b) {
  if (b.is_const()) {
    if (a.is_const()) return {a.v - b.v};
    return {a.v - b.v, a.idx, a.tape};
  }
  if (a.is_const()) return b.tape->node1(a.v - b.v, b, -1.0);
  return a.tape->node2(a.v - b.v, a, 1.0, b, -1.0);
}
inline Var operator-(Var a, double c) { return a - Var{c}; }
inline Var operator-(double c, Var a) { return Var{c} - a; }

inline Var operator*(Var a, Var b) {
  if (a.is_const()) {
    if (b.is_const()) return {a.v * b.v};
    if (a.v == 0.0) return {0.0};
    if (a.v == 1.0) return b;
    return b.tape->node1(a.v * b.v, b, a.v);
  }
  if (b.is_const()) {
    if (b.v == 0.0) return {0.0};
    if (b.v == 1.0) return a;
    return a.tape->node1(a.v * b.v, a, b.v);
  }
  return a.tape->node2(a.v * b.v, a, b.v, b, a.v);
}
inline Var operator*(Var a, double c) { return a * Var{c}; }
inline Var operator*(double c, Var a) { return a * Var{c}; }

inline Var operator/(Var a, Var b) {
  if (b.is_const()) return a * Var{1.0 / b.v};
  const double inv = 1.0 / b.v;
  const double v = a.v * inv;
  if (a.is_const()) return b.tape->node1(v, b, -v * inv);
  return a.tape->node2(v, a, inv, b, -v * inv);
}
inline Var operator/(Var a, double c) { return a * Var{1.0 / c}; }
inline Var operator/(double c, Var a) { return Var{c} / a; }

inline Var sqr(Var a) {
  if (a.is_const()) return {a.v * a.v};
  return a.tape->node1(a.v * a.v, a, 2.0 * a.v);
}

inline Var exp_(Var a) {
  const double e = std::exp(a.v);
  if (a.is_const()) return {e};
  return a.tape->node1(e, a, e);
}

inline Var log_(Var a) {
  if (a.is_const()) return {std::log(a.v)};
  return a.tape->node1(std::log(a.v), a, 1.0 / a.v);
}

inline Var sin_(Var a) {
  if (a.is_const()) return {std::sin(a.v)};
  return a.tape->node1(std::sin(a.v), a, std::cos(a.v));
}

inline Var cos_(Var a) {
  if (a.is_const()) return {std::cos(a.v)};
  return a.tape->node1(std::cos(a.v), a, -std::sin(a.v));
}

inline Var tanh_(Var a) {
  const double t = std::tanh(a.v);
  if (a.is_const()) return {t};
  return a.tape->node1(t, a, 1.0 - t * t);
}

inline double sigmoid_val(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Var sigmoid_(Var a) {
  const double s = sigmoid_val(a.v);
  if (a.is_const()) return {s};
  return a.tape->node1(s, a, s * (1.0 - s));
}

/// silu(x) = x*sigmoid(x), fused into one node.
inline Var silu_(Var a) {
  const double s = sigmoid_val(a.v);
  const double v = a.v * s;
  if (a.is_const()) return {v};
  return a.tape->node1(v, a, s * (1.0 + a.v * (1.0 - s)));
}

// Plain-double overloads so templated layer code works untracked.
inline double sqr(double a) { return a * a; }
inline double exp_(double a) { return std::exp(a); }
inline double log_(double a) { return std::log(a); }
inline double sin_(double a) { return std::sin(a); }
inline double cos_(double a) { return std::cos(a); }
inline double tanh_(double a) { return std::tanh(a); }
inline double sigmoid_(double a) { return sigmoid_val(a); }
inline double silu_(double a) { return a * sigmoid_val(a); }

inline double value_of(double a) { return a; }
inline double value_of(Var a) { return a.v; }

// ---- Second-order forward duals -------------------------------------------

/// Value with first and second derivatives in one chosen input direction.
/// Each channel is itself a Var, so parameter gradients flow through the
/// derivative channels when the tape is differentiated.
struct Dual2 {
  Var v, d1, d2;
};

inline double value_of(const Dual2& a) { return a.v.v; }

inline Dual2 dual2_const(double x) { return {Var{x}, Var{}, Var{}}; }

/// Tracked input for the differentiation axis: d/dx = 1, d2/dx2 = 0.
inline Dual2 dual2_input(double x) { return {Var{x}, Var{1.0}, Var{}}; }

inline Dual2 operator+(const Dual2& a, const Dual2& b) {
  return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2};
}
inline Dual2 operator-(const Dual2& a, const Dual2& b) {
  return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2};
}
inline Dual2 operator-(const Dual2& a) { return {-a.v, -a.d1, -a.d2}; }

inline Dual2 operator*(const Dual2& a, const Dual2& b) {
  Var cross = a.d1 * b.d1;
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * cross + a.v * b.d2};
}

// Scalars (Var or double) act as duals with zero derivative channels.
inline Dual2 operator+(const Dual2& a, Var s) { return {a.v + s, a.d1, a.d2}; }
inline Dual2 operator+(Var s, const Dual2& a) { return a + s; }
inline Dual2 operator+(const Dual2& a, double s) { return {a.v + s, a.d1, a.d2}; }
inline Dual2 operator-(const Dual2& a, Var s) { return {a.v - s, a.d1, a.d2}; }
inline Dual2 operator-(const Dual2& a, double s) { return {a.v - s, a.d1, a.d2}; }
inline Dual2 operator-(Var s, const Dual2& a) { return {s - a.v, -a.d1, -a.d2}; }
inline Dual2 operator*(const Dual2& a, Var s) { return {a.v * s, a.d1 * s, a.d2 * s}; }
inline Dual2 operator*(Var s, const Dual2& a) { return a * s; }
inline Dual2 operator*(const Dual2& a, double s) { return a * Var{s}; }
inline Dual2 operator*(double s, const Dual2& a) { return a * Var{s}; }

inline Dual2 sqr(const Dual2& a) {
  Var d1sq = sqr(a.d1);
  return {sqr(a.v), 2.0 * (a.v * a.d1), 2.0 * (a.v * a.d2) + 2.0 * d1sq};
}

/// Apply f given (f, f', f'', f''') at the point value. f''' enters as the
/// tape partial of the recorded f'' node, which second-order chain-rule terms
/// need when the tape itself is differentiated.
inline Dual2 apply_c3(const Dual2& z, double f0, double f1, double f2, double f3) {
  Var y = z.v.is_const() ? Var{f0} : z.v.tape->node1(f0, z.v, f1);
  const bool d1_live = !z.d1.is_const() || z.d1.v != 0.0;
  const bool d2_live = !z.d2.is_const() || z.d2.v != 0.0;
  if (!d1_live && !d2_live) return {y, Var{}, Var{}};
  Var f1v = z.v.is_const() ? Var{f1} : z.v.tape->node1(f1, z.v, f2);
  Var out_d1 = f1v * z.d1;
  Var out_d2 = f1v * z.d2;
  if (d1_live) {
    Var f2v = z.v.is_const() ? Var{f2} : z.v.tape->node1(f2, z.v, f3);
    out_d2 = out_d2 + f2v * sqr(z.d1);
  }
  return {y, out_d1, out_d2};
}

inline Dual2 exp_(const Dual2& a) {
  const double e = std::exp(a.v.v);
  return apply_c3(a, e, e, e, e);
}
inline Dual2 sin_(const Dual2& a) {
  const double s = std::sin(a.v.v), c = std::cos(a.v.v);
  return apply_c3(a, s, c, -s, -c);
}
inline Dual2 cos_(const Dual2& a) {
  const double s = std::sin(a.v.v), c = std::cos(a.v.v);
  return apply_c3(a, c, -s, -c, s);
}
inline Dual2 tanh_(const Dual2& a) {
  const double t = std::tanh(a.v.v);
  const double t1 = 1.0 - t * t;
  return apply_c3(a, t, t1, -2.0 * t * t1, -2.0 * t1 * (t1 - 2.0 * t * t));
}
inline Dual2 sigmoid_(const Dual2& a) {
  const double s = sigmoid_val(a.v.v);
  const double s1 = s * (1.0 - s);
  const double s2 = s1 * (1.0 - 2.0 * s);
  const double s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
  return apply_c3(a, s, s1, s2, s3);
}
inline Dual2 silu_(const Dual2& a) {
  const double x = a.v.v;
  const double s = sigmoid_val(x);
  const double s1 = s * (1.0 - s);
  const double s2 = s1 * (1.0 - 2.0 * s);
  const double s3 = s2 * (1.0 - 2.0 * s) - 2.0 * s1 * s1;
  return apply_c3(a, x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3);
}

// ---- Diagnostics -----------------------------------------------------------

/// Max over coordinates of |analytic - central difference| / (|analytic| + eps)
/// for a scalar function of a point, differentiated through a fresh tape.
template <class F>
double grad_check(F&& f, std::span<const double> point, double eps,
                  double h = 1e-6) {
  Tape tape;
  tape.seed(point);
  std::vector<Var> xs(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    xs[i] = Var{point[i], static_cast<std::int32_t>(i), &tape};
  }
  Var loss = f(tape, std::span<const Var>(xs));
  std::vector<double> g(point.size(), 0.0);
  tape.backward(loss, g);

  std::vector<double> p(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    auto eval = [&](double x) {
      p[i] = x;
      Tape t2;
      t2.seed(p);
      std::vector<Var> ys(p.size());
      for (std::size_t k = 0; k < p.size(); ++k) {
        ys[k] = Var{p[k], static_cast<std::int32_t>(k), &t2};
      }
      Var out = f(t2, std::span<const Var>(ys));
      return out.v;
    };
    const double fd = (eval(keep + h) - eval(keep - h)) / (2.0 * h);
    p[i] = keep;
    const double err = std::abs(g[i] - fd) / (std::abs(g[i]) + eps);
    worst = std::max(worst, err);
  }
  return worst;
}

/// (u, du/dx_axis, d2u/dx_axis2) of a scalar field, all tracked on the field's
/// tape. The field sees Dual2 inputs; only the chosen axis carries derivative
/// channels.
template <class Field>
std::array<Var, 3> eval_with_input_derivs(Field&& field,
                                          std::span<const double> x,
                                          std::size_t axis) {
  if (axis >= x.size()) throw ContractViolation("derivative axis out of range");
  std::vector<Dual2> in(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    in[j] = j == axis ? dual2_input(x[j]) : dual2_const(x[j]);
  }
  Dual2 out = field(std::span<const Dual2>(in));
  return {out.v, out.d1, out.d2};
}

}  // namespace ad
}  // namespace fkan
