#pragma once

// Optimizers used by the experiments: Adam, L-BFGS with two-loop recursion and
// Armijo backtracking, and an exponential learning-rate schedule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace fkan {

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

namespace opt {

class Adam {
 public:
  explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  long long step_count() const { return t_; }

  void step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument("adam: size mismatch");
    }
    for (double g : grads) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * grads[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  void reset() {
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    t_ = 0;
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::vector<double> m_, v_;
  long long t_ = 0;
};

/// lr(epoch) = base_lr * gamma^epoch, advanced multiplicatively so consecutive
/// ratios are exactly gamma.
class ExpSchedule {
 public:
  ExpSchedule(double base_lr, double gamma) : base_(base_lr), gamma_(gamma), cur_(base_lr) {}

  double current() const { return cur_; }
  void advance() { cur_ *= gamma_; }

  double lr_at(long long epoch) const {
    double lr = base_;
    for (long long e = 0; e < epoch; ++e) lr *= gamma_;
    return lr;
  }

 private:
  double base_, gamma_, cur_;
};

/// Limited-memory BFGS. The closure evaluates loss and gradient at a point;
/// each step takes the two-loop direction, backtracks from a unit step until
/// the Armijo condition holds, and either decreases the loss or moves nothing.
class Lbfgs {
 public:
  struct Result {
    double loss = 0.0;
    double step = 0.0;  // accepted step length, 0 when rejected
  };

  explicit Lbfgs(std::size_t history = 10, double armijo_c = 1e-4,
                 double shrink = 0.5, int max_backtracks = 20)
      : cap_(history), c1_(armijo_c), shrink_(shrink), max_bt_(max_backtracks) {}

  void reset() { hist_.clear(); }
  std::size_t history_size() const { return hist_.size(); }

  /// closure: (span<const double> x, span<double> grad_out) -> double loss.
  template <class Closure>
  Result step(std::vector<double>& x, Closure&& closure) {
    const std::size_t n = x.size();
    std::vector<double> g(n, 0.0);
    const double f0 = closure(std::span<const double>(x), std::span<double>(g));
    if (!std::isfinite(f0)) {
      hist_.clear();
      return {f0, 0.0};
    }

    std::vector<double> d = direction(g);
    double dg = 0.0;
    for (std::size_t i = 0; i < n; ++i) dg += d[i] * g[i];
    if (dg >= 0.0) {  // stale curvature produced a non-descent direction
      hist_.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      dg = 0.0;
      for (std::size_t i = 0; i < n; ++i) dg += d[i] * g[i];
      if (dg == 0.0) return {f0, 0.0};  // stationary point
    }

    std::vector<double> xt(n), gt(n);
    double t = 1.0;
    for (int bt = 0; bt <= max_bt_; ++bt) {
      for (std::size_t i = 0; i < n; ++i) xt[i] = x[i] + t * d[i];
      std::fill(gt.begin(), gt.end(), 0.0);
      const double ft =
          closure(std::span<const double>(xt), std::span<double>(gt));
      if (std::isfinite(ft) && ft <= f0 + c1_ * t * dg) {
        push_pair(x, g, xt, gt, t, d);
        x = xt;
        return {ft, t};
      }
      t *= shrink_;
    }
    hist_.clear();  // no acceptable step; restart from steepest descent next time
    return {f0, 0.0};
  }

 private:
  std::vector<double> direction(const std::vector<double>& g) {
    const std::size_t n = g.size();
    std::vector<double> q(g.begin(), g.end());
    std::vector<double> alpha(hist_.size());
    for (std::size_t k = hist_.size(); k-- > 0;) {
      const auto& [s, y, rho] = hist_[k];
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += s[i] * q[i];
      a *= rho;
      alpha[k] = a;
      for (std::size_t i = 0; i < n; ++i) q[i] -= a * y[i];
    }
    if (!hist_.empty()) {
      const auto& [s, y, rho] = hist_.back();
      double yy = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        yy += y[i] * y[i];
        sy += s[i] * y[i];
      }
      const double gamma = sy / yy;
      for (auto& qi : q) qi *= gamma;
    }
    for (std::size_t k = 0; k < hist_.size(); ++k) {
      const auto& [s, y, rho] = hist_[k];
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += y[i] * q[i];
      b *= rho;
      for (std::size_t i = 0; i < n; ++i) q[i] += (alpha[k] - b) * s[i];
    }
    for (auto& qi : q) qi = -qi;
    return q;
  }

  void push_pair(const std::vector<double>& x0, const std::vector<double>& g0,
                 const std::vector<double>& x1, const std::vector<double>& g1,
                 double, const std::vector<double>&) {
    const std::size_t n = x0.size();
    std::vector<double> s(n), y(n);
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x1[i] - x0[i];
      y[i] = g1[i] - g0[i];
      sy += s[i] * y[i];
    }
    if (sy <= 1e-10) return;  // skip pairs with unusable curvature
    hist_.emplace_back(std::move(s), std::move(y), 1.0 / sy);
    if (hist_.size() > cap_) hist_.pop_front();
  }

  std::size_t cap_;
  double c1_, shrink_;
  int max_bt_;
  std::deque<std::tuple<std::vector<double>, std::vector<double>, double>> hist_;
};

}  // namespace opt
}  // namespace fkan
