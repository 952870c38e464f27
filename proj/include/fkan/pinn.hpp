#pragma once

// Physics-informed training: collocation sampling, strong-form loss built
// from second-order input derivatives, and the heat-conduction and Helmholtz
// benchmark problems on box domains.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/model.hpp"
#include "fkan/optim.hpp"
#include "fkan/rng.hpp"

namespace fkan::pinn {

/// Field derivatives handed to a residual operator. Slots that the problem's
/// derivative orders do not request stay zero constants.
struct Derivs {
  ad::Var u;
  std::array<ad::Var, 2> d1;  // du/dx_a
  std::array<ad::Var, 2> d2;  // d2u/dx_a2
};

struct BoundarySegment {
  std::string name;
  int fixed_axis = 0;
  double fixed_value = 0.0;
  double free_lo = 0.0, free_hi = 1.0;
  std::function<double(std::span<const double>)> target;  // g on the segment
};

struct PDEProblem {
  std::string name;
  std::array<double, 2> lo{0.0, 0.0}, hi{1.0, 1.0};
  std::array<int, 2> deriv_order{2, 2};  // derivative order needed per axis
  // N[u](x) - f(x), as tape math over the provided derivatives.
  std::function<ad::Var(const Derivs&, std::span<const double>)> residual;
  std::vector<BoundarySegment> segments;
  bool has_exact = false;
  std::function<double(std::span<const double>)> exact;
  std::function<ad::Dual2(std::span<const ad::Dual2>)> exact2;
};

struct CollocationSet {
  std::vector<std::array<double, 2>> interior;
  // one vector of (point, target) per segment
  std::vector<std::vector<std::array<double, 3>>> boundary;  // x, y|t, g
};

inline CollocationSet sample_collocation(const PDEProblem& prob,
                                         std::size_t n_interior,
                                         std::size_t n_boundary_per_segment,
                                         std::uint64_t seed) {
  if (n_interior == 0 || n_boundary_per_segment == 0) {
    throw std::invalid_argument("sample_collocation: counts must be positive");
  }
  CollocationSet cs;
  auto gi = rng::substream(seed, "collocation/interior");
  cs.interior.resize(n_interior);
  for (auto& pt : cs.interior) {
    pt[0] = prob.lo[0] + (prob.hi[0] - prob.lo[0]) * gi.uniform01();
    pt[1] = prob.lo[1] + (prob.hi[1] - prob.lo[1]) * gi.uniform01();
  }
  cs.boundary.resize(prob.segments.size());
  for (std::size_t s = 0; s < prob.segments.size(); ++s) {
    const auto& seg = prob.segments[s];
    auto gb = rng::substream(seed, "collocation/boundary/" + seg.name);
    cs.boundary[s].resize(n_boundary_per_segment);
    for (auto& rec : cs.boundary[s]) {
      std::array<double, 2> pt{};
      pt[static_cast<std::size_t>(seg.fixed_axis)] = seg.fixed_value;
      pt[static_cast<std::size_t>(1 - seg.fixed_axis)] =
          seg.free_lo + (seg.free_hi - seg.free_lo) * gb.uniform01();
      rec = {pt[0], pt[1], seg.target(pt)};
    }
  }
  return cs;
}

namespace detail {

/// Fills the derivative slots a problem needs via one dual pass per axis.
template <class Field2>
Derivs field_derivs(Field2&& field, const PDEProblem& prob,
                    std::span<const double> x) {
  Derivs d;
  bool have_u = false;
  for (std::size_t a = 0; a < 2; ++a) {
    if (prob.deriv_order[a] == 0) continue;
    auto got = ad::eval_with_input_derivs(field, x, a);
    if (!have_u) {
      d.u = got[0];
      have_u = true;
    }
    d.d1[a] = got[1];
    if (prob.deriv_order[a] >= 2) d.d2[a] = got[2];
  }
  return d;
}

}  // namespace detail

/// Strong-form loss on one tape:
///   (lambda_c / N_c) sum |N[u](x) - f(x)|^2
/// + lambda_b * sum_segments mean |u - g|^2 on that segment.
/// The field is any Dual2-evaluable scalar function of the inputs.
template <class Field2, class Field0>
ad::Var pinn_loss_fields(ad::Tape& tape, Field2&& field2, Field0&& field0,
                         const PDEProblem& prob, const CollocationSet& colloc,
                         double lambda_c, double lambda_b) {
  thread_local std::vector<ad::Var> sq;
  sq.clear();
  for (const auto& pt : colloc.interior) {
    Derivs d = detail::field_derivs(field2, prob, {pt.data(), 2});
    ad::Var r = prob.residual(d, {pt.data(), 2});
    sq.push_back(ad::sqr(r));
  }
  ad::Var loss = tape.sum(sq) * (lambda_c / static_cast<double>(colloc.interior.size()));
  for (const auto& seg : colloc.boundary) {
    sq.clear();
    for (const auto& rec : seg) {
      const std::array<double, 2> pt{rec[0], rec[1]};
      ad::Var u = field0(std::span<const double>(pt.data(), 2));
      sq.push_back(ad::sqr(u - rec[2]));
    }
    loss = loss + tape.sum(sq) * (lambda_b / static_cast<double>(seg.size()));
  }
  return loss;
}

/// pinn_loss for a model; errors out up front when the kernel cannot support
/// parameter gradients of the requested derivative orders.
inline ad::Var pinn_loss(ad::Tape& tape, const Model& m, const ParamStore& ps,
                         const PDEProblem& prob, const CollocationSet& colloc,
                         double lambda_c = 1.0, double lambda_b = 1.0) {
  const int max_order = std::max(prob.deriv_order[0], prob.deriv_order[1]);
  if ((m.spec.kind == "rbf-kan" || m.spec.kind == "free-rbf-kan") &&
      !kernels::smooth_enough(m.spec.kernel, max_order)) {
    throw std::invalid_argument(
        "pinn_loss: kernel is not smooth enough for the residual's "
        "derivative order; use the Gaussian kernel");
  }
  if (tape.size() == 0) tape.seed(ps.values());
  TapeCtx ctx{&tape, ps.data()};
  auto cache = make_cache(m, ctx);
  auto field2 = [&](std::span<const ad::Dual2> in) {
    return model_forward<ad::Dual2>(m, ctx, cache, in)[0];
  };
  auto field0 = [&](std::span<const double> x) {
    thread_local std::vector<ad::Var> xv;
    xv.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xv[j] = ad::Var{x[j]};
    return model_forward<ad::Var>(m, ctx, cache, xv)[0];
  };
  return pinn_loss_fields(tape, field2, field0, prob, colloc, lambda_c, lambda_b);
}

/// Loss and parameter gradient, accumulated over collocation chunks on a
/// reused tape so memory stays bounded on large batches.
inline double pinn_loss_grad(const Model& m, const ParamStore& ps,
                             const PDEProblem& prob, const CollocationSet& colloc,
                             double lambda_c, double lambda_b,
                             std::span<double> grad, double* interior_loss = nullptr,
                             double* boundary_loss = nullptr,
                             std::size_t chunk = 64) {
  const int max_order = std::max(prob.deriv_order[0], prob.deriv_order[1]);
  if ((m.spec.kind == "rbf-kan" || m.spec.kind == "free-rbf-kan") &&
      !kernels::smooth_enough(m.spec.kernel, max_order)) {
    throw std::invalid_argument(
        "pinn_loss: kernel is not smooth enough for the residual's "
        "derivative order; use the Gaussian kernel");
  }
  thread_local ad::Tape tape;
  thread_local std::vector<ad::Var> sq;
  double li = 0.0, lb = 0.0;
  const double wc = lambda_c / static_cast<double>(colloc.interior.size());

  for (std::size_t at = 0; at < colloc.interior.size(); at += chunk) {
    const std::size_t stop = std::min(at + chunk, colloc.interior.size());
    tape.clear();
    tape.seed(ps.values());
    TapeCtx ctx{&tape, ps.data()};
    auto cache = make_cache(m, ctx);
    auto field2 = [&](std::span<const ad::Dual2> in) {
      return model_forward<ad::Dual2>(m, ctx, cache, in)[0];
    };
    sq.clear();
    for (std::size_t i = at; i < stop; ++i) {
      const auto& pt = colloc.interior[i];
      Derivs d = detail::field_derivs(field2, prob, {pt.data(), 2});
      ad::Var r = prob.residual(d, {pt.data(), 2});
      sq.push_back(ad::sqr(r));
    }
    ad::Var term = tape.sum(sq) * wc;
    li += term.v;
    tape.backward(term, grad);
  }

  for (const auto& seg : colloc.boundary) {
    const double wb = lambda_b / static_cast<double>(seg.size());
    for (std::size_t at = 0; at < seg.size(); at += chunk * 8) {
      const std::size_t stop = std::min(at + chunk * 8, seg.size());
      tape.clear();
      tape.seed(ps.values());
      TapeCtx ctx{&tape, ps.data()};
      auto cache = make_cache(m, ctx);
      sq.clear();
      for (std::size_t i = at; i < stop; ++i) {
        const auto& rec = seg[i];
        std::array<double, 2> pt{rec[0], rec[1]};
        std::array<ad::Var, 2> xv{ad::Var{pt[0]}, ad::Var{pt[1]}};
        auto out = model_forward<ad::Var>(m, ctx, cache, std::span<const ad::Var>(xv.data(), 2));
        sq.push_back(ad::sqr(out[0] - rec[2]));
      }
      ad::Var term = tape.sum(sq) * wb;
      lb += term.v;
      tape.backward(term, grad);
    }
  }
  if (interior_loss) *interior_loss = li;
  if (boundary_loss) *boundary_loss = lb;
  return li + lb;
}

// ---- benchmark problems ----------------------------------------------------

/// u_t = u_xx / (K pi)^2 on [0,1]^2 with u(x,0) = sin(K pi x) and zero
/// Dirichlet sides; exact solution u = exp(-t) sin(K pi x).
inline PDEProblem heat_problem(int k_freq) {
  if (k_freq < 1) throw std::invalid_argument("heat_problem: K must be >= 1");
  const double kpi = k_freq * std::numbers::pi;
  PDEProblem p;
  p.name = "heat";
  p.lo = {0.0, 0.0};
  p.hi = {1.0, 1.0};
  p.deriv_order = {2, 1};  // u_xx and u_t
  const double inv = 1.0 / (kpi * kpi);
  p.residual = [inv](const Derivs& d, std::span<const double>) {
    return d.d1[1] - d.d2[0] * inv;
  };
  p.segments.push_back({"t0", 1, 0.0, 0.0, 1.0,
                        [kpi](std::span<const double> x) { return std::sin(kpi * x[0]); }});
  p.segments.push_back({"x0", 0, 0.0, 0.0, 1.0,
                        [](std::span<const double>) { return 0.0; }});
  p.segments.push_back({"x1", 0, 1.0, 0.0, 1.0,
                        [](std::span<const double>) { return 0.0; }});
  p.has_exact = true;
  p.exact = [kpi](std::span<const double> x) {
    return std::exp(-x[1]) * std::sin(kpi * x[0]);
  };
  p.exact2 = [kpi](std::span<const ad::Dual2> x) {
    return ad::exp_(-x[1]) * ad::sin_(kpi * x[0]);
  };
  return p;
}

/// u_xx + u_yy + k^2 u = q on [-3,3]^2 with zero Dirichlet boundary; q is
/// manufactured so u = sin(a1 pi x) sin(a2 pi y) solves the problem.
inline PDEProblem helmholtz_problem(int a1, int a2, double k) {
  const double pi = std::numbers::pi;
  PDEProblem p;
  p.name = "helmholtz";
  p.lo = {-3.0, -3.0};
  p.hi = {3.0, 3.0};
  p.deriv_order = {2, 2};
  const double w1 = a1 * pi, w2 = a2 * pi, k2 = k * k;
  auto q = [w1, w2, k2](double x, double y) {
    const double s = std::sin(w1 * x) * std::sin(w2 * y);
    return (k2 - w1 * w1 - w2 * w2) * s;
  };
  p.residual = [k2, q](const Derivs& d, std::span<const double> x) {
    return d.d2[0] + d.d2[1] + k2 * d.u - q(x[0], x[1]);
  };
  for (int s = 0; s < 4; ++s) {
    BoundarySegment seg;
    seg.fixed_axis = s / 2;
    seg.fixed_value = (s % 2 == 0) ? -3.0 : 3.0;
    seg.free_lo = -3.0;
    seg.free_hi = 3.0;
    seg.name = std::string(seg.fixed_axis == 0 ? "x" : "y") + (s % 2 == 0 ? "lo" : "hi");
    seg.target = [](std::span<const double>) { return 0.0; };
    p.segments.push_back(std::move(seg));
  }
  p.has_exact = true;
  p.exact = [w1, w2](std::span<const double> x) {
    return std::sin(w1 * x[0]) * std::sin(w2 * x[1]);
  };
  p.exact2 = [w1, w2](std::span<const ad::Dual2> x) {
    return ad::sin_(w1 * x[0]) * ad::sin_(w2 * x[1]);
  };
  return p;
}

/// Relative L2 and Linf error of the model field against the exact solution
/// on a uniform grid including the boundaries.
inline std::pair<double, double> error_metrics(const Model& m, const ParamStore& ps,
                                               const PDEProblem& prob,
                                               std::size_t grid_n = 256) {
  if (!prob.has_exact) {
    throw std::invalid_argument("error_metrics: problem has no exact solution");
  }
  EvalCtx ctx{ps.data()};
  auto cache = make_cache(m, ctx);
  double num2 = 0.0, den2 = 0.0, numi = 0.0, deni = 0.0;
  for (std::size_t i = 0; i < grid_n; ++i) {
    for (std::size_t j = 0; j < grid_n; ++j) {
      const std::array<double, 2> pt{
          prob.lo[0] + (prob.hi[0] - prob.lo[0]) * static_cast<double>(i) / (grid_n - 1),
          prob.lo[1] + (prob.hi[1] - prob.lo[1]) * static_cast<double>(j) / (grid_n - 1)};
      const double ue = prob.exact({pt.data(), 2});
      const double up = model_forward<double>(m, ctx, cache, {pt.data(), 2})[0];
      num2 += (up - ue) * (up - ue);
      den2 += ue * ue;
      numi = std::max(numi, std::abs(up - ue));
      deni = std::max(deni, std::abs(ue));
    }
  }
  return {std::sqrt(num2 / den2), numi / deni};
}

}  // namespace fkan::pinn
