#pragma once

// Operator learning on the 1D reaction-diffusion equation
//   u_t = D u_xx + k u^2 + f(x)
// with zero initial condition and zero Dirichlet ends: a Gaussian-random-field
// forcing sampler, a reference solver (implicit diffusion, explicit reaction),
// and a DeepONet whose trunk architecture is swappable.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/linalg.hpp"
#include "fkan/model.hpp"
#include "fkan/optim.hpp"
#include "fkan/rng.hpp"

namespace fkan::onet {

/// Stationary Gaussian random field on a fixed sensor grid, sampled through a
/// Cholesky factor of the squared-exponential covariance.
class GRFSampler {
 public:
  explicit GRFSampler(std::size_t n_sensors = 100, double length_scale = 0.2)
      : sensors_(n_sensors) {
    for (std::size_t i = 0; i < n_sensors; ++i) {
      sensors_[i] = static_cast<double>(i) / (n_sensors - 1);
    }
    linalg::Mat cov(n_sensors, n_sensors);
    for (std::size_t i = 0; i < n_sensors; ++i) {
      for (std::size_t j = 0; j < n_sensors; ++j) {
        const double d = sensors_[i] - sensors_[j];
        cov(i, j) = std::exp(-d * d / (2.0 * length_scale * length_scale));
      }
    }
    for (double jitter : {1e-10, 1e-8, 1e-6}) {
      linalg::Mat c = cov;
      for (std::size_t i = 0; i < n_sensors; ++i) c(i, i) += jitter;
      try {
        chol_ = linalg::cholesky(c);
        return;
      } catch (const std::runtime_error&) {
      }
    }
    throw std::runtime_error("GRF covariance factorization failed");
  }

  const std::vector<double>& sensors() const { return sensors_; }

  std::vector<double> sample(std::uint64_t seed) const {
    const std::size_t n = sensors_.size();
    auto g = rng::substream(seed, "grf");
    std::vector<double> z(n), f(n, 0.0);
    for (auto& zi : z) zi = g.normal();
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j <= i; ++j) s += chol_(i, j) * z[j];
      f[i] = s;
    }
    return f;
  }

 private:
  std::vector<double> sensors_;
  linalg::Mat chol_;
};

struct RDSolverConfig {
  double diffusion = 0.01;
  double reaction = 0.01;
  std::size_t nx = 100;  // spatial nodes on [0,1], ends held at zero
  std::size_t nt = 100;  // time steps covering (0,1]
};

/// Backward-Euler diffusion with explicit reaction and forcing; one
/// tridiagonal solve per step. Returns u on the nx x nt space-time grid.
inline linalg::Mat solve_reaction_diffusion(const RDSolverConfig& cfg,
                                            std::span<const double> f) {
  if (f.size() != cfg.nx) {
    throw std::invalid_argument("forcing must be given at the spatial nodes");
  }
  const std::size_t ni = cfg.nx - 2;  // interior unknowns
  const double h = 1.0 / static_cast<double>(cfg.nx - 1);
  const double dt = 1.0 / static_cast<double>(cfg.nt);
  const double mu = cfg.diffusion * dt / (h * h);

  std::vector<double> lower(ni, -mu), diag(ni, 1.0 + 2.0 * mu), upper(ni, -mu);
  std::vector<double> u(ni, 0.0), rhs(ni);
  linalg::Mat out(cfg.nx, cfg.nt);
  for (std::size_t n = 0; n < cfg.nt; ++n) {
    for (std::size_t i = 0; i < ni; ++i) {
      rhs[i] = u[i] + dt * (cfg.reaction * u[i] * u[i] + f[i + 1]);
    }
    u = linalg::solve_tridiag(lower, diag, upper, rhs);
    for (std::size_t i = 0; i < ni; ++i) {
      if (std::abs(u[i]) > 1e6) throw NumericError("reaction-diffusion blow-up");
      out(i + 1, n) = u[i];
    }
  }
  return out;
}

struct QuerySample {
  std::vector<double> f_sensors;
  std::array<double, 2> xt;
  double u = 0.0;
};

struct OperatorDataset {
  RDSolverConfig config;
  std::uint64_t seed = 0;
  std::vector<double> sensors;
  std::vector<std::vector<double>> forcings;        // one per function
  std::vector<std::vector<std::array<std::uint32_t, 2>>> query_idx;  // (ix, it)
  std::vector<QuerySample> triples;
};

/// Training triples: forcing sensors, a query location on the interior grid,
/// and the reference solution there.
inline OperatorDataset build_dataset(std::size_t n_functions, std::size_t queries_per_function,
                                     std::uint64_t seed,
                                     const RDSolverConfig& cfg = {}) {
  OperatorDataset ds;
  ds.config = cfg;
  ds.seed = seed;
  GRFSampler grf(cfg.nx);
  ds.sensors = grf.sensors();
  auto gq = rng::substream(seed, "operator/queries");
  for (std::size_t fi = 0; fi < n_functions; ++fi) {
    auto f = grf.sample(rng::substream(seed, "operator/forcing").next_u64() + fi);
    const linalg::Mat u = solve_reaction_diffusion(cfg, f);
    std::vector<std::array<std::uint32_t, 2>> qs;
    for (std::size_t q = 0; q < queries_per_function; ++q) {
      const auto ix = static_cast<std::uint32_t>(1 + gq.below(cfg.nx - 2));
      const auto it = static_cast<std::uint32_t>(gq.below(cfg.nt));
      qs.push_back({ix, it});
      QuerySample t;
      t.f_sensors = f;
      t.xt = {ds.sensors[ix], static_cast<double>(it + 1) / static_cast<double>(cfg.nt)};
      t.u = u(ix, it);
      ds.triples.push_back(std::move(t));
    }
    ds.query_idx.push_back(std::move(qs));
    ds.forcings.push_back(std::move(f));
  }
  return ds;
}

/// Branch MLP encoding the forcing, trunk model encoding the query point;
/// the prediction is their inner product plus a trainable scalar bias.
struct DeepONet {
  Model branch;
  Model trunk;
  std::size_t bias_off = 0;

  static DeepONet init(const ModelSpec& branch_spec, const ModelSpec& trunk_spec,
                       std::uint64_t seed, ParamStore& store) {
    DeepONet net;
    net.branch = init_model(branch_spec, seed, store);
    net.trunk = init_model(trunk_spec, rng::mix64(seed + 1), store);
    net.bias_off = store.add("output_bias", 1);
    if (net.branch.n_out() != net.trunk.n_out()) {
      throw std::invalid_argument("branch and trunk output widths must match");
    }
    return net;
  }
};

template <class S, class Ctx>
S deeponet_forward(const DeepONet& net, Ctx& ctx,
                   const ModelCache<typename Ctx::param_type>& branch_cache,
                   const ModelCache<typename Ctx::param_type>& trunk_cache,
                   std::span<const S> f_sensors, std::span<const S> xt) {
  using P = typename Ctx::param_type;
  auto b = model_forward<S>(net.branch, ctx, branch_cache, f_sensors);
  auto t = model_forward<S>(net.trunk, ctx, trunk_cache, xt);
  S acc = detail::wsum(ctx, std::span<const S>(b), std::span<const S>(t));
  return acc + ctx.param(net.bias_off);
}

/// Untracked prediction for a single query.
inline double deeponet_predict(const DeepONet& net, const ParamStore& ps,
                               std::span<const double> f_sensors,
                               std::span<const double> xt) {
  EvalCtx ctx{ps.data()};
  auto bc = make_cache(net.branch, ctx);
  auto tc = make_cache(net.trunk, ctx);
  return deeponet_forward<double>(net, ctx, bc, tc, f_sensors, xt);
}

/// ||pred - truth||_2 / ||truth||_2 over matching grids.
inline double rel_l2(const linalg::Mat& pred, const linalg::Mat& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols) {
    throw std::invalid_argument("rel_l2: shape mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.a.size(); ++i) {
    num += (pred.a[i] - truth.a[i]) * (pred.a[i] - truth.a[i]);
    den += truth.a[i] * truth.a[i];
  }
  if (den == 0.0) throw std::invalid_argument("rel_l2: zero reference field");
  return std::sqrt(num / den);
}

/// Full-grid relative error of the network against the solver for one
/// forcing sample.
inline double evaluate_on_forcing(const DeepONet& net, const ParamStore& ps,
                                  const RDSolverConfig& cfg,
                                  std::span<const double> f,
                                  std::span<const double> sensors) {
  const linalg::Mat truth = solve_reaction_diffusion(cfg, f);
  linalg::Mat pred(cfg.nx, cfg.nt);
  EvalCtx ctx{ps.data()};
  auto bc = make_cache(net.branch, ctx);
  auto tc = make_cache(net.trunk, ctx);
  std::vector<double> fs(f.begin(), f.end());
  auto bout = model_forward<double>(net.branch, ctx, bc, std::span<const double>(fs));
  const double bias = ps.values()[net.bias_off];
  for (std::size_t ix = 0; ix < cfg.nx; ++ix) {
    for (std::size_t it = 0; it < cfg.nt; ++it) {
      const std::array<double, 2> xt{sensors[ix],
                                     static_cast<double>(it + 1) / static_cast<double>(cfg.nt)};
      auto tout = model_forward<double>(net.trunk, ctx, tc, {xt.data(), 2});
      double s = bias;
      for (std::size_t k = 0; k < bout.size(); ++k) s += bout[k] * tout[k];
      pred(ix, it) = s;
    }
  }
  return rel_l2(pred, truth);
}

}  // namespace fkan::onet
