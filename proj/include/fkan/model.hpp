#pragma once

// The four architectures (MLP, B-spline KAN, RBF-KAN, Free-RBF-KAN) as
// composable layers over a ParamStore. Layer forwards are generic over the
// signal type: plain double for inference, Var for parameter gradients, Dual2
// for input derivatives that stay parameter-differentiable.
//
// A Free-RBF-KAN layer maps output i as
//   rho_o( sum_j W_rbf[i,j] * sum_m omega[i,j,m] * K((x_j - c[i,j,m])/sigma[i,j,m])
//          + sum_j W[i,j] * silu(x_j) )
// with rho_o = sigmoid on hidden layers, identity on the output layer.
// Centroids live strictly inside the layer's grid domain through a tanh
// reparameterization; smoothness stays positive through sigma = exp(raw).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fkan/ad.hpp"
#include "fkan/kernels.hpp"
#include "fkan/params.hpp"
#include "fkan/rng.hpp"

namespace fkan {

// Make the tracked math names usable unqualified on plain doubles too.
using ad::cos_;
using ad::exp_;
using ad::sigmoid_;
using ad::silu_;
using ad::sin_;
using ad::sqr;
using ad::tanh_;
using ad::value_of;

// ---- evaluation contexts ---------------------------------------------------

/// Reads parameters as plain doubles (no tracking).
struct EvalCtx {
  using param_type = double;
  const double* p = nullptr;
  double param(std::size_t off) const { return p[off]; }
};

/// Reads parameters as tape leaves; requires tape.seed(store.values()) first.
struct TapeCtx {
  using param_type = ad::Var;
  ad::Tape* tape = nullptr;
  const double* p = nullptr;
  ad::Var param(std::size_t off) const {
    return {p[off], static_cast<std::int32_t>(off), tape};
  }
};

namespace detail {

template <class S>
S make_const(double c) {
  return S(c);
}
template <>
inline ad::Var make_const<ad::Var>(double c) {
  return ad::Var{c};
}
template <>
inline ad::Dual2 make_const<ad::Dual2>(double c) {
  return ad::dual2_const(c);
}

template <class P>
P to_param(double c) {
  return P(c);
}
template <>
inline ad::Var to_param<ad::Var>(double c) {
  return ad::Var{c};
}

/// exp(-a) in one node.
inline ad::Var exp_neg(ad::Var a) {
  const double e = std::exp(-a.v);
  if (a.is_const()) return ad::Var{e};
  return a.tape->node1(e, a, -e);
}
inline double exp_neg(double a) { return std::exp(-a); }

// sum_k w[k]*s[k], with w a parameter span and s a signal span.
inline double wsum(EvalCtx&, std::span<const double> w,
                   std::span<const double> s) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * s[k];
  return acc;
}
inline ad::Var wsum(TapeCtx& c, std::span<const ad::Var> w,
                    std::span<const ad::Var> s) {
  return c.tape->dot(w, s);
}
inline ad::Dual2 wsum(TapeCtx& c, std::span<const ad::Var> w,
                      std::span<const ad::Dual2> s) {
  thread_local std::vector<ad::Var> cv, c1, c2;
  cv.resize(s.size());
  c1.resize(s.size());
  c2.resize(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    cv[k] = s[k].v;
    c1[k] = s[k].d1;
    c2[k] = s[k].d2;
  }
  return {c.tape->dot(w, cv), c.tape->dot(w, c1), c.tape->dot(w, c2)};
}

// bias + sum_k w[k]*s[k]
inline double affine(EvalCtx&, std::span<const double> w,
                     std::span<const double> s, double bias) {
  double acc = bias;
  for (std::size_t k = 0; k < w.size(); ++k) acc += w[k] * s[k];
  return acc;
}
inline ad::Var affine(TapeCtx& c, std::span<const ad::Var> w,
                      std::span<const ad::Var> s, ad::Var bias) {
  return c.tape->dot(w, s, bias);
}
inline ad::Dual2 affine(TapeCtx& c, std::span<const ad::Var> w,
                        std::span<const ad::Dual2> s, ad::Var bias) {
  thread_local std::vector<ad::Var> cv, c1, c2;
  cv.resize(s.size());
  c1.resize(s.size());
  c2.resize(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    cv[k] = s[k].v;
    c1[k] = s[k].d1;
    c2[k] = s[k].d2;
  }
  return {c.tape->dot(w, cv, bias), c.tape->dot(w, c1), c.tape->dot(w, c2)};
}

inline double sum_all(EvalCtx&, std::span<const double> xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc;
}
inline ad::Var sum_all(TapeCtx& c, std::span<const ad::Var> xs) {
  return c.tape->sum(xs);
}
inline ad::Dual2 sum_all(TapeCtx& c, std::span<const ad::Dual2> xs) {
  thread_local std::vector<ad::Var> cv, c1, c2;
  cv.resize(xs.size());
  c1.resize(xs.size());
  c2.resize(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    cv[k] = xs[k].v;
    c1[k] = xs[k].d1;
    c2[k] = xs[k].d2;
  }
  return {c.tape->sum(cv), c.tape->sum(c1), c.tape->sum(c2)};
}

}  // namespace detail

// ---- reparameterizations -----------------------------------------------------

/// Centroid location from an unconstrained parameter:
/// c = lo + (hi-lo)/2 * (tanh(raw) + 1), clamped to the open interval when
/// tanh saturates to exactly +-1 in floating point.
inline double map_centroid(double raw, double grid_lo, double grid_hi) {
  if (!(grid_lo < grid_hi)) {
    throw std::invalid_argument("map_centroid: grid_lo must be < grid_hi");
  }
  double c = grid_lo + 0.5 * (grid_hi - grid_lo) * (std::tanh(raw) + 1.0);
  const double clo = std::nextafter(grid_lo, grid_hi);
  const double chi = std::nextafter(grid_hi, grid_lo);
  return std::min(std::max(c, clo), chi);
}

inline ad::Var map_centroid(ad::Var raw, double grid_lo, double grid_hi) {
  if (!(grid_lo < grid_hi)) {
    throw std::invalid_argument("map_centroid: grid_lo must be < grid_hi");
  }
  ad::Var c = ad::tanh_(raw) * (0.5 * (grid_hi - grid_lo)) +
              (0.5 * (grid_hi + grid_lo));
  const double clo = std::nextafter(grid_lo, grid_hi);
  const double chi = std::nextafter(grid_hi, grid_lo);
  c.v = std::min(std::max(c.v, clo), chi);
  return c;
}

/// sigma = exp(raw) > 0.
inline double map_smoothness(double raw) { return std::exp(raw); }
inline ad::Var map_smoothness(ad::Var raw) { return ad::exp_(raw); }

/// Unconstrained value whose map_centroid image is c.
inline double unmap_centroid(double c, double grid_lo, double grid_hi) {
  const double u = 2.0 * (c - grid_lo) / (grid_hi - grid_lo) - 1.0;
  return std::atanh(u);
}

// ---- layers ------------------------------------------------------------------

struct MlpLayer {
  int n_in = 0, n_out = 0;
  bool with_bias = true;
  bool tanh_act = true;  // identity on the output layer
  std::size_t weight_off = 0, bias_off = 0;
};

struct RbfKanLayer {
  int n_in = 0, n_out = 0, grid = 0;
  kernels::Kind kernel = kernels::Kind::Gaussian;
  double grid_lo = 0.0, grid_hi = 1.0;
  bool train_centroids = false;
  bool train_smoothness = false;
  bool hidden = true;
  bool tanh_norm = false;
  std::size_t omega_off = 0, wrbf_off = 0, w_off = 0;
  std::size_t rawc_off = 0, rawsig_off = 0;
  std::vector<double> fixed_centroids;  // per basis index m, when fixed
  double fixed_sigma = 1.0;             // shared init value, when fixed
};

struct BsplineKanLayer {
  int n_in = 0, n_out = 0, grid = 0;  // grid intervals; grid+3 cubic bases
  bool hidden = true;
  bool tanh_norm = false;
  std::size_t coef_off = 0, wrbf_off = 0, w_off = 0;
  // Per input node: grid+7 uniformly spaced knots padding a cubic span.
  std::vector<std::vector<double>> knots;

  int n_basis() const { return grid + 3; }
};

using Layer = std::variant<MlpLayer, RbfKanLayer, BsplineKanLayer>;

struct ModelSpec {
  std::string kind = "free-rbf-kan";  // mlp | kan | rbf-kan | free-rbf-kan
  std::vector<int> widths;
  int grid = 6;
  kernels::Kind kernel = kernels::Kind::Gaussian;
  double in_lo = 0.0, in_hi = 1.0;  // first-layer grid domain
  bool tanh_norm = false;
  bool mlp_bias = true;
};

struct Model {
  ModelSpec spec;
  std::vector<Layer> layers;
  std::size_t param_count = 0;

  int n_in() const { return spec.widths.front(); }
  int n_out() const { return spec.widths.back(); }
};

inline std::size_t count_parameters(const Model& m) { return m.param_count; }

// ---- mapped-parameter cache (one per tape pass) -------------------------------

template <class P>
struct RbfLayerCache {
  bool c_per_edge = false, s_per_edge = false;
  std::vector<P> centroid;   // per edge-basis, or per basis m when fixed
  std::vector<P> inv_sigma;  // per edge-basis, or a single shared value
};

template <class P>
struct ModelCache {
  std::vector<RbfLayerCache<P>> rbf;  // indexed by layer position
};

template <class Ctx>
ModelCache<typename Ctx::param_type> make_cache(const Model& m, Ctx& ctx) {
  using P = typename Ctx::param_type;
  ModelCache<P> cache;
  cache.rbf.resize(m.layers.size());
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const auto* L = std::get_if<RbfKanLayer>(&m.layers[li]);
    if (!L) continue;
    auto& pc = cache.rbf[li];
    const std::size_t edges =
        static_cast<std::size_t>(L->n_out) * L->n_in * L->grid;
    if (L->train_centroids) {
      pc.c_per_edge = true;
      pc.centroid.resize(edges);
      for (std::size_t e = 0; e < edges; ++e) {
        pc.centroid[e] =
            map_centroid(ctx.param(L->rawc_off + e), L->grid_lo, L->grid_hi);
      }
    } else {
      pc.centroid.resize(L->grid);
      for (int mth = 0; mth < L->grid; ++mth) {
        pc.centroid[mth] = detail::to_param<P>(L->fixed_centroids[mth]);
      }
    }
    if (L->train_smoothness) {
      pc.s_per_edge = true;
      pc.inv_sigma.resize(edges);
      for (std::size_t e = 0; e < edges; ++e) {
        pc.inv_sigma[e] = detail::exp_neg(ctx.param(L->rawsig_off + e));
      }
    } else {
      pc.inv_sigma.assign(1, detail::to_param<P>(1.0 / L->fixed_sigma));
    }
  }
  return cache;
}

// ---- forward passes ------------------------------------------------------------

namespace detail {

template <class S, class Ctx>
void forward_layer(const MlpLayer& L, Ctx& ctx,
                   const RbfLayerCache<typename Ctx::param_type>&,
                   std::span<const S> in, std::vector<S>& out) {
  using P = typename Ctx::param_type;
  thread_local std::vector<P> wrow;
  out.resize(L.n_out);
  wrow.resize(L.n_in);
  for (int i = 0; i < L.n_out; ++i) {
    for (int j = 0; j < L.n_in; ++j) {
      wrow[j] = ctx.param(L.weight_off + static_cast<std::size_t>(i) * L.n_in + j);
    }
    P bias = L.with_bias ? ctx.param(L.bias_off + i) : to_param<P>(0.0);
    S pre = affine(ctx, std::span<const P>(wrow), in, bias);
    out[i] = L.tanh_act ? tanh_(pre) : pre;
  }
}

template <class S, class Ctx>
void forward_layer(const RbfKanLayer& L, Ctx& ctx,
                   const RbfLayerCache<typename Ctx::param_type>& pc,
                   std::span<const S> in, std::vector<S>& out) {
  using P = typename Ctx::param_type;
  thread_local std::vector<S> x, sil, kv, terms;
  thread_local std::vector<P> wm;
  const int G = L.grid;
  x.assign(in.begin(), in.end());
  if (L.tanh_norm) {
    for (auto& xi : x) xi = tanh_(xi);
  }
  sil.resize(L.n_in);
  for (int j = 0; j < L.n_in; ++j) sil[j] = silu_(x[j]);

  out.resize(L.n_out);
  kv.resize(G);
  wm.resize(G);
  for (int i = 0; i < L.n_out; ++i) {
    terms.clear();
    for (int j = 0; j < L.n_in; ++j) {
      const std::size_t edge0 =
          (static_cast<std::size_t>(i) * L.n_in + j) * G;
      for (int mth = 0; mth < G; ++mth) {
        const P& c =
            pc.centroid[pc.c_per_edge ? edge0 + mth : static_cast<std::size_t>(mth)];
        const P& is = pc.inv_sigma[pc.s_per_edge ? edge0 + mth : 0];
        S u = (x[j] - c) * is;
        kv[mth] = kernels::apply(L.kernel, u);
        wm[mth] = ctx.param(L.omega_off + edge0 + mth);
      }
      S edge = wsum(ctx, std::span<const P>(wm), std::span<const S>(kv));
      const std::size_t ij = static_cast<std::size_t>(i) * L.n_in + j;
      terms.push_back(ctx.param(L.wrbf_off + ij) * edge);
      terms.push_back(ctx.param(L.w_off + ij) * sil[j]);
    }
    S tot = sum_all(ctx, std::span<const S>(terms));
    out[i] = L.hidden ? sigmoid_(tot) : tot;
  }
}

/// The four cubic basis values that are nonzero on the knot interval holding
/// x. Knots are uniform; mu indexes the interval with t[mu] <= x < t[mu+1].
template <class S>
void cubic_basis_local(std::span<const double> t, int mu, const S& x, S* N) {
  S left[4], right[4];
  N[0] = make_const<S>(1.0);
  for (int j = 1; j <= 3; ++j) {
    left[j] = x - t[static_cast<std::size_t>(mu + 1 - j)];
    right[j] = make_const<S>(t[static_cast<std::size_t>(mu + j)]) - x;
    S saved = make_const<S>(0.0);
    for (int r = 0; r < j; ++r) {
      const double denom = t[static_cast<std::size_t>(mu + r + 1)] -
                           t[static_cast<std::size_t>(mu + 1 - j + r)];
      S temp = N[r] * (1.0 / denom);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
}

/// Interval index for x in the layer's padded knot vector, clamping x to the
/// interior span when it falls outside.
template <class S>
int locate_clamped(std::span<const double> t, int grid, S& x) {
  const double lo = t[3], hi = t[static_cast<std::size_t>(grid + 3)];
  double xv = value_of(x);
  if (!(xv >= lo)) {
    x = make_const<S>(lo);
    xv = lo;
  } else if (xv > hi) {
    x = make_const<S>(hi);
    xv = hi;
  }
  const double h = t[4] - t[3];
  int cell = std::min(static_cast<int>((xv - lo) / h), grid - 1);
  return 3 + cell;
}

template <class S, class Ctx>
void forward_layer(const BsplineKanLayer& L, Ctx& ctx,
                   const RbfLayerCache<typename Ctx::param_type>&,
                   std::span<const S> in, std::vector<S>& out) {
  using P = typename Ctx::param_type;
  thread_local std::vector<S> x, sil, basis, terms;
  thread_local std::vector<int> first_basis;
  thread_local std::vector<P> coef4;
  const int nb = L.n_basis();
  x.assign(in.begin(), in.end());
  if (L.tanh_norm) {
    for (auto& xi : x) xi = tanh_(xi);
  }
  sil.resize(L.n_in);
  basis.resize(static_cast<std::size_t>(L.n_in) * 4);
  first_basis.resize(L.n_in);
  for (int j = 0; j < L.n_in; ++j) {
    sil[j] = silu_(x[j]);
    const int mu = locate_clamped(std::span<const double>(L.knots[j]), L.grid, x[j]);
    first_basis[j] = mu - 3;
    cubic_basis_local(std::span<const double>(L.knots[j]), mu, x[j],
                      &basis[static_cast<std::size_t>(j) * 4]);
  }

  out.resize(L.n_out);
  coef4.resize(4);
  for (int i = 0; i < L.n_out; ++i) {
    terms.clear();
    for (int j = 0; j < L.n_in; ++j) {
      const std::size_t row =
          (static_cast<std::size_t>(i) * L.n_in + j) * nb;
      for (int k = 0; k < 4; ++k) {
        coef4[k] = ctx.param(L.coef_off + row + first_basis[j] + k);
      }
      S edge = wsum(ctx, std::span<const P>(coef4),
                    std::span<const S>(&basis[static_cast<std::size_t>(j) * 4], 4));
      const std::size_t ij = static_cast<std::size_t>(i) * L.n_in + j;
      terms.push_back(ctx.param(L.wrbf_off + ij) * edge);
      terms.push_back(ctx.param(L.w_off + ij) * sil[j]);
    }
    S tot = sum_all(ctx, std::span<const S>(terms));
    out[i] = L.hidden ? sigmoid_(tot) : tot;
  }
}

}  // namespace detail

template <class S, class Ctx>
std::vector<S> model_forward(const Model& m, Ctx& ctx,
                             const ModelCache<typename Ctx::param_type>& cache,
                             std::span<const S> input) {
  if (static_cast<int>(input.size()) != m.n_in()) {
    throw ContractViolation("model_forward: input width mismatch");
  }
  std::vector<S> cur(input.begin(), input.end()), next;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    std::visit(
        [&](const auto& L) {
          detail::forward_layer<S>(L, ctx, cache.rbf[li],
                                   std::span<const S>(cur), next);
        },
        m.layers[li]);
    std::swap(cur, next);
  }
  return cur;
}

/// Untracked prediction.
inline std::vector<double> predict(const Model& m, const ParamStore& ps,
                                   std::span<const double> x) {
  EvalCtx ctx{ps.data()};
  auto cache = make_cache(m, ctx);
  return model_forward<double>(m, ctx, cache, x);
}

/// (u, du/dx_axis, d2u/dx_axis2) for a scalar-output model, tracked against
/// the parameters seeded on `tape` (seeds them if the tape is empty).
inline std::array<ad::Var, 3> eval_with_input_derivs(const Model& m,
                                                     ad::Tape& tape,
                                                     const ParamStore& ps,
                                                     std::span<const double> x,
                                                     std::size_t axis) {
  if (tape.size() == 0) tape.seed(ps.values());
  TapeCtx ctx{&tape, ps.data()};
  auto cache = make_cache(m, ctx);
  auto field = [&](std::span<const ad::Dual2> in) {
    return model_forward<ad::Dual2>(m, ctx, cache, in)[0];
  };
  return ad::eval_with_input_derivs(field, x, axis);
}

// ---- public B-spline basis -----------------------------------------------------

/// All cubic basis values at x for a padded knot vector (knots.size() - 4
/// values). x outside the interior span is clamped to its boundary.
inline std::vector<double> bspline_basis(std::span<const double> knots,
                                         double x, int order = 3) {
  if (order != 3) throw std::invalid_argument("only cubic B-splines supported");
  const int grid = static_cast<int>(knots.size()) - 7;
  if (grid < 1) throw std::invalid_argument("knot vector too short");
  std::vector<double> out(static_cast<std::size_t>(grid) + 3, 0.0);
  double xv = x;
  const int mu = detail::locate_clamped(knots, grid, xv);
  double local[4];
  detail::cubic_basis_local(knots, mu, xv, local);
  for (int k = 0; k < 4; ++k) out[static_cast<std::size_t>(mu - 3 + k)] = local[k];
  return out;
}

// ---- construction ----------------------------------------------------------------

namespace detail {

inline std::vector<double> uniform_knots(double lo, double hi, int grid) {
  std::vector<double> t(static_cast<std::size_t>(grid) + 7);
  const double h = (hi - lo) / grid;
  for (int i = 0; i < grid + 7; ++i) t[static_cast<std::size_t>(i)] = lo + (i - 3) * h;
  return t;
}

}  // namespace detail

inline Model init_model(const ModelSpec& spec, std::uint64_t seed,
                        ParamStore& store) {
  if (spec.widths.size() < 2) {
    throw std::invalid_argument("model needs at least input and output widths");
  }
  for (int w : spec.widths) {
    if (w <= 0) throw std::invalid_argument("layer widths must be positive");
  }
  Model m;
  m.spec = spec;
  const std::size_t base = store.size();
  const int n_layers = static_cast<int>(spec.widths.size()) - 1;

  for (int l = 0; l < n_layers; ++l) {
    const int n_in = spec.widths[static_cast<std::size_t>(l)];
    const int n_out = spec.widths[static_cast<std::size_t>(l) + 1];
    const bool hidden = l + 1 < n_layers;
    const std::string pre = "layer" + std::to_string(l) + "/";
    const double lo = l == 0 ? spec.in_lo : 0.0;
    const double hi = l == 0 ? spec.in_hi : 1.0;

    if (spec.kind == "mlp") {
      MlpLayer L;
      L.n_in = n_in;
      L.n_out = n_out;
      L.with_bias = spec.mlp_bias;
      L.tanh_act = hidden;
      L.weight_off = store.add(pre + "weight",
                               static_cast<std::size_t>(n_in) * n_out);
      auto ws = store.slice(pre + "weight");
      auto g = rng::substream(seed, "init/" + pre + "weight");
      const double std = std::sqrt(2.0 / (n_in + n_out));
      for (auto& w : ws) w = std * g.normal();
      if (L.with_bias) {
        L.bias_off = store.add(pre + "bias", static_cast<std::size_t>(n_out));
      }
      m.layers.emplace_back(L);
    } else if (spec.kind == "kan") {
      BsplineKanLayer L;
      L.n_in = n_in;
      L.n_out = n_out;
      L.grid = spec.grid;
      L.hidden = hidden;
      L.tanh_norm = spec.tanh_norm;
      L.knots.assign(static_cast<std::size_t>(n_in),
                     detail::uniform_knots(lo, hi, spec.grid));
      const std::size_t nc =
          static_cast<std::size_t>(L.n_basis()) * n_in * n_out;
      L.coef_off = store.add(pre + "coef", nc);
      auto cs = store.slice(pre + "coef");
      auto g = rng::substream(seed, "init/" + pre + "coef");
      const double std = std::sqrt(1.0 / (L.n_basis() * n_in));
      for (auto& c : cs) c = std * g.normal();
      L.wrbf_off = store.add(pre + "w_rbf", static_cast<std::size_t>(n_in) * n_out);
      for (auto& w : store.slice(pre + "w_rbf")) w = 1.0;
      L.w_off = store.add(pre + "w", static_cast<std::size_t>(n_in) * n_out);
      for (auto& w : store.slice(pre + "w")) w = 1.0 / n_in;
      m.layers.emplace_back(L);
    } else if (spec.kind == "rbf-kan" || spec.kind == "free-rbf-kan") {
      RbfKanLayer L;
      L.n_in = n_in;
      L.n_out = n_out;
      L.grid = spec.grid;
      L.kernel = spec.kernel;
      L.grid_lo = lo;
      L.grid_hi = hi;
      L.hidden = hidden;
      L.tanh_norm = spec.tanh_norm;
      const bool free = spec.kind == "free-rbf-kan";
      L.train_centroids = free;
      L.train_smoothness = free;
      const std::size_t edges =
          static_cast<std::size_t>(spec.grid) * n_in * n_out;

      L.omega_off = store.add(pre + "omega", edges);
      auto os = store.slice(pre + "omega");
      auto g = rng::substream(seed, "init/" + pre + "omega");
      const double std = std::sqrt(1.0 / (spec.grid * n_in));
      for (auto& w : os) w = std * g.normal();

      // Initial centroids sit at uniform interior positions of the grid
      // domain; initial sigma is the span divided by the grid size.
      std::vector<double> c0(static_cast<std::size_t>(spec.grid));
      for (int mth = 0; mth < spec.grid; ++mth) {
        c0[static_cast<std::size_t>(mth)] =
            lo + (hi - lo) * (mth + 0.5) / spec.grid;
      }
      const double sigma0 = (hi - lo) / spec.grid;
      if (free) {
        L.rawc_off = store.add(pre + "raw_c", edges);
        auto rc = store.slice(pre + "raw_c");
        for (std::size_t e = 0; e < edges; ++e) {
          rc[e] = unmap_centroid(c0[e % spec.grid], lo, hi);
        }
        L.rawsig_off = store.add(pre + "raw_sigma", edges);
        for (auto& r : store.slice(pre + "raw_sigma")) r = std::log(sigma0);
      } else {
        L.fixed_centroids = c0;
        L.fixed_sigma = sigma0;
      }
      L.wrbf_off = store.add(pre + "w_rbf", static_cast<std::size_t>(n_in) * n_out);
      for (auto& w : store.slice(pre + "w_rbf")) w = 1.0;
      L.w_off = store.add(pre + "w", static_cast<std::size_t>(n_in) * n_out);
      for (auto& w : store.slice(pre + "w")) w = 1.0 / n_in;
      m.layers.emplace_back(L);
    } else {
      throw std::invalid_argument("unknown model kind: " + spec.kind);
    }
  }
  m.param_count = store.size() - base;
  return m;
}

// ---- B-spline grid rescaling -----------------------------------------------------

namespace detail {

/// Least-squares solve of (B^T B + ridge I) c = B^T y via Cholesky.
inline std::vector<double> lstsq(const std::vector<double>& design,
                                 std::size_t rows, std::size_t cols,
                                 std::span<const double> y,
                                 double ridge = 1e-12) {
  std::vector<double> ata(cols * cols, 0.0), aty(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = design.data() + r * cols;
    for (std::size_t i = 0; i < cols; ++i) {
      aty[i] += row[i] * y[r];
      for (std::size_t j = i; j < cols; ++j) ata[i * cols + j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < cols; ++i) {
    ata[i * cols + i] += ridge;
    for (std::size_t j = 0; j < i; ++j) ata[i * cols + j] = ata[j * cols + i];
  }
  // in-place Cholesky, then two triangular solves
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = i; j < cols; ++j) {
      double s = ata[i * cols + j];
      for (std::size_t k = 0; k < i; ++k) s -= ata[i * cols + k] * ata[j * cols + k];
      if (i == j) {
        if (s <= 0.0) throw std::runtime_error("lstsq: matrix not positive definite");
        ata[i * cols + i] = std::sqrt(s);
      } else {
        ata[j * cols + i] = s / ata[i * cols + i];
      }
    }
  }
  std::vector<double> sol(cols);
  for (std::size_t i = 0; i < cols; ++i) {
    double s = aty[i];
    for (std::size_t k = 0; k < i; ++k) s -= ata[i * cols + k] * sol[k];
    sol[i] = s / ata[i * cols + i];
  }
  for (std::size_t ii = cols; ii-- > 0;) {
    double s = sol[ii];
    for (std::size_t k = ii + 1; k < cols; ++k) s -= ata[k * cols + ii] * sol[k];
    sol[ii] = s / ata[ii * cols + ii];
  }
  return sol;
}

}  // namespace detail

/// Rescale a spline layer's knot spans to the observed input range and refit
/// the coefficients by least squares so the represented edge functions are
/// preserved. `samples` holds raw layer inputs, row-major n_samples x n_in.
inline void kan_grid_update(BsplineKanLayer& L, ParamStore& store,
                            std::span<const double> samples,
                            std::size_t n_samples) {
  if (n_samples == 0) {
    throw std::invalid_argument("kan_grid_update: empty sample batch");
  }
  const int nb = L.n_basis();
  const std::size_t n_probe = std::max<std::size_t>(128, 8 * static_cast<std::size_t>(nb));
  std::vector<double> probes(n_probe), target(n_probe);
  std::vector<double> design(n_probe * static_cast<std::size_t>(nb));
  auto coefs = store.values();

  for (int j = 0; j < L.n_in; ++j) {
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (std::size_t s = 0; s < n_samples; ++s) {
      double v = samples[s * static_cast<std::size_t>(L.n_in) + j];
      if (L.tanh_norm) v = std::tanh(v);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (!(mx - mn > 0.0)) {
      mn -= 1e-2;
      mx += 1e-2;
    }
    const std::vector<double> old_knots = L.knots[static_cast<std::size_t>(j)];
    const std::vector<double> new_knots = detail::uniform_knots(mn, mx, L.grid);

    std::vector<double> old_design(n_probe * static_cast<std::size_t>(nb));
    for (std::size_t p = 0; p < n_probe; ++p) {
      probes[p] = mn + (mx - mn) * (static_cast<double>(p) + 0.5) / n_probe;
      auto nb_vals = bspline_basis(new_knots, probes[p]);
      std::copy(nb_vals.begin(), nb_vals.end(),
                design.begin() + p * static_cast<std::size_t>(nb));
      auto ob_vals = bspline_basis(old_knots, probes[p]);
      std::copy(ob_vals.begin(), ob_vals.end(),
                old_design.begin() + p * static_cast<std::size_t>(nb));
    }

    for (int i = 0; i < L.n_out; ++i) {
      const std::size_t row =
          L.coef_off + (static_cast<std::size_t>(i) * L.n_in + j) * nb;
      for (std::size_t p = 0; p < n_probe; ++p) {
        double y = 0.0;
        const double* ob = old_design.data() + p * static_cast<std::size_t>(nb);
        for (int k = 0; k < nb; ++k) y += coefs[row + static_cast<std::size_t>(k)] * ob[k];
        target[p] = y;
      }
      auto sol = detail::lstsq(design, n_probe, static_cast<std::size_t>(nb), target);
      for (int k = 0; k < nb; ++k) coefs[row + static_cast<std::size_t>(k)] = sol[static_cast<std::size_t>(k)];
    }
    L.knots[static_cast<std::size_t>(j)] = new_knots;
  }
}

}  // namespace fkan
