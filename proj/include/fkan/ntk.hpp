#pragma once

// Empirical neural tangent kernel and eigenvalue-spectrum tracking. The NTK
// is the Gram matrix of per-sample parameter gradients, built from one
// backward pass per input over all trainable parameters.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fkan/linalg.hpp"
#include "fkan/model.hpp"

namespace fkan::ntk {

struct NTKSnapshot {
  long long step = 0;
  std::vector<double> eigenvalues;  // descending
};

/// Jacobian of the scalar model output, one row per input point.
inline linalg::Mat jacobian(const Model& m, const ParamStore& ps,
                            std::span<const std::vector<double>> inputs) {
  const std::size_t n = inputs.size();
  const std::size_t p = ps.size();
  linalg::Mat J(n, p);
  ad::Tape tape;
  for (std::size_t i = 0; i < n; ++i) {
    tape.clear();
    tape.seed(ps.values());
    TapeCtx ctx{&tape, ps.data()};
    auto cache = make_cache(m, ctx);
    std::vector<ad::Var> x(inputs[i].size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = ad::Var{inputs[i][j]};
    auto out = model_forward<ad::Var>(m, ctx, cache, x);
    tape.backward(out[0], {J.a.data() + i * p, p});
  }
  return J;
}

/// Theta[i,j] = sum_p df(x_i)/dtheta_p * df(x_j)/dtheta_p.
inline linalg::Mat ntk_matrix(const Model& m, const ParamStore& ps,
                              std::span<const std::vector<double>> inputs) {
  const linalg::Mat J = jacobian(m, ps, inputs);
  const std::size_t n = J.rows, p = J.cols;
  linalg::Mat theta(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      const double* ri = J.a.data() + i * p;
      const double* rj = J.a.data() + j * p;
      for (std::size_t k = 0; k < p; ++k) s += ri[k] * rj[k];
      theta(i, j) = s;
      theta(j, i) = s;
    }
  }
  return theta;
}

using linalg::sym_eigenvalues;

/// Runs a training callback between checkpoints and captures the NTK spectrum
/// on a fixed input set at each requested step. `advance(k)` must run exactly
/// k training steps.
template <class AdvanceFn>
std::vector<NTKSnapshot> spectrum_track(const Model& m, const ParamStore& ps,
                                        std::span<const std::vector<double>> inputs,
                                        std::span<const long long> checkpoints,
                                        AdvanceFn&& advance) {
  std::vector<long long> cps(checkpoints.begin(), checkpoints.end());
  std::sort(cps.begin(), cps.end());
  std::vector<NTKSnapshot> out;
  long long step = 0;
  for (long long cp : cps) {
    if (cp > step) {
      advance(cp - step);
      step = cp;
    }
    NTKSnapshot snap;
    snap.step = cp;
    snap.eigenvalues = sym_eigenvalues(ntk_matrix(m, ps, inputs));
    out.push_back(std::move(snap));
  }
  return out;
}

inline void write_snapshots_csv(const std::string& path,
                                std::span<const NTKSnapshot> snaps) {
  std::ofstream f(path);
  f << "step,index,eigenvalue\n";
  char buf[64];
  for (const auto& s : snaps) {
    for (std::size_t i = 0; i < s.eigenvalues.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.eigenvalues[i]);
      f << s.step << ',' << i << ',' << buf << '\n';
    }
  }
}

}  // namespace fkan::ntk
