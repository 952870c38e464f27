#pragma once

// Reproducibility harness: experiment configuration, run orchestration,
// metric emission, and table aggregation. A run writes config.json,
// metrics.json (deterministic values only), timing.json (wall-clock), and
// plot-ready CSVs into its output directory.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkan/data.hpp"
#include "fkan/model.hpp"
#include "fkan/model_io.hpp"
#include "fkan/ntk.hpp"
#include "fkan/onet.hpp"
#include "fkan/optim.hpp"
#include "fkan/pinn.hpp"

namespace fkan::experiments {

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

using data::MissingDataError;

struct ExperimentConfig {
  std::string experiment;  // nonsmooth2d | multiscale1d | ntk | heat | helmholtz | deeponet | mnist
  std::string model = "free-rbf-kan";  // mlp | kan | rbf-kan | free-rbf-kan
  std::uint64_t seed = 0;
  std::string out_dir = "runs/out";
  bool fast = false;
  std::string kernel = "gaussian";
  std::string mnist_dir;
  // overrides; negative or empty means "use the experiment default"
  long long epochs = -1;
  int grid = -1;
  std::vector<int> widths;
  double lr = -1.0;
  double gamma = -1.0;
};

/// Fully resolved settings for one run.
struct RunConfig {
  std::string experiment, model, optimizer, kernel, mnist_dir, out_dir;
  std::uint64_t seed = 0;
  bool fast = false, tanh_norm = false;
  std::vector<int> widths;
  int grid = 6;
  long long epochs = 0;
  double lr = 1e-3, gamma = 1.0;
  double in_lo = 0.0, in_hi = 1.0;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t chunk = 64;      // tape chunking, points per backward
  long long grid_update_every = 200;
  // pinn
  int k_freq = 0;
  std::size_t n_interior = 0, n_boundary = 0, eval_grid = 256;
  // ntk
  std::vector<long long> checkpoints;
  // deeponet
  std::size_t n_functions = 50, queries_per_function = 10, n_test_seeds = 30;
  long long sched_every = 1;
  // mnist
  std::size_t mnist_limit = 0, mnist_test_limit = 0;
};

inline nlohmann::json to_json(const RunConfig& c) {
  return nlohmann::json{{"experiment", c.experiment},
                        {"model", c.model},
                        {"optimizer", c.optimizer},
                        {"kernel", c.kernel},
                        {"mnist_dir", c.mnist_dir},
                        {"out_dir", c.out_dir},
                        {"seed", c.seed},
                        {"fast", c.fast},
                        {"tanh_norm", c.tanh_norm},
                        {"widths", c.widths},
                        {"grid", c.grid},
                        {"epochs", c.epochs},
                        {"lr", c.lr},
                        {"gamma", c.gamma},
                        {"in_lo", c.in_lo},
                        {"in_hi", c.in_hi},
                        {"batch_size", c.batch_size},
                        {"grid_update_every", c.grid_update_every},
                        {"k_freq", c.k_freq},
                        {"n_interior", c.n_interior},
                        {"n_boundary", c.n_boundary},
                        {"eval_grid", c.eval_grid},
                        {"checkpoints", c.checkpoints},
                        {"n_functions", c.n_functions},
                        {"queries_per_function", c.queries_per_function},
                        {"n_test_seeds", c.n_test_seeds},
                        {"sched_every", c.sched_every},
                        {"mnist_limit", c.mnist_limit},
                        {"mnist_test_limit", c.mnist_test_limit}};
}

inline std::string config_hash(const RunConfig& c) {
  const std::uint64_t h = rng::fnv1a64(to_json(c).dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline bool is_kan_family(const std::string& model) {
  return model == "kan" || model == "rbf-kan" || model == "free-rbf-kan";
}

inline RunConfig resolve(const ExperimentConfig& in) {
  static const std::vector<std::string> experiments = {
      "nonsmooth2d", "multiscale1d", "ntk", "heat", "helmholtz", "deeponet", "mnist"};
  static const std::vector<std::string> models = {"mlp", "kan", "rbf-kan", "free-rbf-kan"};
  if (std::find(experiments.begin(), experiments.end(), in.experiment) == experiments.end()) {
    throw UsageError("unknown experiment: " + in.experiment);
  }
  if (std::find(models.begin(), models.end(), in.model) == models.end()) {
    throw UsageError("unknown model: " + in.model);
  }
  RunConfig c;
  c.experiment = in.experiment;
  c.model = in.model;
  c.seed = in.seed;
  c.out_dir = in.out_dir;
  c.fast = in.fast;
  c.kernel = in.kernel;
  c.mnist_dir = in.mnist_dir;
  const bool kan = is_kan_family(in.model);

  if (in.experiment == "nonsmooth2d") {
    c.optimizer = "lbfgs";
    c.widths = kan ? std::vector<int>{2, 5, 1} : std::vector<int>{2, 10, 10, 10, 1};
    c.grid = 6;
    c.epochs = in.fast ? 40 : 300;
    c.lr = 1.0;
    c.batch_size = 1024;
  } else if (in.experiment == "multiscale1d" || in.experiment == "ntk") {
    c.optimizer = "adam";
    c.widths = kan ? std::vector<int>{1, 5, 5, 5, 1}
                   : std::vector<int>{1, 100, 100, 100, 100, 1};
    c.grid = 20;
    c.tanh_norm = kan;
    c.epochs = in.fast ? 1500 : 9000;
    c.lr = 1e-3;
    if (in.experiment == "ntk") {
      const long long stride = std::max<long long>(1, c.epochs / 3);
      for (long long s = 0; s <= c.epochs; s += stride) c.checkpoints.push_back(s);
    }
  } else if (in.experiment == "heat") {
    c.optimizer = "adam";
    c.widths = kan ? std::vector<int>{2, 5, 5, 1} : std::vector<int>{2, 40, 40, 40, 40, 1};
    c.grid = 30;
    c.lr = 1e-3;
    c.gamma = 0.999;
    c.k_freq = in.fast ? 10 : 50;
    c.epochs = in.fast ? 3000 : 15000;
    c.n_interior = in.fast ? 1000 : 4000;
    c.n_boundary = in.fast ? 100 : 200;
    c.chunk = 48;
  } else if (in.experiment == "helmholtz") {
    c.optimizer = "adam";
    c.widths = kan ? std::vector<int>{2, 5, 5, 1} : std::vector<int>{2, 128, 128, 128, 128, 1};
    c.grid = 10;
    c.lr = 1e-3;
    c.in_lo = -3.0;
    c.in_hi = 3.0;
    c.epochs = in.fast ? 1200 : 4000;
    c.n_interior = in.fast ? 1500 : 4000;
    c.n_boundary = 100;
    c.chunk = 48;
  } else if (in.experiment == "deeponet") {
    c.optimizer = "adam";
    c.widths = kan ? std::vector<int>{2, 4, 4, 4, 100} : std::vector<int>{2, 40, 40, 40, 40, 100};
    c.grid = 6;
    c.lr = 1e-3;
    c.gamma = 0.95;
    c.sched_every = 250;
    c.epochs = in.fast ? 2000 : 10000;  // optimizer steps
    c.batch_size = 128;
    c.chunk = 32;
  } else if (in.experiment == "mnist") {
    c.optimizer = "adam";
    c.widths = {784, 64, 10};
    c.grid = 10;
    c.lr = 1e-3;
    c.batch_size = 64;
    c.epochs = in.fast ? 3 : 20;
    c.mnist_limit = in.fast ? 512 : 0;
    c.mnist_test_limit = in.fast ? 256 : 0;
    c.chunk = 4;
  }

  if (in.epochs >= 0) c.epochs = in.epochs;
  if (in.grid >= 1) c.grid = in.grid;
  if (!in.widths.empty()) c.widths = in.widths;
  if (in.lr > 0.0) c.lr = in.lr;
  if (in.gamma > 0.0) c.gamma = in.gamma;
  return c;
}

struct ExperimentResult {
  RunConfig config;
  std::string hash;
  std::size_t param_count = 0;
  std::map<std::string, double> metrics;
  std::vector<std::string> artifacts;  // file names inside out_dir
  double wall_time_sec = 0.0;
  double per_epoch_sec = 0.0;
};

// ---- small file helpers ------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

inline ModelSpec make_model_spec(const RunConfig& c) {
  ModelSpec s;
  s.kind = c.model;
  s.widths = c.widths;
  s.grid = c.grid;
  s.kernel = kernels::parse(c.kernel);
  s.in_lo = c.in_lo;
  s.in_hi = c.in_hi;
  s.tanh_norm = c.tanh_norm && is_kan_family(c.model);
  return s;
}

// ---- regression loss/gradient -------------------------------------------------

/// Mean squared error over the indexed rows (mean over samples and outputs),
/// with the gradient accumulated over tape chunks.
inline double mse_loss_grad(const Model& m, const ParamStore& ps,
                            const data::Dataset& ds,
                            std::span<const std::uint32_t> idx,
                            std::span<double> grad, std::size_t chunk) {
  thread_local ad::Tape tape;
  thread_local std::vector<ad::Var> sq;
  const double w = 1.0 / (static_cast<double>(idx.size()) * ds.dim_out);
  double total = 0.0;
  for (std::size_t at = 0; at < idx.size(); at += chunk) {
    const std::size_t stop = std::min(at + chunk, idx.size());
    tape.clear();
    tape.seed(ps.values());
    TapeCtx ctx{&tape, ps.data()};
    auto cache = make_cache(m, ctx);
    sq.clear();
    thread_local std::vector<ad::Var> xv;
    for (std::size_t i = at; i < stop; ++i) {
      const auto row = ds.input(idx[i]);
      xv.resize(row.size());
      for (std::size_t j = 0; j < row.size(); ++j) xv[j] = ad::Var{row[j]};
      auto out = model_forward<ad::Var>(m, ctx, cache, std::span<const ad::Var>(xv));
      const auto y = ds.target(idx[i]);
      for (std::size_t k = 0; k < y.size(); ++k) sq.push_back(ad::sqr(out[k] - y[k]));
    }
    ad::Var term = tape.sum(sq) * w;
    total += term.v;
    tape.backward(term, grad);
  }
  return total;
}

/// Untracked MSE over the indexed rows.
inline double eval_mse(const Model& m, const ParamStore& ps, const data::Dataset& ds,
                       std::span<const std::uint32_t> idx) {
  EvalCtx ctx{ps.data()};
  auto cache = make_cache(m, ctx);
  double acc = 0.0;
  for (auto i : idx) {
    auto out = model_forward<double>(m, ctx, cache, ds.input(i));
    const auto y = ds.target(i);
    for (std::size_t k = 0; k < y.size(); ++k) acc += (out[k] - y[k]) * (out[k] - y[k]);
  }
  return acc / (static_cast<double>(idx.size()) * ds.dim_out);
}

/// Raw inputs seen by each layer on the given rows (for grid rescaling).
inline std::vector<std::vector<double>> collect_layer_inputs(
    const Model& m, const ParamStore& ps, const data::Dataset& ds,
    std::span<const std::uint32_t> idx) {
  EvalCtx ctx{ps.data()};
  auto cache = make_cache(m, ctx);
  std::vector<std::vector<double>> per_layer(m.layers.size());
  for (auto i : idx) {
    const auto row = ds.input(i);
    std::vector<double> cur(row.begin(), row.end()), next;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      per_layer[li].insert(per_layer[li].end(), cur.begin(), cur.end());
      std::visit(
          [&](const auto& L) {
            fkan::detail::forward_layer<double>(L, ctx, cache.rbf[li],
                                                std::span<const double>(cur), next);
          },
          m.layers[li]);
      std::swap(cur, next);
    }
  }
  return per_layer;
}

inline void apply_grid_update(Model& m, ParamStore& ps,
                              const std::vector<std::vector<double>>& per_layer) {
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    if (auto* L = std::get_if<BsplineKanLayer>(&m.layers[li])) {
      const std::size_t n = per_layer[li].size() / static_cast<std::size_t>(L->n_in);
      kan_grid_update(*L, ps, per_layer[li], n);
    }
  }
}

}  // namespace detail

// ---- experiment runners --------------------------------------------------------

namespace detail {

struct CurveRow {
  long long epoch;
  std::vector<double> values;
};

inline void write_curve(const std::string& path, const std::string& header,
                        std::span<const CurveRow> rows) {
  std::ofstream f(path);
  f << header << '\n';
  for (const auto& r : rows) {
    f << r.epoch;
    for (double v : r.values) f << ',' << fmt(v);
    f << '\n';
  }
}

inline void run_nonsmooth2d(const RunConfig& c, Model& model, ParamStore& store,
                            ExperimentResult& res) {
  auto ds = data::gen_nonsmooth2d(16384, c.seed);
  const std::size_t n_train = ds.n * 8 / 10;
  std::vector<std::uint32_t> train_idx(n_train), test_idx(ds.n - n_train);
  for (std::size_t i = 0; i < n_train; ++i) train_idx[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = n_train; i < ds.n; ++i) {
    test_idx[i - n_train] = static_cast<std::uint32_t>(i);
  }

  std::vector<double> x(store.values().begin(), store.values().end());
  std::vector<double> grad(store.size());
  opt::Lbfgs lbfgs;
  std::vector<CurveRow> curve;
  for (long long epoch = 1; epoch <= c.epochs; ++epoch) {
    lbfgs.reset();
    auto batches = data::make_batches(n_train, c.batch_size, c.seed, static_cast<std::uint64_t>(epoch), true);
    double mean_loss = 0.0;
    for (const auto& b : batches) {
      auto closure = [&](std::span<const double> xs, std::span<double> g) {
        std::copy(xs.begin(), xs.end(), store.values().begin());
        std::fill(g.begin(), g.end(), 0.0);
        return mse_loss_grad(model, store, ds,
                             std::span<const std::uint32_t>(b), g, c.chunk * 4);
      };
      mean_loss += lbfgs.step(x, closure).loss;
    }
    std::copy(x.begin(), x.end(), store.values().begin());
    mean_loss /= static_cast<double>(batches.size());
    if (c.model == "kan" && c.grid_update_every > 0 && epoch % c.grid_update_every == 0 &&
        epoch < c.epochs) {
      auto inputs = collect_layer_inputs(model, store, ds,
                                         std::span<const std::uint32_t>(train_idx.data(),
                                                                        std::min<std::size_t>(1024, n_train)));
      apply_grid_update(model, store, inputs);
      std::copy(store.values().begin(), store.values().end(), x.begin());
      lbfgs.reset();
    }
    if (epoch % 10 == 0 || epoch == c.epochs) {
      curve.push_back({epoch, {mean_loss, eval_mse(model, store, ds, test_idx)}});
    } else {
      curve.push_back({epoch, {mean_loss, -1.0}});
    }
  }
  const double train_mse = eval_mse(model, store, ds, train_idx);
  const double test_mse = eval_mse(model, store, ds, test_idx);
  write_curve(c.out_dir + "/loss_curve.csv", "epoch,train_mse,test_mse", curve);
  res.artifacts.push_back("loss_curve.csv");
  res.metrics["final_train_mse"] = train_mse;
  res.metrics["test_mse"] = test_mse;
}

inline void run_multiscale(const RunConfig& c, Model& model, ParamStore& store,
                           ExperimentResult& res, bool track_ntk) {
  auto ds = data::gen_multiscale1d(100);
  std::vector<std::uint32_t> all(ds.n);
  for (std::size_t i = 0; i < ds.n; ++i) all[i] = static_cast<std::uint32_t>(i);

  opt::Adam adam(store.size(), c.lr);
  std::vector<double> grad(store.size());
  std::vector<CurveRow> curve;
  long long step_no = 0;
  auto advance = [&](long long steps) {
    for (long long s = 0; s < steps; ++s) {
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = mse_loss_grad(model, store, ds,
                                        std::span<const std::uint32_t>(all), grad, 128);
      adam.step(store.values(), grad);
      ++step_no;
      if (step_no % 50 == 0 || step_no == c.epochs) {
        curve.push_back({step_no, {loss, adam.lr()}});
      }
    }
  };

  if (track_ntk) {
    std::vector<std::vector<double>> inputs(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
      inputs[i] = {ds.inputs.begin() + static_cast<std::ptrdiff_t>(i * ds.dim_in),
                   ds.inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * ds.dim_in)};
    }
    auto snaps = ntk::spectrum_track(model, store, inputs,
                                     std::span<const long long>(c.checkpoints), advance);
    ntk::write_snapshots_csv(c.out_dir + "/ntk_spectra.csv", snaps);
    res.artifacts.push_back("ntk_spectra.csv");
    const auto& eig = snaps.back().eigenvalues;
    res.metrics["lam1"] = eig[0];
    res.metrics["lam50_over_lam1"] = eig.size() > 49 ? eig[49] / eig[0] : 0.0;
  } else {
    advance(c.epochs);
  }
  const double final_mse = eval_mse(model, store, ds, all);
  write_curve(c.out_dir + "/loss_curve.csv", "step,train_mse,lr", curve);
  res.artifacts.push_back("loss_curve.csv");
  res.metrics["final_train_mse"] = final_mse;
}

inline void run_pinn(const RunConfig& c, const pinn::PDEProblem& prob, Model& model,
                     ParamStore& store, ExperimentResult& res) {
  opt::Adam adam(store.size(), c.lr);
  opt::ExpSchedule sched(c.lr, c.gamma > 0.0 ? c.gamma : 1.0);
  std::vector<double> grad(store.size());
  std::vector<CurveRow> curve;
  double li = 0.0, lb = 0.0;
  for (long long epoch = 1; epoch <= c.epochs; ++epoch) {
    const std::uint64_t es = rng::mix64(c.seed + rng::kGolden * static_cast<std::uint64_t>(epoch));
    auto colloc = pinn::sample_collocation(prob, c.n_interior, c.n_boundary, es);
    std::fill(grad.begin(), grad.end(), 0.0);
    const double loss =
        pinn::pinn_loss_grad(model, store, prob, colloc, 1.0, 1.0, grad, &li, &lb, c.chunk);
    if (!std::isfinite(loss)) throw NumericError("pinn training loss is not finite");
    adam.set_lr(sched.current());
    adam.step(store.values(), grad);
    sched.advance();
    if (epoch % 10 == 0 || epoch == c.epochs || epoch == 1) {
      curve.push_back({epoch, {li, lb, adam.lr()}});
    }
    if (c.model == "kan" && c.grid_update_every > 0 && epoch % c.grid_update_every == 0 &&
        epoch < c.epochs) {
      data::Dataset tmp;
      tmp.n = colloc.interior.size();
      tmp.dim_in = 2;
      tmp.dim_out = 1;
      tmp.inputs.resize(tmp.n * 2);
      for (std::size_t i = 0; i < tmp.n; ++i) {
        tmp.inputs[i * 2] = colloc.interior[i][0];
        tmp.inputs[i * 2 + 1] = colloc.interior[i][1];
      }
      tmp.targets.resize(tmp.n);
      std::vector<std::uint32_t> idx(tmp.n);
      for (std::size_t i = 0; i < tmp.n; ++i) idx[i] = static_cast<std::uint32_t>(i);
      auto inputs = collect_layer_inputs(model, store, tmp, idx);
      apply_grid_update(model, store, inputs);
      adam.reset();
    }
  }
  write_curve(c.out_dir + "/loss_curve.csv", "epoch,interior_loss,boundary_loss,lr", curve);
  res.artifacts.push_back("loss_curve.csv");

  auto [rel_l2, rel_linf] = pinn::error_metrics(model, store, prob, c.eval_grid);
  res.metrics["rel_l2"] = rel_l2;
  res.metrics["rel_linf"] = rel_linf;
  res.metrics["final_interior_loss"] = li;
  res.metrics["final_boundary_loss"] = lb;

  // predicted field on the eval grid
  {
    std::ofstream f(c.out_dir + "/field.csv");
    f << "x,y,u_pred,u_exact,abs_err\n";
    EvalCtx ctx{store.data()};
    auto cache = make_cache(model, ctx);
    const std::size_t gn = 128;
    for (std::size_t i = 0; i < gn; ++i) {
      for (std::size_t j = 0; j < gn; ++j) {
        const std::array<double, 2> pt{
            prob.lo[0] + (prob.hi[0] - prob.lo[0]) * static_cast<double>(i) / (gn - 1),
            prob.lo[1] + (prob.hi[1] - prob.lo[1]) * static_cast<double>(j) / (gn - 1)};
        const double up = model_forward<double>(model, ctx, cache, {pt.data(), 2})[0];
        const double ue = prob.exact({pt.data(), 2});
        f << fmt(pt[0]) << ',' << fmt(pt[1]) << ',' << fmt(up) << ',' << fmt(ue) << ','
          << fmt(std::abs(up - ue)) << '\n';
      }
    }
    res.artifacts.push_back("field.csv");
  }
}

inline void run_deeponet(const RunConfig& c, ExperimentResult& res, ParamStore& store,
                         onet::DeepONet& net) {
  const onet::RDSolverConfig scfg;
  auto ds = onet::build_dataset(c.n_functions, c.queries_per_function, c.seed, scfg);
  {
    nlohmann::json j;
    j["config"] = {{"diffusion", scfg.diffusion},
                   {"reaction", scfg.reaction},
                   {"nx", scfg.nx},
                   {"nt", scfg.nt}};
    j["seed"] = ds.seed;
    j["sensors"] = ds.sensors;
    nlohmann::json fns = nlohmann::json::array();
    for (std::size_t i = 0; i < ds.forcings.size(); ++i) {
      nlohmann::json qp = nlohmann::json::array(), uv = nlohmann::json::array();
      for (std::size_t q = 0; q < ds.query_idx[i].size(); ++q) {
        const auto& t = ds.triples[i * c.queries_per_function + q];
        qp.push_back({t.xt[0], t.xt[1]});
        uv.push_back(t.u);
      }
      fns.push_back({{"f_values", ds.forcings[i]}, {"query_points", qp}, {"u_values", uv}});
    }
    j["functions"] = fns;
    std::ofstream f(c.out_dir + "/dataset.json");
    f << j.dump() << '\n';
    res.artifacts.push_back("dataset.json");
  }

  opt::Adam adam(store.size(), c.lr);
  opt::ExpSchedule sched(c.lr, c.gamma > 0.0 ? c.gamma : 1.0);
  std::vector<double> grad(store.size());
  std::vector<CurveRow> curve;
  const std::size_t n = ds.triples.size();
  thread_local ad::Tape tape;
  std::vector<ad::Var> sq, fv(scfg.nx);
  long long step_no = 0;
  for (long long epoch = 0; step_no < c.epochs; ++epoch) {
    auto batches = data::make_batches(n, c.batch_size, c.seed,
                                      static_cast<std::uint64_t>(epoch), true);
    for (const auto& b : batches) {
      if (step_no >= c.epochs) break;
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      const double w = 1.0 / static_cast<double>(b.size());
      for (std::size_t at = 0; at < b.size(); at += c.chunk) {
        const std::size_t stop = std::min(at + c.chunk, b.size());
        tape.clear();
        tape.seed(store.values());
        TapeCtx ctx{&tape, store.data()};
        auto bc = make_cache(net.branch, ctx);
        auto tc = make_cache(net.trunk, ctx);
        sq.clear();
        for (std::size_t i = at; i < stop; ++i) {
          const auto& t = ds.triples[b[i]];
          for (std::size_t k = 0; k < scfg.nx; ++k) fv[k] = ad::Var{t.f_sensors[k]};
          const std::array<ad::Var, 2> xt{ad::Var{t.xt[0]}, ad::Var{t.xt[1]}};
          ad::Var pred = onet::deeponet_forward<ad::Var>(
              net, ctx, bc, tc, std::span<const ad::Var>(fv),
              std::span<const ad::Var>(xt.data(), 2));
          sq.push_back(ad::sqr(pred - t.u));
        }
        ad::Var term = tape.sum(sq) * w;
        loss += term.v;
        tape.backward(term, grad);
      }
      adam.set_lr(sched.current());
      adam.step(store.values(), grad);
      ++step_no;
      if (step_no % c.sched_every == 0) sched.advance();
      if (step_no % 50 == 0 || step_no == c.epochs) curve.push_back({step_no, {loss, adam.lr()}});
    }
  }
  write_curve(c.out_dir + "/loss_curve.csv", "step,train_mse,lr", curve);
  res.artifacts.push_back("loss_curve.csv");

  // mean relative L2 over held-out forcing seeds, full space-time grid
  std::ofstream rep(c.out_dir + "/eval_report.csv");
  rep << "seed,rel_l2\n";
  double mean = 0.0;
  onet::GRFSampler grf(scfg.nx);
  for (std::size_t s = 0; s < c.n_test_seeds; ++s) {
    const std::uint64_t ts = rng::substream(c.seed, "operator/test").next_u64() + s;
    auto f = grf.sample(ts);
    const double r = onet::evaluate_on_forcing(net, store, scfg, f, grf.sensors());
    rep << ts << ',' << fmt(r) << '\n';
    mean += r;
  }
  mean /= static_cast<double>(c.n_test_seeds);
  res.artifacts.push_back("eval_report.csv");
  res.metrics["mean_rel_l2"] = mean;
  res.metrics["trunk_param_count"] = static_cast<double>(net.trunk.param_count);
  res.metrics["branch_param_count"] = static_cast<double>(net.branch.param_count);
}

inline void run_mnist(const RunConfig& c, Model& model, ParamStore& store,
                      ExperimentResult& res) {
  namespace fs = std::filesystem;
  const std::string base = c.mnist_dir;
  const std::string files[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
  for (const auto& f : files) {
    if (!fs::exists(fs::path(base) / f)) {
      throw MissingDataError("missing MNIST file: " + (fs::path(base) / f).string() +
                             " (supply --mnist-dir with IDX files)");
    }
  }
  auto train = data::mnist_to_dataset(data::load_idx((fs::path(base) / files[0]).string()),
                                      data::load_idx((fs::path(base) / files[1]).string()),
                                      c.mnist_limit);
  auto test = data::mnist_to_dataset(data::load_idx((fs::path(base) / files[2]).string()),
                                     data::load_idx((fs::path(base) / files[3]).string()),
                                     c.mnist_test_limit);

  opt::Adam adam(store.size(), c.lr);
  std::vector<double> grad(store.size());
  std::vector<CurveRow> curve;
  std::vector<std::uint32_t> test_idx(test.n);
  for (std::size_t i = 0; i < test.n; ++i) test_idx[i] = static_cast<std::uint32_t>(i);
  for (long long epoch = 1; epoch <= c.epochs; ++epoch) {
    auto batches = data::make_batches(train.n, c.batch_size, c.seed,
                                      static_cast<std::uint64_t>(epoch), true);
    double mean_loss = 0.0;
    for (const auto& b : batches) {
      std::fill(grad.begin(), grad.end(), 0.0);
      mean_loss += mse_loss_grad(model, store, train, std::span<const std::uint32_t>(b),
                                 grad, c.chunk);
      adam.step(store.values(), grad);
    }
    mean_loss /= static_cast<double>(batches.size());
    res.metrics["train_loss_epoch" + std::to_string(epoch)] = mean_loss;
    curve.push_back({epoch, {mean_loss}});
  }
  res.metrics["test_loss"] = eval_mse(model, store, test, test_idx);
  write_curve(c.out_dir + "/loss_curve.csv", "epoch,train_mse", curve);
  res.artifacts.push_back("loss_curve.csv");
}

}  // namespace detail

/// Runs one experiment configuration end to end and writes all artifacts.
inline ExperimentResult run(const ExperimentConfig& in) {
  const RunConfig c = resolve(in);
  std::filesystem::create_directories(c.out_dir);
  ExperimentResult res;
  res.config = c;
  res.hash = config_hash(c);
  detail::write_text(c.out_dir + "/config.json", to_json(c).dump(1) + "\n");

  const auto t0 = std::chrono::steady_clock::now();
  ParamStore store;
  if (c.experiment == "deeponet") {
    ModelSpec branch;
    branch.kind = "mlp";
    branch.widths = {100, 40, 40, 40, 40, 100};
    ModelSpec trunk = detail::make_model_spec(c);
    auto net = onet::DeepONet::init(branch, trunk, c.seed, store);
    res.param_count = store.size();
    detail::run_deeponet(c, res, store, net);
  } else {
    Model model = init_model(detail::make_model_spec(c), c.seed, store);
    res.param_count = count_parameters(model);
    if (c.experiment == "nonsmooth2d") {
      detail::run_nonsmooth2d(c, model, store, res);
    } else if (c.experiment == "multiscale1d") {
      detail::run_multiscale(c, model, store, res, false);
    } else if (c.experiment == "ntk") {
      detail::run_multiscale(c, model, store, res, true);
    } else if (c.experiment == "heat") {
      auto prob = pinn::heat_problem(c.k_freq);
      detail::run_pinn(c, prob, model, store, res);
    } else if (c.experiment == "helmholtz") {
      auto prob = pinn::helmholtz_problem(1, 1, 1.0);
      detail::run_pinn(c, prob, model, store, res);
    } else if (c.experiment == "mnist") {
      detail::run_mnist(c, model, store, res);
    }
    save_checkpoint(c.out_dir + "/checkpoint.json", model, store, c.seed);
  }
  const auto t1 = std::chrono::steady_clock::now();
  res.wall_time_sec = std::chrono::duration<double>(t1 - t0).count();
  res.per_epoch_sec = res.wall_time_sec / static_cast<double>(std::max(1LL, c.epochs));
  if (c.experiment != "deeponet") res.artifacts.push_back("checkpoint.json");

  res.metrics["param_count"] = static_cast<double>(res.param_count);
  nlohmann::json mj;
  mj["experiment"] = c.experiment;
  mj["model"] = c.model;
  mj["config_hash"] = res.hash;
  mj["param_count"] = res.param_count;
  mj["metrics"] = res.metrics;
  mj["artifacts"] = res.artifacts;
  detail::write_text(c.out_dir + "/metrics.json", mj.dump(1) + "\n");
  nlohmann::json tj;
  tj["wall_time_sec"] = res.wall_time_sec;
  tj["per_epoch_sec"] = res.per_epoch_sec;
  detail::write_text(c.out_dir + "/timing.json", tj.dump(1) + "\n");
  res.artifacts.push_back("config.json");
  res.artifacts.push_back("metrics.json");
  res.artifacts.push_back("timing.json");
  return res;
}

// ---- aggregation ------------------------------------------------------------------

struct TableRow {
  std::string model, layers, basis, experiment;
  std::size_t params = 0;
  double error = 0.0;
  double time_sec = 0.0;
  double per_epoch_sec = 0.0;
};

inline std::string pick_error_key(const std::string& experiment) {
  if (experiment == "nonsmooth2d") return "test_mse";
  if (experiment == "heat") return "rel_linf";
  if (experiment == "helmholtz") return "rel_l2";
  if (experiment == "deeponet") return "mean_rel_l2";
  if (experiment == "mnist") return "test_loss";
  return "final_train_mse";
}

/// Aggregates completed run directories into a markdown table (returned) and
/// a CSV file next to it. Rows sort by error ascending; malformed runs are
/// skipped with a warning on stderr.
inline std::string table(std::span<const std::string> run_dirs,
                         const std::string& out_prefix = "table") {
  std::vector<TableRow> rows;
  double rbf_epoch_time = -1.0, spline_epoch_time = -1.0;
  for (const auto& dir : run_dirs) {
    try {
      std::ifstream cf(dir + "/config.json"), mf(dir + "/metrics.json");
      if (!cf || !mf) throw std::runtime_error("missing config.json or metrics.json");
      nlohmann::json cj = nlohmann::json::parse(cf);
      nlohmann::json mj = nlohmann::json::parse(mf);
      TableRow r;
      r.experiment = cj.at("experiment").get<std::string>();
      r.model = cj.at("model").get<std::string>();
      const auto widths = cj.at("widths").get<std::vector<int>>();
      r.layers = "[";
      for (std::size_t i = 0; i < widths.size(); ++i) {
        r.layers += std::to_string(widths[i]);
        if (i + 1 < widths.size()) r.layers += ",";
      }
      r.layers += "]";
      r.basis = r.model == "mlp"   ? "tanh"
                : r.model == "kan" ? "spline"
                                   : "rbf-" + cj.at("kernel").get<std::string>();
      r.params = mj.at("param_count").get<std::size_t>();
      r.error = mj.at("metrics").at(pick_error_key(r.experiment)).get<double>();
      std::ifstream tf(dir + "/timing.json");
      if (tf) {
        nlohmann::json tj = nlohmann::json::parse(tf);
        r.time_sec = tj.at("wall_time_sec").get<double>();
        r.per_epoch_sec = tj.at("per_epoch_sec").get<double>();
      }
      if (r.model == "rbf-kan") rbf_epoch_time = r.per_epoch_sec;
      if (r.model == "kan") spline_epoch_time = r.per_epoch_sec;
      rows.push_back(std::move(r));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "table: skipping %s (%s)\n", dir.c_str(), e.what());
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const TableRow& a, const TableRow& b) { return a.error < b.error; });

  std::string md = "| Model | Layers | Basis | #Param | Error | Time (s) |\n";
  md += "|---|---|---|---|---|---|\n";
  std::string csv = "model,layers,basis,params,error,time_sec\n";
  for (const auto& r : rows) {
    md += "| " + r.model + " | " + r.layers + " | " + r.basis + " | " +
          std::to_string(r.params) + " | " + detail::fmt(r.error) + " | " +
          detail::fmt(r.time_sec) + " |\n";
    csv += r.model + ",\"" + r.layers + "\"," + r.basis + "," + std::to_string(r.params) +
           "," + detail::fmt(r.error) + "," + detail::fmt(r.time_sec) + "\n";
  }
  if (rbf_epoch_time > 0.0 && spline_epoch_time > 0.0) {
    md += "\nper-epoch time ratio rbf-kan/kan: " +
          detail::fmt(rbf_epoch_time / spline_epoch_time) + "\n";
  }
  detail::write_text(out_prefix + ".md", md);
  detail::write_text(out_prefix + ".csv", csv);
  return md;
}

}  // namespace fkan::experiments
