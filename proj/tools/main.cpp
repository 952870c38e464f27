// Command-line harness: `fkan run` trains and evaluates one experiment
// configuration, `fkan table` aggregates finished runs.
//
// Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 missing data.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fkan/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Free-RBF-KAN experiment harness"};
  app.require_subcommand(1);

  fkan::experiments::ExperimentConfig cfg;
  auto* run = app.add_subcommand("run", "train and evaluate one configuration");
  run->add_option("--experiment", cfg.experiment,
                  "nonsmooth2d | multiscale1d | ntk | heat | helmholtz | deeponet | mnist")
      ->required();
  run->add_option("--model", cfg.model, "mlp | kan | rbf-kan | free-rbf-kan");
  run->add_option("--seed", cfg.seed, "experiment seed");
  run->add_option("--epochs", cfg.epochs, "override training epochs/steps");
  run->add_option("--grid", cfg.grid, "override grid size per edge");
  run->add_option("--lr", cfg.lr, "override learning rate");
  run->add_option("--gamma", cfg.gamma, "override lr decay factor");
  run->add_option("--kernel", cfg.kernel, "gaussian | matern52");
  run->add_option("--out", cfg.out_dir, "output directory")->required();
  run->add_option("--mnist-dir", cfg.mnist_dir, "directory with MNIST IDX files");
  run->add_flag("--fast", cfg.fast, "desk-scale CI variant of the experiment");

  std::vector<std::string> dirs;
  std::string table_out = "table";
  auto* table = app.add_subcommand("table", "aggregate run directories into a table");
  table->add_option("dirs", dirs, "run directories")->required();
  table->add_option("--out", table_out, "output path prefix for table.md/.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      auto res = fkan::experiments::run(cfg);
      std::printf("run complete: %s/%s  params=%zu\n", res.config.experiment.c_str(),
                  res.config.model.c_str(), res.param_count);
      for (const auto& [k, v] : res.metrics) std::printf("  %s = %.8g\n", k.c_str(), v);
      std::printf("  wall_time_sec = %.3f\n", res.wall_time_sec);
    } else {
      std::string md = fkan::experiments::table(dirs, table_out);
      std::fputs(md.c_str(), stdout);
    }
  } catch (const fkan::experiments::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const fkan::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const fkan::data::MissingDataError& e) {
    std::fprintf(stderr, "missing data: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
