#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "ceem/config.hpp"
#include "ceem/csv.hpp"
#include "ceem/eval.hpp"
#include "ceem/experiments.hpp"
#include "ceem/parallel.hpp"

namespace fs = std::filesystem;
using namespace ceem;

namespace {

struct Common {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "Experiment configuration (YAML)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", c.out_dir, "Output directory (env CEEM_OUT_DIR)");
  cmd->add_option("--seed", c.seed, "Override the data seed");
  cmd->add_option("--threads", c.threads, "Worker threads, 0 for all cores (env CEEM_THREADS)");
}

void apply_threads(const Common& c) {
  int threads = c.threads;
  if (threads == 0) {
    if (const char* env = std::getenv("CEEM_THREADS")) threads = std::atoi(env);
  }
  set_num_threads(threads);
}

fs::path out_root(const Common& c, const std::string& fallback) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("CEEM_OUT_DIR")) return env;
  return fallback;
}

ExperimentConfig load(const Common& c) {
  auto cfg = load_config(c.config);
  if (c.seed) cfg.data.seed = *c.seed;
  return cfg;
}

std::optional<TruthInfo> truth_for(const ExperimentConfig& cfg, const Experiment& e) {
  if (!cfg.eval.eps || !e.theta_true) return std::nullopt;
  return TruthInfo{*e.theta_true, e.x0, cfg.eval.eps_samples, cfg.data.seed};
}

void print_manifest(const TrajectoryDataset& d, const fs::path& dir) {
  const auto& m = d.manifest;
  std::cout << "dataset " << dir.string() << ": model=" << m.model_id << " n=" << m.n
            << " m=" << m.m << " p=" << m.p << " T=" << m.T << " dt=" << m.dt
            << " trajectories=" << m.num_trajectories << " seed=" << m.seed << '\n';
}

int cmd_simulate(const Common& c) {
  const auto cfg = load(c);
  if (cfg.data.path) throw ConfigError("simulate: data.path is set; nothing to generate");
  const auto e = build_experiment(cfg);
  const fs::path dir = out_root(c, cfg.output.directory) / cfg.output.dataset;
  write_dataset(e.data, dir);
  print_manifest(e.data, dir);
  return 0;
}

int cmd_fit(const Common& c, const std::string& algorithm) {
  const auto cfg = load(c);
  const auto e = build_experiment(cfg);
  e.fit_noise.validate_for_density();
  const auto truth = truth_for(cfg, e);
  FitReport report;
  if (algorithm == "ceem") {
    report = ceem_fit(e.data, *e.model, e.theta_init, e.fit_noise, resolved_ceem(cfg, e),
                      std::nullopt, truth);
  } else {
    report = pem_fit(e.data, *e.model, e.theta_init, e.fit_noise, resolved_pem(cfg, e), truth);
  }
  const fs::path dir = out_root(c, cfg.output.directory) / cfg.output.fit;
  write_fit_report(report, dir);
  std::cout << algorithm << ": " << report.epochs.size() << " epochs, termination "
            << to_string(report.termination) << ", J " << report.initial_J << " -> "
            << (report.epochs.empty() ? report.initial_J : report.epochs.back().J) << '\n';
  if (report.initial_eps && !report.epochs.empty() && report.epochs.back().eps) {
    std::cout << "eps " << *report.initial_eps << " -> " << *report.epochs.back().eps << '\n';
  }
  std::cout << "wrote " << (dir / "history.csv").string() << " and "
            << (dir / "params.json").string() << '\n';
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& params_path) {
  const auto cfg = load(c);
  const auto e = build_experiment(cfg);
  const Vector theta = read_params(params_path);
  require_dim(theta.size(), e.model->layout().size(), "params.theta");
  const fs::path dir = out_root(c, cfg.output.directory) / cfg.output.metrics;
  std::error_code ec;
  fs::create_directories(dir, ec);

  EkfSettings ekf;
  ekf.drop_first = cfg.eval.drop_first;

  std::optional<DynamicsError> eps;
  if (cfg.eval.eps) {
    if (!e.theta_true) {
      throw ConfigError("evaluate: eps requested but neither the dataset nor the config has theta_true");
    }
    Rng rng(cfg.eval.test_seed, 5);
    eps = dynamics_error(*e.model, theta, *e.theta_true, e.x0, cfg.eval.eps_samples, rng);
    CsvTable t;
    t.header = {"eps", "std_error", "samples"};
    t.rows.push_back({eps->estimate, eps->std_error, static_cast<double>(cfg.eval.eps_samples)});
    write_csv(t, dir / "eps.csv");
    std::cout << "eps " << eps->estimate << " (se " << eps->std_error << ")\n";
  }

  if (cfg.eval.rmse) {
    auto train = evaluate_dataset(*e.model, theta, e.data, ekf);
    train.dynamics = eps;
    write_metric_report(train, dir / "train_rmse.csv");
    std::cout << "train rmse mean " << train.mean << " std " << train.stddev << '\n';
    if (cfg.eval.test_trajectories > 0) {
      const auto test_data =
          simulate_test_set(cfg, e, cfg.eval.test_trajectories, cfg.eval.test_seed);
      auto test = evaluate_dataset(*e.model, theta, test_data, ekf);
      test.dynamics = eps;
      write_metric_report(test, dir / "test_rmse.csv");
      std::cout << "test rmse mean " << test.mean << " std " << test.stddev << '\n';
    }
  }
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

struct ReproduceArgs {
  std::string name;
  bool full = false;
  int seeds = 0;
  bool skip_pem = false;
};

int cmd_reproduce(const Common& c, const ReproduceArgs& r) {
  const fs::path dir = out_root(c, "out") / r.name;
  if (r.name == "table1") {
    Table1Options opt;
    if (r.seeds > 0) opt.num_seeds = r.seeds;
    if (c.seed) opt.base_seed = *c.seed;
    const auto rows = run_table1(opt);
    write_table1(rows, dir);
    for (const auto& row : rows) {
      std::cout << "sigma_w=" << row.sigma_w << " sigma_v=" << row.sigma_v << " seeds="
                << row.seeds.size() << " failures=" << row.failures.size() << '\n';
      for (const auto& p : row.params) {
        std::cout << "  " << p.name << " " << p.mean << " (" << p.std_error << ")"
                  << (p.within_two_se ? "" : "  outside 2 SE") << '\n';
      }
    }
  } else if (r.name == "fig2") {
    Fig2Options opt;
    if (r.seeds > 0) opt.num_seeds = r.seeds;
    if (c.seed) opt.base_seed = *c.seed;
    opt.run_pem = !r.skip_pem;
    const auto res = run_fig2(opt);
    write_fig2(res, dir);
    for (const auto& run : res.runs) {
      std::cout << "seed " << run.seed << ": ceem "
                << (run.ceem_epochs_to_success ? std::to_string(*run.ceem_epochs_to_success)
                                               : std::string("-"));
      if (opt.run_pem) {
        std::cout << ", pem "
                  << (run.pem_epochs_to_success ? std::to_string(*run.pem_epochs_to_success)
                                                : std::string("-"))
                  << ", s/epoch " << run.ceem_seconds_per_epoch << " vs "
                  << run.pem_seconds_per_epoch;
      }
      std::cout << '\n';
    }
    for (const auto& f : res.failures) std::cout << "seed " << f.seed << " failed: " << f.message << '\n';
  } else if (r.name == "fig3-reduced") {
    Fig3Options opt;
    if (r.full) {
      opt.num_attractors = 6;
      opt.benchmark.num_attractors = 6;
    }
    if (r.seeds > 0) opt.num_seeds = r.seeds;
    if (c.seed) opt.base_seed = *c.seed;
    const auto res = run_fig3(opt);
    write_fig3(res, dir);
    for (const auto b : opt.batch_sizes) {
      std::cout << "batch " << b << ": median final eps " << res.median_final_eps(b) << '\n';
    }
    for (const auto& f : res.failures) std::cout << "seed " << f.seed << " failed: " << f.message << '\n';
  } else {
    throw ConfigError("unknown experiment '" + r.name + "'");
  }
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CE-EM system identification"};
  app.require_subcommand(1);

  Common common;
  auto* sim = app.add_subcommand("simulate", "Generate a dataset from a configuration");
  add_common(sim, common, true);

  std::string algorithm = "ceem";
  auto* fit = app.add_subcommand("fit", "Fit model parameters");
  add_common(fit, common, true);
  fit->add_option("--algorithm", algorithm, "ceem or pem")
      ->check(CLI::IsMember({"ceem", "pem"}));

  std::string params;
  auto* eval = app.add_subcommand("evaluate", "Score fitted parameters");
  add_common(eval, common, true);
  eval->add_option("--params", params, "params.json written by fit")
      ->required()
      ->check(CLI::ExistingFile);

  ReproduceArgs repro;
  auto* rep = app.add_subcommand("reproduce", "Run a multi-seed benchmark study");
  add_common(rep, common, false);
  rep->add_option("experiment", repro.name, "table1, fig2 or fig3-reduced")
      ->required()
      ->check(CLI::IsMember({"table1", "fig2", "fig3-reduced"}));
  rep->add_flag("--full", repro.full, "fig3 with six attractors");
  rep->add_option("--seeds", repro.seeds, "Number of seeds");
  rep->add_flag("--skip-pem", repro.skip_pem, "fig2 without the particle EM baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    apply_threads(common);
    if (sim->parsed()) return cmd_simulate(common);
    if (fit->parsed()) return cmd_fit(common, algorithm);
    if (eval->parsed()) return cmd_evaluate(common, params);
    return cmd_reproduce(common, repro);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
