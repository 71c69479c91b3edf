#include "ceem/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ceem/csv.hpp"
#include "ceem/parallel.hpp"

namespace ceem {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) { return format_double(v); }

std::string fmt_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("nan");
}

std::uint64_t seed_for(std::uint64_t base, int index) {
  return base + static_cast<std::uint64_t>(index);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double mean_wall(const FitReport& r) {
  if (r.epochs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : r.epochs) s += e.wall_seconds;
  return s / static_cast<double>(r.epochs.size());
}

}  // namespace

Index LorenzBenchmarkSpec::resolved_obs_rows() const {
  if (obs_rows > 0) return obs_rows;
  return num_attractors == 1 ? 2 : 3 * num_attractors - 2;
}

LorenzBenchmark make_lorenz_benchmark(const LorenzBenchmarkSpec& spec) {
  if (spec.num_attractors < 1) throw ConfigError("benchmark: num_attractors must be positive");
  if (spec.T < 2) throw ConfigError("benchmark: T must be at least 2");
  if (spec.num_trajectories < 1) throw ConfigError("benchmark: need at least one trajectory");
  if (!(spec.sigma_w >= 0.0) || !(spec.sigma_v >= 0.0)) {
    throw ConfigError("benchmark: noise std-devs must be nonnegative");
  }
  const Index K = spec.num_attractors;
  const Index n = 3 * K;
  const Index m = spec.resolved_obs_rows();

  LorenzBenchmark b;
  Rng structure_rng(spec.seed, 1);
  b.truth = sample_lorenz_structure(K, spec.h_scale, m, structure_rng);
  b.model = make_lorenz_model(K, b.truth.C, spec.dt);
  b.theta_true = lorenz_theta(b.truth);
  b.x0 = InitialConditionSpec::lorenz(K);
  b.noise = GaussianNoiseSpec::isotropic(n, spec.sigma_w, m, spec.sigma_v);

  auto& man = b.data.manifest;
  man.model_id = b.model->id();
  man.n = n;
  man.m = m;
  man.p = 0;
  man.T = spec.T;
  man.dt = spec.dt;
  man.num_trajectories = spec.num_trajectories;
  man.seed = spec.seed;
  man.theta_true = b.theta_true;
  man.sigma_w = b.noise.sigma_w;
  man.sigma_v = b.noise.sigma_v;
  man.observation_matrix = b.truth.C;
  man.generation = {{"num_attractors", std::to_string(K)},
                    {"h_scale", fmt(spec.h_scale)}};

  Rng x0_rng(spec.seed, 2);
  const Matrix inputs = no_inputs(spec.T);
  for (Index i = 0; i < spec.num_trajectories; ++i) {
    const Vector x0 = sample_initial_condition(b.x0, x0_rng);
    b.data.trajectories.push_back(generate_trajectory(*b.model, b.theta_true, x0, inputs, spec.T,
                                                      b.noise, trajectory_seed(spec.seed, i)));
  }
  b.data.validate();
  return b;
}

Vector perturb_within(const Vector& theta, double fraction, Rng& rng) {
  if (!(fraction >= 0.0) || fraction >= 1.0) {
    throw ConfigError("init fraction must lie in [0, 1)");
  }
  Vector out(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    out[i] = theta[i] * rng.uniform(1.0 - fraction, 1.0 + fraction);
  }
  return out;
}

double max_relative_error(const Vector& theta, const Vector& truth) {
  require_dim(theta.size(), truth.size(), "parameter vector");
  double worst = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) continue;
    worst = std::max(worst, std::abs(theta[i] - truth[i]) / std::abs(truth[i]));
  }
  return worst;
}

std::optional<int> epochs_to_accuracy(const FitReport& report, const Vector& truth,
                                      double fraction) {
  for (const auto& e : report.epochs) {
    if (max_relative_error(e.theta, truth) <= fraction) return e.epoch;
  }
  return std::nullopt;
}

bool monotone_objective(const FitReport& report, double slack) {
  double prev = report.initial_J;
  for (const auto& e : report.epochs) {
    if (std::isfinite(prev) && e.J < prev - slack) return false;
    prev = e.J;
  }
  return true;
}

std::vector<ParamSummary> summarize_estimates(const std::vector<Vector>& estimates,
                                              const Vector& truth,
                                              const std::vector<std::string>& names) {
  std::vector<ParamSummary> out;
  const Index q = truth.size();
  const int count = static_cast<int>(estimates.size());
  for (Index i = 0; i < q; ++i) {
    ParamSummary s;
    s.name = i < static_cast<Index>(names.size()) ? names[static_cast<size_t>(i)]
                                                  : "theta_" + std::to_string(i);
    s.truth = truth[i];
    s.count = count;
    if (count == 0) {
      s.mean = s.std_error = std::numeric_limits<double>::quiet_NaN();
      out.push_back(s);
      continue;
    }
    double sum = 0.0;
    for (const auto& e : estimates) sum += e[i];
    s.mean = sum / count;
    double ss = 0.0;
    for (const auto& e : estimates) ss += (e[i] - s.mean) * (e[i] - s.mean);
    s.std_error = count > 1 ? std::sqrt(ss / (count - 1) / count) : 0.0;
    s.within_two_se = std::abs(s.mean - s.truth) <= 2.0 * s.std_error;
    out.push_back(s);
  }
  return out;
}

Table1Options::Table1Options() {
  benchmark.num_attractors = 1;
  benchmark.num_trajectories = 1;
  ceem.accelerate = true;
  ceem.max_epochs = 1000;
}

std::vector<Table1Row> run_table1(const Table1Options& options) {
  if (options.num_seeds < 1) throw ConfigError("table1: num_seeds must be positive");
  std::vector<Table1Row> rows;
  for (const auto& [sw, sv] : options.noise_levels) {
    Table1Row row;
    row.sigma_w = sw;
    row.sigma_v = sv;
    const int S = options.num_seeds;
    std::vector<std::optional<FitReport>> runs(static_cast<size_t>(S));
    std::vector<std::string> errors(static_cast<size_t>(S));
    Vector truth;
    std::vector<std::string> names;
    parallel_for(S, [&](std::ptrdiff_t s) {
      const auto seed = seed_for(options.base_seed, static_cast<int>(s));
      try {
        LorenzBenchmarkSpec spec = options.benchmark;
        spec.sigma_w = sw;
        spec.sigma_v = sv;
        spec.seed = seed;
        const LorenzBenchmark b = make_lorenz_benchmark(spec);
        Rng init_rng(seed, 3);
        const Vector theta0 = perturb_within(b.theta_true, options.init_fraction, init_rng);
        CeemConfig cfg = options.ceem;
        if (!cfg.lift_center) cfg.lift_center = b.x0.mean;
        runs[static_cast<size_t>(s)] = ceem_fit(b.data, *b.model, theta0, b.noise, cfg);
      } catch (const std::exception& e) {
        errors[static_cast<size_t>(s)] = e.what();
      }
    });
    {
      LorenzBenchmarkSpec spec = options.benchmark;
      const LorenzParams nominal = LorenzParams::nominal(spec.num_attractors,
                                                         Matrix::Identity(3 * spec.num_attractors,
                                                                          3 * spec.num_attractors));
      truth = lorenz_theta(nominal);
      names = lorenz_layout(spec.num_attractors).coordinate_names();
    }
    std::vector<Vector> estimates;
    for (int s = 0; s < S; ++s) {
      const auto seed = seed_for(options.base_seed, s);
      if (runs[static_cast<size_t>(s)]) {
        estimates.push_back(runs[static_cast<size_t>(s)]->theta);
        row.seeds.push_back(seed);
        row.runs.push_back(std::move(*runs[static_cast<size_t>(s)]));
      } else {
        row.failures.push_back({seed, errors[static_cast<size_t>(s)]});
      }
    }
    row.params = summarize_estimates(estimates, truth, names);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_table1(const std::vector<Table1Row>& rows, const std::filesystem::path& directory) {
  auto summary = open_output(directory / "table1.csv");
  summary << "sigma_w,sigma_v,param,truth,mean,se,seeds,within_2se\n";
  for (const auto& r : rows) {
    for (const auto& p : r.params) {
      summary << fmt(r.sigma_w) << ',' << fmt(r.sigma_v) << ',' << p.name << ',' << fmt(p.truth)
              << ',' << fmt(p.mean) << ',' << fmt(p.std_error) << ',' << p.count << ','
              << (p.within_two_se ? 1 : 0) << '\n';
    }
  }
  auto runs = open_output(directory / "table1_runs.csv");
  runs << "sigma_w,sigma_v,seed,status,epochs,termination,final_J";
  const Index q = rows.empty() || rows.front().params.empty()
                      ? 0
                      : static_cast<Index>(rows.front().params.size());
  for (Index i = 0; i < q; ++i) runs << ",theta_" << i;
  runs << '\n';
  for (const auto& r : rows) {
    for (size_t k = 0; k < r.runs.size(); ++k) {
      const auto& f = r.runs[k];
      runs << fmt(r.sigma_w) << ',' << fmt(r.sigma_v) << ',' << r.seeds[k] << ",ok,"
           << f.epochs.size() << ',' << to_string(f.termination) << ','
           << (f.epochs.empty() ? fmt(f.initial_J) : fmt(f.epochs.back().J));
      for (Index i = 0; i < f.theta.size(); ++i) runs << ',' << fmt(f.theta[i]);
      runs << '\n';
    }
    for (const auto& fail : r.failures) {
      runs << fmt(r.sigma_w) << ',' << fmt(r.sigma_v) << ',' << fail.seed << ",failed,0,,nan";
      for (Index i = 0; i < q; ++i) runs << ",nan";
      runs << '\n';
    }
  }
}

Fig2Options::Fig2Options() {
  benchmark.num_attractors = 1;
  benchmark.num_trajectories = 4;
  benchmark.sigma_w = 0.1;
  benchmark.sigma_v = 0.5;
  ceem.max_epochs = 30;
  ceem.accelerate = true;
  pem.num_particles = 100;
  pem.num_samples = 10;
  pem.epochs = 50;
  pem.initial = InitialConditionSpec::lorenz(1);
}

Fig2Result run_fig2(const Fig2Options& options) {
  if (options.num_seeds < 1) throw ConfigError("fig2: num_seeds must be positive");
  const int S = options.num_seeds;
  std::vector<std::optional<Fig2Run>> runs(static_cast<size_t>(S));
  std::vector<std::string> errors(static_cast<size_t>(S));
  parallel_for(S, [&](std::ptrdiff_t s) {
    const auto seed = seed_for(options.base_seed, static_cast<int>(s));
    try {
      LorenzBenchmarkSpec spec = options.benchmark;
      spec.seed = seed;
      const LorenzBenchmark b = make_lorenz_benchmark(spec);
      Rng init_rng(seed, 3);
      const Vector theta0 = perturb_within(b.theta_true, options.init_fraction, init_rng);
      Fig2Run run;
      run.seed = seed;
      run.theta_true = b.theta_true;
      CeemConfig cfg = options.ceem;
      if (!cfg.lift_center) cfg.lift_center = b.x0.mean;
      run.ceem = ceem_fit(b.data, *b.model, theta0, b.noise, cfg);
      run.ceem_epochs_to_success =
          epochs_to_accuracy(run.ceem, b.theta_true, options.success_fraction);
      run.ceem_seconds_per_epoch = mean_wall(run.ceem);
      if (options.run_pem) {
        PemConfig pem = options.pem;
        pem.seed = seed;
        run.pem = pem_fit(b.data, *b.model, theta0, b.noise, pem);
        run.pem_epochs_to_success =
            epochs_to_accuracy(run.pem, b.theta_true, options.success_fraction);
        run.pem_seconds_per_epoch = mean_wall(run.pem);
      }
      runs[static_cast<size_t>(s)] = std::move(run);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(s)] = e.what();
    }
  });
  Fig2Result out;
  for (int s = 0; s < S; ++s) {
    if (runs[static_cast<size_t>(s)]) {
      out.runs.push_back(std::move(*runs[static_cast<size_t>(s)]));
    } else {
      out.failures.push_back({seed_for(options.base_seed, s), errors[static_cast<size_t>(s)]});
    }
  }
  return out;
}

void write_fig2(const Fig2Result& result, const std::filesystem::path& directory) {
  auto curves = open_output(directory / "fig2_curves.csv");
  curves << "seed,algorithm,epoch,J,max_rel_err,wall_s,theta_0,theta_1,theta_2\n";
  auto emit = [&](std::uint64_t seed, const FitReport& r, const Vector& truth) {
    auto line = [&](int epoch, double J, double wall, const Vector& theta) {
      curves << seed << ',' << r.algorithm << ',' << epoch << ',' << fmt(J) << ','
             << fmt(max_relative_error(theta, truth)) << ',' << fmt(wall);
      for (Index i = 0; i < theta.size(); ++i) curves << ',' << fmt(theta[i]);
      curves << '\n';
    };
    line(0, r.initial_J, 0.0, r.initial_theta);
    for (const auto& e : r.epochs) line(e.epoch, e.J, e.wall_seconds, e.theta);
  };
  for (const auto& run : result.runs) {
    emit(run.seed, run.ceem, run.theta_true);
    if (!run.pem.epochs.empty()) emit(run.seed, run.pem, run.theta_true);
  }

  auto summary = open_output(directory / "fig2_summary.csv");
  summary << "seed,status,ceem_epochs_to_2pct,pem_epochs_to_2pct,ceem_s_per_epoch,"
             "pem_s_per_epoch,ceem_final_rel_err,pem_final_rel_err\n";
  auto opt_int = [](const std::optional<int>& v) { return v ? std::to_string(*v) : "none"; };
  for (const auto& run : result.runs) {
    summary << run.seed << ",ok," << opt_int(run.ceem_epochs_to_success) << ','
            << opt_int(run.pem_epochs_to_success) << ',' << fmt(run.ceem_seconds_per_epoch) << ','
            << fmt(run.pem_seconds_per_epoch) << ','
            << fmt(max_relative_error(run.ceem.theta, run.theta_true)) << ','
            << (run.pem.epochs.empty() ? std::string("nan")
                                       : fmt(max_relative_error(run.pem.theta, run.theta_true)))
            << '\n';
  }
  for (const auto& f : result.failures) summary << f.seed << ",failed,none,none,nan,nan,nan,nan\n";
}

Fig3Options::Fig3Options() {
  benchmark.num_attractors = 3;
  benchmark.sigma_w = 0.0;
  benchmark.sigma_v = 0.01;
  ceem.rho_theta = 0.0;
  ceem.max_epochs = 200;
  ceem.accelerate = true;
}

Fig3Result run_fig3(const Fig3Options& options) {
  if (options.num_seeds < 1) throw ConfigError("fig3: num_seeds must be positive");
  if (options.batch_sizes.empty()) throw ConfigError("fig3: batch_sizes is empty");
  if (!(options.model_sigma_w > 0.0)) throw ConfigError("fig3: model_sigma_w must be positive");
  const Index max_batch = *std::max_element(options.batch_sizes.begin(), options.batch_sizes.end());
  const int S = options.num_seeds;
  const auto B = static_cast<int>(options.batch_sizes.size());
  std::vector<std::optional<Fig3Run>> runs(static_cast<size_t>(S * B));
  std::vector<std::string> errors(static_cast<size_t>(S * B));

  parallel_for(S * B, [&](std::ptrdiff_t job) {
    const int s = static_cast<int>(job) / B;
    const Index batch = options.batch_sizes[static_cast<size_t>(job % B)];
    const auto seed = seed_for(options.base_seed, s);
    try {
      LorenzBenchmarkSpec spec = options.benchmark;
      spec.num_attractors = options.num_attractors;
      spec.num_trajectories = max_batch;
      spec.seed = seed;
      LorenzBenchmark b = make_lorenz_benchmark(spec);
      b.data.trajectories.resize(static_cast<size_t>(batch));
      b.data.manifest.num_trajectories = batch;
      Rng init_rng(seed, 3);
      const Vector theta0 = perturb_within(b.theta_true, options.init_fraction, init_rng);
      const GaussianNoiseSpec noise = GaussianNoiseSpec::isotropic(
          b.model->state_dim(), options.model_sigma_w, b.model->obs_dim(), spec.sigma_v);
      TruthInfo truth{b.theta_true, b.x0, options.eps_samples, seed};
      Fig3Run run;
      run.batch_size = batch;
      run.seed = seed;
      CeemConfig cfg = options.ceem;
      if (!cfg.lift_center) cfg.lift_center = b.x0.mean;
      run.report = ceem_fit(b.data, *b.model, theta0, noise, cfg, std::nullopt, truth);
      runs[static_cast<size_t>(job)] = std::move(run);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(job)] = e.what();
    }
  });
  Fig3Result out;
  for (int job = 0; job < S * B; ++job) {
    if (runs[static_cast<size_t>(job)]) {
      out.runs.push_back(std::move(*runs[static_cast<size_t>(job)]));
    } else {
      std::ostringstream msg;
      msg << "batch " << options.batch_sizes[static_cast<size_t>(job % B)] << ": "
          << errors[static_cast<size_t>(job)];
      out.failures.push_back({seed_for(options.base_seed, job / B), msg.str()});
    }
  }
  return out;
}

double Fig3Result::median_final_eps(Index batch_size) const {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.batch_size != batch_size) continue;
    const auto& eps = r.report.epochs.empty() ? r.report.initial_eps : r.report.epochs.back().eps;
    if (eps) v.push_back(*eps);
  }
  return median(std::move(v));
}

void write_fig3(const Fig3Result& result, const std::filesystem::path& directory) {
  auto curves = open_output(directory / "fig3_curves.csv");
  curves << "batch,seed,epoch,J,eps,wall_s\n";
  for (const auto& r : result.runs) {
    curves << r.batch_size << ',' << r.seed << ",0," << fmt(r.report.initial_J) << ','
           << fmt_optional(r.report.initial_eps) << ",0\n";
    for (const auto& e : r.report.epochs) {
      curves << r.batch_size << ',' << r.seed << ',' << e.epoch << ',' << fmt(e.J) << ','
             << fmt_optional(e.eps) << ',' << fmt(e.wall_seconds) << '\n';
    }
  }
  auto summary = open_output(directory / "fig3_summary.csv");
  summary << "batch,seeds,initial_eps_mean,final_eps_mean,final_eps_se,final_eps_median\n";
  std::vector<Index> batches;
  for (const auto& r : result.runs) {
    if (std::find(batches.begin(), batches.end(), r.batch_size) == batches.end()) {
      batches.push_back(r.batch_size);
    }
  }
  std::sort(batches.begin(), batches.end());
  for (Index b : batches) {
    std::vector<double> init, fin;
    for (const auto& r : result.runs) {
      if (r.batch_size != b) continue;
      init.push_back(r.report.initial_eps.value_or(std::numeric_limits<double>::quiet_NaN()));
      const auto& e = r.report.epochs.empty() ? r.report.initial_eps : r.report.epochs.back().eps;
      fin.push_back(e.value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    const double n = static_cast<double>(fin.size());
    double mi = 0.0, mf = 0.0;
    for (size_t i = 0; i < fin.size(); ++i) {
      mi += init[i] / n;
      mf += fin[i] / n;
    }
    double ss = 0.0;
    for (double f : fin) ss += (f - mf) * (f - mf);
    const double se = fin.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    summary << b << ',' << fin.size() << ',' << fmt(mi) << ',' << fmt(mf) << ',' << fmt(se) << ','
            << fmt(result.median_final_eps(b)) << '\n';
  }
  for (const auto& f : result.failures) summary << "# failed seed " << f.seed << ": " << f.message << '\n';
}

}  // namespace ceem
