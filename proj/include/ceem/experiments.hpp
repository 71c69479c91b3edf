#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ceem/ceem.hpp"
#include "ceem/lorenz.hpp"
#include "ceem/particle_em.hpp"

namespace ceem {

/// Synthetic (coupled) Lorenz benchmark definition.
struct LorenzBenchmarkSpec {
  Index num_attractors = 1;
  /// Rows of C; 0 means 3K - 2 (2 for a single attractor).
  Index obs_rows = 0;
  double h_scale = 0.1;
  Index T = 128;
  double dt = 0.04;
  double sigma_w = 0.0;
  double sigma_v = 0.01;
  Index num_trajectories = 1;
  std::uint64_t seed = 0;

  Index resolved_obs_rows() const;
};

struct LorenzBenchmark {
  LorenzParams truth;
  std::shared_ptr<const DiscretizedModel> model;
  Vector theta_true;
  InitialConditionSpec x0;
  GaussianNoiseSpec noise;  // noise used to generate the data
  TrajectoryDataset data;
};

/// Samples the structure (C, H) from stream 1 of the seed, the initial
/// states from stream 2, and trajectory noise from per-trajectory seeds.
LorenzBenchmark make_lorenz_benchmark(const LorenzBenchmarkSpec& spec);

/// Independent multiplicative factors Uniform(1 - fraction, 1 + fraction)
/// per coordinate.
Vector perturb_within(const Vector& theta, double fraction, Rng& rng);

/// Largest |theta_i - truth_i| / |truth_i| over coordinates with nonzero truth.
double max_relative_error(const Vector& theta, const Vector& truth);

/// First epoch whose parameters are within `fraction` of the truth, or
/// nullopt if none is.
std::optional<int> epochs_to_accuracy(const FitReport& report, const Vector& truth,
                                      double fraction);

/// True when every consecutive J difference is >= -slack (epoch 0 included).
bool monotone_objective(const FitReport& report, double slack = 1e-6);

struct ParamSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  int count = 0;
  /// |mean - truth| <= 2 standard errors.
  bool within_two_se = false;
};

/// Mean and standard error (sample std / sqrt(count)) of each coordinate.
std::vector<ParamSummary> summarize_estimates(const std::vector<Vector>& estimates,
                                              const Vector& truth,
                                              const std::vector<std::string>& names);

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string message;
};

// Bias study on a single attractor.

struct Table1Options {
  std::vector<std::pair<double, double>> noise_levels = {
      {0.001, 0.01}, {0.01, 0.01}, {0.1, 0.01}, {0.001, 0.05}, {0.001, 0.1}};
  int num_seeds = 10;
  std::uint64_t base_seed = 0;
  double init_fraction = 0.1;
  LorenzBenchmarkSpec benchmark;
  CeemConfig ceem;

  Table1Options();
};

struct Table1Row {
  double sigma_w = 0.0, sigma_v = 0.0;
  std::vector<ParamSummary> params;
  std::vector<std::uint64_t> seeds;
  std::vector<FitReport> runs;
  std::vector<SeedFailure> failures;
};

std::vector<Table1Row> run_table1(const Table1Options& options);
/// table1.csv (sigma_w, sigma_v, param, truth, mean, se, seeds, within_2se)
/// and table1_runs.csv with one row per seed.
void write_table1(const std::vector<Table1Row>& rows, const std::filesystem::path& directory);

// CE-EM versus particle EM.

struct Fig2Options {
  int num_seeds = 10;
  std::uint64_t base_seed = 100;
  double init_fraction = 0.1;
  double success_fraction = 0.02;
  LorenzBenchmarkSpec benchmark;
  CeemConfig ceem;
  PemConfig pem;
  bool run_pem = true;

  Fig2Options();
};

struct Fig2Run {
  std::uint64_t seed = 0;
  Vector theta_true;
  FitReport ceem, pem;
  std::optional<int> ceem_epochs_to_success, pem_epochs_to_success;
  double ceem_seconds_per_epoch = 0.0, pem_seconds_per_epoch = 0.0;
};

struct Fig2Result {
  std::vector<Fig2Run> runs;
  std::vector<SeedFailure> failures;
};

Fig2Result run_fig2(const Fig2Options& options);
/// fig2_curves.csv (seed, algorithm, epoch, J, max_rel_err, wall_s, theta...)
/// and fig2_summary.csv.
void write_fig2(const Fig2Result& result, const std::filesystem::path& directory);

// Dynamics error versus number of trajectories on coupled attractors.

struct Fig3Options {
  Index num_attractors = 3;
  std::vector<Index> batch_sizes = {2, 4, 8};
  int num_seeds = 2;
  std::uint64_t base_seed = 200;
  double init_fraction = 0.1;
  /// Process-noise std-dev assumed by the fitter; the data are noiseless.
  double model_sigma_w = 0.01;
  Index eps_samples = 1024;
  LorenzBenchmarkSpec benchmark;
  CeemConfig ceem;

  Fig3Options();
};

struct Fig3Run {
  Index batch_size = 0;
  std::uint64_t seed = 0;
  FitReport report;
};

struct Fig3Result {
  std::vector<Fig3Run> runs;
  std::vector<SeedFailure> failures;

  /// Median final dynamics error over seeds for a batch size.
  double median_final_eps(Index batch_size) const;
};

Fig3Result run_fig3(const Fig3Options& options);
/// fig3_curves.csv (batch, seed, epoch, J, eps, wall_s) and fig3_summary.csv.
void write_fig3(const Fig3Result& result, const std::filesystem::path& directory);

}  // namespace ceem
