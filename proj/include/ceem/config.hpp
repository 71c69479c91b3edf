#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ceem/ceem.hpp"
#include "ceem/particle_em.hpp"

namespace ceem {

struct ModelSection {
  std::string id;  // lorenz | coupled_lorenz | lti
  Index num_attractors = 1;
  Index obs_rows = 0;  // 0: 3K - 2, or 2 for a single attractor
  double h_scale = 0.1;
  double dt = 0.04;
  // Linear model matrices (lti only).
  std::optional<Matrix> A, B, C, D;
  std::vector<std::pair<Index, Index>> free_entries;
  std::optional<Vector> theta_true;
  std::optional<Vector> theta_init;
  /// theta_init = theta_true * Uniform(1 - f, 1 + f) per coordinate.
  double init_fraction = 0.1;
};

struct DataSection {
  Index T = 128;
  Index num_trajectories = 1;
  double sigma_w = 0.0;
  double sigma_v = 0.01;
  std::uint64_t seed = 0;
  double input_std = 1.0;
  /// Initial-state distribution for linear models (defaults: zero mean, unit std).
  std::optional<Vector> x0_mean, x0_std;
  /// Existing dataset directory; when set, fit/evaluate read it instead of simulating.
  std::optional<std::string> path;
};

/// Noise std-devs assumed by the fitters; unset entries fall back to the data section.
struct FitNoiseSection {
  std::optional<double> sigma_w, sigma_v;
};

struct EvalSection {
  Index eps_samples = 1024;
  Index drop_first = 25;
  bool eps = true;
  bool rmse = true;
  Index test_trajectories = 0;
  std::uint64_t test_seed = 1;
};

struct OutputSection {
  std::string directory = "out";
  std::string dataset = "data";
  std::string fit = "fit";
  std::string metrics = "metrics";
};

struct ExperimentConfig {
  ModelSection model;
  DataSection data;
  FitNoiseSection fit_noise;
  CeemConfig ceem;
  PemConfig pem;
  EvalSection eval;
  OutputSection output;
  /// Center the epoch-one observation lift on the initial-state mean.
  bool center_lift = true;
};

/// Parses YAML text. Unknown sections or keys, missing required keys and
/// malformed values raise ConfigError with "source:line:column" context.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
/// Emits every setting, including defaults; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);

/// Model, truth and data assembled from a configuration.
struct Experiment {
  ModelPtr model;
  std::optional<Vector> theta_true;
  Vector theta_init;
  InitialConditionSpec x0;
  GaussianNoiseSpec data_noise;
  GaussianNoiseSpec fit_noise;
  TrajectoryDataset data;
};

/// Builds the model and either simulates the dataset or reads data.path.
Experiment build_experiment(const ExperimentConfig& config);

/// Fresh trajectories from the same model and structure with another seed.
TrajectoryDataset simulate_test_set(const ExperimentConfig& config, const Experiment& experiment,
                                    Index count, std::uint64_t seed);

/// CE-EM settings with the lift center resolved for this experiment.
CeemConfig resolved_ceem(const ExperimentConfig& config, const Experiment& experiment);
/// Particle-EM settings with the initial-state distribution and learner filled in.
PemConfig resolved_pem(const ExperimentConfig& config, const Experiment& experiment);

}  // namespace ceem
