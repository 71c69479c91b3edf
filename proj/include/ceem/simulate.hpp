#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ceem/model.hpp"
#include "ceem/noise.hpp"
#include "ceem/rng.hpp"

namespace ceem {

/// One simulated or recorded sequence. Columns are time steps.
struct Trajectory {
  Matrix y;                // m x T
  Matrix u;                // p x T
  std::optional<Matrix> x; // n x T, ground truth when known
  std::uint64_t seed = 0;

  Index length() const { return y.cols(); }
};

struct DatasetManifest {
  std::string model_id;
  Index n = 0, m = 0, p = 0, T = 0;
  double dt = 1.0;
  Index num_trajectories = 0;
  std::uint64_t seed = 0;
  std::optional<Vector> theta_true;
  Vector sigma_w, sigma_v;
  /// Known observation matrix for linearly observed models.
  std::optional<Matrix> observation_matrix;
  /// Free-form generation settings (echoed from the experiment config).
  std::vector<std::pair<std::string, std::string>> generation;
};

struct TrajectoryDataset {
  DatasetManifest manifest;
  std::vector<Trajectory> trajectories;

  /// Throws ContractError when trajectories disagree with the manifest.
  void validate() const;
};

/// Independent Gaussian draws per coordinate.
struct InitialConditionSpec {
  Vector mean, stddev;

  /// x1, x2 ~ N(-6, 2.5^2), x3 ~ N(24, 2.5^2) for each attractor.
  static InitialConditionSpec lorenz(Index num_attractors);
};

Vector sample_initial_condition(const InitialConditionSpec& spec, Rng& rng);

/// Rolls out x_{t+1} = f(x_t) + w_t, y_t = g(x_t) + v_t for t = 0..T-1.
/// Noise std-devs may be zero. Noise comes from the stream (seed, 0), so the
/// result depends only on the arguments.
Trajectory generate_trajectory(const SystemModel& model, const Vector& theta, const Vector& x0,
                               const Matrix& inputs, Index T, const GaussianNoiseSpec& noise,
                               std::uint64_t seed);

/// Writes `manifest.json` and `trajectory_<i>.csv` for each trajectory.
void write_dataset(const TrajectoryDataset& dataset, const std::filesystem::path& directory);
TrajectoryDataset read_dataset(const std::filesystem::path& directory);

/// Per-trajectory seed derived from a dataset seed; stable across runs.
std::uint64_t trajectory_seed(std::uint64_t dataset_seed, Index index);

}  // namespace ceem
