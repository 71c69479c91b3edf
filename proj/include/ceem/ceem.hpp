#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ceem/learner.hpp"
#include "ceem/simulate.hpp"
#include "ceem/smoother.hpp"

namespace ceem {

enum class StateInit { observation_lift, zeros };

/// Ground truth used to log the dynamics error per epoch.
struct TruthInfo {
  Vector theta_true;
  InitialConditionSpec x0_dist;
  Index num_samples = 1024;
  std::uint64_t seed = 0;
};

struct CeemConfig {
  double rho_x = 0.5;
  double rho_theta = 0.5;
  /// Stopping threshold on the epoch-over-epoch change of J. Unset means
  /// 1e-6 times the total number of scalar observations.
  std::optional<double> tol;
  int max_epochs = 100;
  StateInit init = StateInit::observation_lift;
  /// Point the observation lift is centered on (zero when unset).
  std::optional<Vector> lift_center;
  /// Every second pass, extrapolate along the last two passes and keep the
  /// result only if it increases J. Each attempt counts as an epoch.
  bool accelerate = false;
  SmootherOptions smoother;
  LearnerOptions learner;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double J = 0.0;
  std::optional<double> eps;
  double wall_seconds = 0.0;
  Vector theta;
};

enum class Termination { tolerance, max_epochs };
std::string to_string(Termination t);

struct FitReport {
  std::string algorithm;
  Vector initial_theta;
  double initial_J = 0.0;
  std::optional<double> initial_eps;
  std::vector<EpochRecord> epochs;
  Vector theta;
  std::vector<Matrix> states;
  Termination termination = Termination::max_epochs;
  std::vector<std::string> param_names;
};

/// Total joint objective over a batch (sum over trajectories).
double batch_objective(const SystemModel& model, const Vector& theta,
                       const GaussianNoiseSpec& noise, const TrajectoryDataset& data,
                       const std::vector<Matrix>& states,
                       const std::optional<StatePrior>& prior = std::nullopt);

/// Block coordinate ascent: smooth every trajectory with theta fixed, then
/// learn theta with the states fixed, until J improves by no more than tol.
/// `warm_start`, when given, replaces the epoch-one initialization.
FitReport ceem_fit(const TrajectoryDataset& data, const SystemModel& model,
                   const Vector& theta_init, const GaussianNoiseSpec& noise,
                   const CeemConfig& config,
                   const std::optional<std::vector<Matrix>>& warm_start = std::nullopt,
                   const std::optional<TruthInfo>& truth = std::nullopt);

/// `history.csv` (epoch, J, eps, wall_s, theta_0..theta_{q-1}; epoch 0 is
/// the initial point) and `params.json` with the final parameters.
void write_fit_report(const FitReport& report, const std::filesystem::path& directory);

/// Reads the `theta` list of a params.json file.
Vector read_params(const std::filesystem::path& path);

}  // namespace ceem
