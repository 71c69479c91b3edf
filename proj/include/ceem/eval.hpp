#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "ceem/lti.hpp"
#include "ceem/noise.hpp"
#include "ceem/rng.hpp"
#include "ceem/simulate.hpp"

namespace ceem {

/// x' = A x + B u + w, y = C x + D u + v with w ~ N(0, Q), v ~ N(0, R).
struct LinearGaussianSystem {
  Matrix A, B, C, D, Q, R;

  static LinearGaussianSystem from_model(const LtiModel& model, const Vector& theta,
                                         const GaussianNoiseSpec& noise);
};

/// Gaussian belief over the first state, before y_1 is seen.
struct GaussianBelief {
  Vector mean;
  Matrix cov;
};

struct KalmanOutput {
  Matrix predicted_mean;             // n x T, x_{t|t-1}
  std::vector<Matrix> predicted_cov;
  Matrix filtered_mean;              // n x T, x_{t|t}
  std::vector<Matrix> filtered_cov;
  Matrix predicted_obs;              // m x T, E[y_t | y_{1:t-1}]
  double log_likelihood = 0.0;
};

struct RtsOutput {
  Matrix mean;                       // n x T
  std::vector<Matrix> cov;
  std::vector<Matrix> lag_one_cov;   // Cov(x_{t+1}, x_t | y_{1:T}), T-1 entries
};

KalmanOutput kalman_filter(const LinearGaussianSystem& sys, const Matrix& y, const Matrix& u,
                           const GaussianBelief& init);
RtsOutput rts_smoother(const LinearGaussianSystem& sys, const Matrix& y, const Matrix& u,
                       const GaussianBelief& init);

/// EKF used to score one-step observation predictions. Unset matrices
/// default to identity and an unset x0 to zero.
struct EkfSettings {
  std::optional<Matrix> Q, R, Sigma0;
  std::optional<Vector> x0;
  Index drop_first = 25;

  /// Fills every default for an n-state, m-output model and checks SPD.
  EkfSettings resolved(Index n, Index m) const;
};

struct EkfOutput {
  Matrix predicted_obs;  // m x T, g(x_{t|t-1})
  Matrix filtered_mean;  // n x T
  double rmse = 0.0;
};

/// Predict-then-correct EKF in Joseph form; the predicted observation at
/// each step is recorded before the correction with y_t.
EkfOutput ekf_evaluate(const SystemModel& model, const Vector& theta, const Matrix& y,
                       const Matrix& u, const EkfSettings& settings = {});

/// sqrt(mean over kept steps of |pred_t - meas_t|^2), skipping the first
/// `drop_first` columns.
double rmse(const Matrix& predicted, const Matrix& measured, Index drop_first = 0);

struct DynamicsError {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimate of E_{x ~ p(x0)} |f_theta(x) - f_true(x)|_2.
DynamicsError dynamics_error(const SystemModel& model, const Vector& theta,
                             const Vector& theta_true, const InitialConditionSpec& x0_dist,
                             Index num_samples, Rng& rng);

struct MetricReport {
  std::vector<double> rmse;  // per trajectory
  double mean = 0.0;
  double stddev = 0.0;
  std::optional<DynamicsError> dynamics;
  EkfSettings settings;

  void aggregate();
};

/// EKF prediction RMSE for every trajectory of a dataset.
MetricReport evaluate_dataset(const SystemModel& model, const Vector& theta,
                              const TrajectoryDataset& data, const EkfSettings& settings = {});

/// `trajectory_id,rmse` rows, then a `# aggregate mean=.. std=..` line. The
/// header comments echo the EKF settings.
void write_metric_report(const MetricReport& report, const std::filesystem::path& path);

}  // namespace ceem
