#pragma once

#include <optional>
#include <vector>

#include <Eigen/Sparse>

#include "ceem/model.hpp"
#include "ceem/noise.hpp"

namespace ceem {

/// Gaussian prior on the first state, diagonal covariance given as std-devs.
/// Absent means the improper flat prior (term dropped from J).
struct StatePrior {
  Vector mean;
  Vector stddev;
};

/// J(x, theta) = log p(x_1) + sum_t log p_v(y_t - g(x_t)) + sum_t log p_w(x_{t+1} - f(x_t)).
struct JointObjectiveTerms {
  double obs_loglik = 0.0;
  double dyn_loglik = 0.0;
  double prior_loglik = 0.0;
  double total = 0.0;
};

/// One trajectory's data as seen by the smoother and learner.
struct SequenceData {
  const Matrix* y = nullptr;  // m x T
  const Matrix* u = nullptr;  // p x T
};

JointObjectiveTerms joint_objective(const SystemModel& model, const Vector& theta,
                                    const GaussianNoiseSpec& noise, const Matrix& y,
                                    const Matrix& u, const Matrix& x,
                                    const std::optional<StatePrior>& prior = std::nullopt);

/// Weighted residual vector r and its Jacobian with respect to vec(x)
/// (column-major, so state t occupies rows [t n, (t+1) n) of the unknowns).
///
/// Residual ordering per time step t: observation block (m), dynamics block
/// (n, absent at t = T-1), trust-region block (n, absent when rho_x = 0),
/// then the prior block (n) at the end when a prior is given. With this
/// weighting -0.5 |r|^2 + constant = J - rho_x |x - x_prev|^2.
struct ResidualStack {
  Vector residual;
  Eigen::SparseMatrix<double> jacobian;
  double constant = 0.0;
};

ResidualStack residual_stack(const SystemModel& model, const Vector& theta,
                             const GaussianNoiseSpec& noise, const Matrix& y, const Matrix& u,
                             const Matrix& x, const Matrix& x_prev, double rho_x,
                             const std::optional<StatePrior>& prior = std::nullopt);

struct SmootherOptions {
  double rho_x = 0.0;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;  // max-norm of the penalized gradient
  double step_tolerance = 1e-8;      // max-norm of an accepted step
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double lambda_max = 1e16;
  std::optional<StatePrior> prior;

  void validate() const;
};

struct SmootherIteration {
  double objective;  // penalized objective after the iteration
  double lambda;
  bool accepted;
};

struct SmoothResult {
  Matrix x;
  /// Penalized objective J(x, theta) - rho_x |x - x_init|^2 at the result.
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<SmootherIteration> history;
};

/// Maximizes J(x, theta) - rho_x |x - x_init|^2 over x by Levenberg-Marquardt
/// on the residual stack. The normal equations are block tridiagonal and are
/// solved by block Cholesky in O(n^3 T).
SmoothResult smooth(const SystemModel& model, const Vector& theta, const GaussianNoiseSpec& noise,
                    const Matrix& y, const Matrix& u, const Matrix& x_init,
                    const SmootherOptions& options = {});

/// Solves the symmetric positive definite block-tridiagonal system with
/// diagonal blocks `diag[t]` and super-diagonal blocks `upper[t]` (block
/// (t, t+1)); the right-hand side is overwritten with the solution.
/// Returns false when a pivot block is not positive definite.
bool solve_block_tridiagonal(std::vector<Matrix> diag, const std::vector<Matrix>& upper,
                             Matrix& rhs);

/// Epoch-one initialization: x_t = c + C^+ (y_t - C c) when the observation
/// is linear in the state, c otherwise. The center c defaults to zero.
Matrix initial_states(const SystemModel& model, const Matrix& y,
                      const std::optional<Vector>& center = std::nullopt);

}  // namespace ceem
