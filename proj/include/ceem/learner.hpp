#pragma once

#include <optional>
#include <span>
#include <string>

#include "ceem/model.hpp"
#include "ceem/noise.hpp"

namespace ceem {

enum class LearnerStrategy { automatic, nelder_mead, first_order, quasi_second_order };

LearnerStrategy parse_strategy(const std::string& name);
std::string to_string(LearnerStrategy s);

/// Gaussian prior log p(theta) with diagonal covariance (std-devs).
struct ParamPrior {
  Vector mean;
  Vector stddev;
};

struct LearnerOptions {
  double rho_theta = 0.0;
  LearnerStrategy strategy = LearnerStrategy::automatic;
  std::optional<ParamPrior> prior;

  // Nelder-Mead.
  int nm_max_iterations = 400;
  double nm_relative_scale = 0.05;
  double nm_min_scale = 1e-4;
  double nm_tolerance = 1e-10;

  // Adaptive-moment gradient ascent.
  int adam_iterations = 100;
  double adam_step = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  // Limited-memory quasi-Newton.
  int lbfgs_max_iterations = 100;
  int lbfgs_history = 10;
  double lbfgs_gradient_tolerance = 1e-8;

  void validate() const;
  /// Strategy actually used for q parameters (automatic: Nelder-Mead when q <= 8).
  LearnerStrategy resolve(Index q) const;
};

/// Fixed states of one trajectory with its observations and a weight in the
/// learning objective (1 for CE-EM; SAEM buffer weight / N_s for particle EM).
struct StateTerm {
  const Matrix* x = nullptr;
  const Matrix* y = nullptr;
  const Matrix* u = nullptr;
  double weight = 1.0;
};

struct LearnResult {
  Vector theta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct ObjectiveGradient {
  double value = 0.0;
  Vector gradient;
  bool approximate = false;
};

/// Regularized learning objective
///   sum_i w_i J(x_i, theta) - rho_theta |theta - theta_prev|^2 + log p(theta).
double learning_objective(const SystemModel& model, const GaussianNoiseSpec& noise,
                          std::span<const StateTerm> terms, const Vector& theta,
                          const Vector& theta_prev, const LearnerOptions& options);

ObjectiveGradient objective_and_gradient(const SystemModel& model, const GaussianNoiseSpec& noise,
                                         std::span<const StateTerm> terms, const Vector& theta,
                                         const Vector& theta_prev, const LearnerOptions& options);

/// Locally maximizes the regularized objective starting from theta_prev.
/// The returned objective is never below its value at theta_prev.
LearnResult learn(const SystemModel& model, const GaussianNoiseSpec& noise,
                  std::span<const StateTerm> terms, const Vector& theta_prev,
                  const LearnerOptions& options);

}  // namespace ceem
