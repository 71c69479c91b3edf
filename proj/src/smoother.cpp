#include "ceem/smoother.hpp"

#include <cmath>
#include <limits>

namespace ceem {

namespace {

void check_sequence(const SystemModel& model, const Vector& theta, const Matrix& y,
                    const Matrix& u, const Matrix& x) {
  require_dim(theta.size(), model.param_dim(), "parameters");
  require_dim(y.rows(), model.obs_dim(), "observations");
  require_dim(u.rows(), model.input_dim(), "inputs");
  require_dim(x.rows(), model.state_dim(), "states");
  require_dim(u.cols(), y.cols(), "input sequence length");
  require_dim(x.cols(), y.cols(), "state sequence length");
  if (y.cols() < 1) throw ContractError("empty sequence");
}

void check_prior(const std::optional<StatePrior>& prior, Index n) {
  if (!prior) return;
  require_dim(prior->mean.size(), n, "prior mean");
  require_dim(prior->stddev.size(), n, "prior std-devs");
  if (!(prior->stddev.array() > 0.0).all()) throw ConfigError("prior std-devs must be positive");
}

// Residual-independent part of J for a sequence of length T.
double log_normalizer(const GaussianNoiseSpec& noise, Index T,
                      const std::optional<StatePrior>& prior) {
  double c = static_cast<double>(T) * diag_gaussian_log_normalizer(noise.sigma_v) +
             static_cast<double>(T - 1) * diag_gaussian_log_normalizer(noise.sigma_w);
  if (prior) c += diag_gaussian_log_normalizer(prior->stddev);
  return c;
}

// Per-step linearization of the weighted residuals.
struct StepBlocks {
  Vector r_obs;        // m
  Matrix j_obs;        // m x n, wrt x_t
  Vector r_dyn;        // n (empty at the last step)
  Matrix j_dyn_self;   // n x n, wrt x_t; wrt x_{t+1} it is diag(1/sigma_w)
};

class Problem {
 public:
  Problem(const SystemModel& model, const Vector& theta, const GaussianNoiseSpec& noise,
          const Matrix& y, const Matrix& u, const Matrix& x_prev, double rho_x,
          const std::optional<StatePrior>& prior)
      : model_(model), theta_(theta), y_(y), u_(u), x_prev_(x_prev), rho_x_(rho_x),
        prior_(prior), inv_w_(noise.sigma_w.cwiseInverse()), inv_v_(noise.sigma_v.cwiseInverse()),
        constant_(log_normalizer(noise, y.cols(), prior)) {}

  Index T() const { return y_.cols(); }
  Index n() const { return model_.state_dim(); }
  double constant() const { return constant_; }

  // 0.5 |r|^2; +inf when the model produces nonfinite values.
  double cost(const Matrix& x) const {
    double acc = 0.0;
    for (Index t = 0; t < T(); ++t) {
      const Vector xt = x.col(t);
      const Vector ut = u_.col(t);
      acc += (y_.col(t) - model_.observe(xt, ut, t, theta_)).cwiseProduct(inv_v_).squaredNorm();
      if (t + 1 < T()) {
        acc += (x.col(t + 1) - model_.step(xt, ut, t, theta_)).cwiseProduct(inv_w_).squaredNorm();
      }
      if (rho_x_ > 0.0) acc += 2.0 * rho_x_ * (xt - x_prev_.col(t)).squaredNorm();
    }
    if (prior_) acc += (x.col(0) - prior_->mean).cwiseQuotient(prior_->stddev).squaredNorm();
    acc *= 0.5;
    return std::isfinite(acc) ? acc : std::numeric_limits<double>::infinity();
  }

  StepBlocks linearize(const Matrix& x, Index t) const {
    StepBlocks b;
    const Vector xt = x.col(t);
    const Vector ut = u_.col(t);
    b.r_obs = (y_.col(t) - model_.observe(xt, ut, t, theta_)).cwiseProduct(inv_v_);
    b.j_obs = -(inv_v_.asDiagonal() * model_.observe_jacobians(xt, ut, t, theta_).wrt_state);
    if (t + 1 < T()) {
      b.r_dyn = (x.col(t + 1) - model_.step(xt, ut, t, theta_)).cwiseProduct(inv_w_);
      b.j_dyn_self = -(inv_w_.asDiagonal() * model_.step_jacobians(xt, ut, t, theta_).wrt_state);
    }
    if (!b.r_obs.allFinite() || !b.j_obs.allFinite() || !b.r_dyn.allFinite() ||
        !b.j_dyn_self.allFinite()) {
      throw NumericalError("nonfinite model output at t=" + std::to_string(t), t);
    }
    return b;
  }

  // Gauss-Newton normal equations: blocks of J^T J and the gradient J^T r.
  void normal_equations(const Matrix& x, std::vector<Matrix>& diag, std::vector<Matrix>& upper,
                        Matrix& grad) const {
    const Index N = n();
    diag.assign(static_cast<size_t>(T()), Matrix());
    upper.assign(static_cast<size_t>(std::max<Index>(T() - 1, 0)), Matrix());
    grad.setZero(N, T());
    const Vector w2 = inv_w_.cwiseAbs2();
    const double tr = std::sqrt(2.0 * rho_x_);
    for (Index t = 0; t < T(); ++t) {
      const StepBlocks b = linearize(x, t);
      Matrix D = b.j_obs.transpose() * b.j_obs;
      grad.col(t) += b.j_obs.transpose() * b.r_obs;
      if (t + 1 < T()) {
        D.noalias() += b.j_dyn_self.transpose() * b.j_dyn_self;
        grad.col(t) += b.j_dyn_self.transpose() * b.r_dyn;
        grad.col(t + 1) += b.r_dyn.cwiseProduct(inv_w_);
        upper[static_cast<size_t>(t)] = b.j_dyn_self.transpose() * inv_w_.asDiagonal();
      }
      if (t > 0) D.diagonal() += w2;
      if (rho_x_ > 0.0) {
        D.diagonal().array() += 2.0 * rho_x_;
        grad.col(t) += tr * tr * (x.col(t) - x_prev_.col(t));
      }
      if (t == 0 && prior_) {
        D.diagonal() += prior_->stddev.cwiseAbs2().cwiseInverse();
        grad.col(0) += (x.col(0) - prior_->mean).cwiseQuotient(prior_->stddev.cwiseAbs2());
      }
      diag[static_cast<size_t>(t)] = std::move(D);
    }
  }

 private:
  const SystemModel& model_;
  const Vector& theta_;
  const Matrix& y_;
  const Matrix& u_;
  const Matrix& x_prev_;
  double rho_x_;
  const std::optional<StatePrior>& prior_;
  Vector inv_w_, inv_v_;
  double constant_;
};

}  // namespace

void SmootherOptions::validate() const {
  if (!(rho_x >= 0.0)) throw ConfigError("smoother: rho_x must be nonnegative");
  if (max_iterations < 1) throw ConfigError("smoother: max_iterations must be at least 1");
  if (!(gradient_tolerance > 0.0) || !(step_tolerance > 0.0)) {
    throw ConfigError("smoother: tolerances must be positive");
  }
  if (!(lambda_up > 1.0) || !(lambda_down > 1.0)) {
    throw ConfigError("smoother: damping factors must exceed 1");
  }
  if (!(initial_lambda > 0.0)) throw ConfigError("smoother: initial lambda must be positive");
}

JointObjectiveTerms joint_objective(const SystemModel& model, const Vector& theta,
                                    const GaussianNoiseSpec& noise, const Matrix& y,
                                    const Matrix& u, const Matrix& x,
                                    const std::optional<StatePrior>& prior) {
  check_sequence(model, theta, y, u, x);
  check_prior(prior, model.state_dim());
  noise.validate_for_density();
  require_dim(noise.sigma_w.size(), model.state_dim(), "sigma_w");
  require_dim(noise.sigma_v.size(), model.obs_dim(), "sigma_v");

  JointObjectiveTerms terms;
  const Index T = y.cols();
  for (Index t = 0; t < T; ++t) {
    const Vector xt = x.col(t);
    const Vector ut = u.col(t);
    const Vector gx = model.observe(xt, ut, t, theta);
    if (!gx.allFinite()) throw NumericalError("nonfinite observation at t=" + std::to_string(t), t);
    terms.obs_loglik += diag_gaussian_logpdf(y.col(t) - gx, noise.sigma_v);
    if (t + 1 < T) {
      const Vector fx = model.step(xt, ut, t, theta);
      if (!fx.allFinite()) throw NumericalError("nonfinite dynamics at t=" + std::to_string(t), t);
      terms.dyn_loglik += diag_gaussian_logpdf(x.col(t + 1) - fx, noise.sigma_w);
    }
  }
  if (prior) terms.prior_loglik = diag_gaussian_logpdf(x.col(0) - prior->mean, prior->stddev);
  terms.total = terms.obs_loglik + terms.dyn_loglik + terms.prior_loglik;
  return terms;
}

ResidualStack residual_stack(const SystemModel& model, const Vector& theta,
                             const GaussianNoiseSpec& noise, const Matrix& y, const Matrix& u,
                             const Matrix& x, const Matrix& x_prev, double rho_x,
                             const std::optional<StatePrior>& prior) {
  check_sequence(model, theta, y, u, x);
  check_prior(prior, model.state_dim());
  noise.validate_for_density();
  if (x_prev.rows() != x.rows() || x_prev.cols() != x.cols()) {
    throw ContractError("residual_stack: x_prev shape differs from x");
  }
  if (!(rho_x >= 0.0)) throw ConfigError("rho_x must be nonnegative");

  const Index n = model.state_dim(), m = model.obs_dim(), T = y.cols();
  const Problem problem(model, theta, noise, y, u, x_prev, rho_x, prior);
  const Index per_step_tr = rho_x > 0.0 ? n : 0;
  const Index rows = T * m + (T - 1) * n + T * per_step_tr + (prior ? n : 0);

  ResidualStack out;
  out.residual.resize(rows);
  out.constant = problem.constant();
  std::vector<Eigen::Triplet<double>> trips;
  const Vector inv_w = noise.sigma_w.cwiseInverse();
  const double tr = std::sqrt(2.0 * rho_x);

  Index row = 0;
  for (Index t = 0; t < T; ++t) {
    const StepBlocks b = problem.linearize(x, t);
    out.residual.segment(row, m) = b.r_obs;
    for (Index i = 0; i < m; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (b.j_obs(i, j) != 0.0) trips.emplace_back(row + i, t * n + j, b.j_obs(i, j));
      }
    }
    row += m;
    if (t + 1 < T) {
      out.residual.segment(row, n) = b.r_dyn;
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          if (b.j_dyn_self(i, j) != 0.0) trips.emplace_back(row + i, t * n + j, b.j_dyn_self(i, j));
        }
        trips.emplace_back(row + i, (t + 1) * n + i, inv_w[i]);
      }
      row += n;
    }
    if (per_step_tr > 0) {
      out.residual.segment(row, n) = tr * (x.col(t) - x_prev.col(t));
      for (Index i = 0; i < n; ++i) trips.emplace_back(row + i, t * n + i, tr);
      row += n;
    }
  }
  if (prior) {
    out.residual.segment(row, n) = (x.col(0) - prior->mean).cwiseQuotient(prior->stddev);
    for (Index i = 0; i < n; ++i) trips.emplace_back(row + i, i, 1.0 / prior->stddev[i]);
    row += n;
  }
  out.jacobian.resize(rows, T * n);
  out.jacobian.setFromTriplets(trips.begin(), trips.end());
  return out;
}

bool solve_block_tridiagonal(std::vector<Matrix> diag, const std::vector<Matrix>& upper,
                             Matrix& rhs) {
  const size_t T = diag.size();
  std::vector<Eigen::LLT<Matrix>> factors(T);
  for (size_t t = 0; t < T; ++t) {
    if (t > 0) {
      // Schur complement of the previous pivot.
      const Matrix& U = upper[t - 1];
      const Matrix solved = factors[t - 1].solve(U);
      diag[t].noalias() -= U.transpose() * solved;
      rhs.col(static_cast<Index>(t)) -=
          solved.transpose() * rhs.col(static_cast<Index>(t - 1));
    }
    factors[t].compute(diag[t]);
    if (factors[t].info() != Eigen::Success) return false;
  }
  for (size_t k = T; k-- > 0;) {
    Vector b = rhs.col(static_cast<Index>(k));
    if (k + 1 < T) b.noalias() -= upper[k] * rhs.col(static_cast<Index>(k + 1));
    rhs.col(static_cast<Index>(k)) = factors[k].solve(b);
  }
  return rhs.allFinite();
}

SmoothResult smooth(const SystemModel& model, const Vector& theta, const GaussianNoiseSpec& noise,
                    const Matrix& y, const Matrix& u, const Matrix& x_init,
                    const SmootherOptions& options) {
  options.validate();
  check_sequence(model, theta, y, u, x_init);
  check_prior(options.prior, model.state_dim());
  noise.validate_for_density();
  require_dim(noise.sigma_w.size(), model.state_dim(), "sigma_w");
  require_dim(noise.sigma_v.size(), model.obs_dim(), "sigma_v");
  if (!x_init.allFinite()) throw ContractError("smooth: initial states must be finite");

  const Problem problem(model, theta, noise, y, u, x_init, options.rho_x, options.prior);
  SmoothResult result;
  result.x = x_init;
  double cost = problem.cost(result.x);
  if (!std::isfinite(cost)) throw NumericalError("smooth: objective is nonfinite at x_init");

  double lambda = options.initial_lambda;
  std::vector<Matrix> diag, upper;
  Matrix grad;
  bool relinearize = true;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (relinearize) {
      problem.normal_equations(result.x, diag, upper, grad);
      relinearize = false;
      if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
        result.converged = true;
        result.iterations = iter;
        break;
      }
    }
    std::vector<Matrix> damped = diag;
    for (auto& D : damped) D.diagonal().array() += lambda;
    Matrix step = -grad;
    if (!solve_block_tridiagonal(std::move(damped), upper, step)) {
      lambda *= options.lambda_up;
      if (lambda > options.lambda_max) {
        throw NumericalError("smooth: normal equations stay singular at the damping cap");
      }
      result.history.push_back({-cost + problem.constant(), lambda, false});
      continue;
    }
    const Matrix candidate = result.x + step;
    const double new_cost = problem.cost(candidate);
    const double step_norm = step.cwiseAbs().maxCoeff();
    if (new_cost < cost) {
      result.x = candidate;
      cost = new_cost;
      lambda = std::max(lambda / options.lambda_down, 1e-15);
      relinearize = true;
      result.history.push_back({-cost + problem.constant(), lambda, true});
      if (step_norm < options.step_tolerance) {
        result.converged = true;
        break;
      }
    } else {
      lambda *= options.lambda_up;
      result.history.push_back({-cost + problem.constant(), lambda, false});
      // No decrease even for a negligible step: x is optimal to working precision.
      if (step_norm < options.step_tolerance || lambda > options.lambda_max) {
        result.converged = step_norm < options.step_tolerance;
        break;
      }
    }
  }
  result.objective = -cost + problem.constant();
  return result;
}

Matrix initial_states(const SystemModel& model, const Matrix& y,
                      const std::optional<Vector>& center) {
  require_dim(y.rows(), model.obs_dim(), "observations");
  const Vector c = center.value_or(Vector::Zero(model.state_dim()));
  require_dim(c.size(), model.state_dim(), "lift center");
  const auto C = model.linear_observation();
  if (!C) return c.replicate(1, y.cols());
  const Matrix pinv = C->completeOrthogonalDecomposition().pseudoInverse();
  return (pinv * (y.colwise() - (*C) * c)).colwise() + c;
}

}  // namespace ceem
