#include "ceem/learner.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>

namespace ceem {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_terms(const SystemModel& model, std::span<const StateTerm> terms) {
  for (const auto& term : terms) {
    if (!term.x || !term.y || !term.u) throw ContractError("learn: null state term");
    require_dim(term.x->rows(), model.state_dim(), "states");
    require_dim(term.y->rows(), model.obs_dim(), "observations");
    require_dim(term.u->rows(), model.input_dim(), "inputs");
    require_dim(term.y->cols(), term.x->cols(), "sequence length");
    require_dim(term.u->cols(), term.x->cols(), "sequence length");
    if (!term.x->allFinite()) throw ContractError("learn: fixed states must be finite");
  }
}

double regularizer(const Vector& theta, const Vector& theta_prev, const LearnerOptions& opt) {
  double v = -opt.rho_theta * (theta - theta_prev).squaredNorm();
  if (opt.prior) v += diag_gaussian_logpdf(theta - opt.prior->mean, opt.prior->stddev);
  return v;
}

}  // namespace

LearnerStrategy parse_strategy(const std::string& name) {
  if (name == "auto" || name == "automatic") return LearnerStrategy::automatic;
  if (name == "nelder-mead" || name == "nelder_mead") return LearnerStrategy::nelder_mead;
  if (name == "first-order" || name == "adam") return LearnerStrategy::first_order;
  if (name == "quasi-second-order" || name == "lbfgs") return LearnerStrategy::quasi_second_order;
  throw ConfigError("unknown learner strategy '" + name + "'");
}

std::string to_string(LearnerStrategy s) {
  switch (s) {
    case LearnerStrategy::automatic: return "auto";
    case LearnerStrategy::nelder_mead: return "nelder-mead";
    case LearnerStrategy::first_order: return "first-order";
    case LearnerStrategy::quasi_second_order: return "quasi-second-order";
  }
  return "auto";
}

void LearnerOptions::validate() const {
  if (!(rho_theta >= 0.0)) throw ConfigError("learner: rho_theta must be nonnegative");
  if (nm_max_iterations < 1 || adam_iterations < 1 || lbfgs_max_iterations < 1) {
    throw ConfigError("learner: iteration budgets must be at least 1");
  }
  if (lbfgs_history < 1) throw ConfigError("learner: lbfgs history must be at least 1");
  if (!(adam_step > 0.0)) throw ConfigError("learner: step size must be positive");
  if (prior && !(prior->stddev.array() > 0.0).all()) {
    throw ConfigError("learner: prior std-devs must be positive");
  }
}

LearnerStrategy LearnerOptions::resolve(Index q) const {
  if (strategy != LearnerStrategy::automatic) return strategy;
  return q <= 8 ? LearnerStrategy::nelder_mead : LearnerStrategy::quasi_second_order;
}

double learning_objective(const SystemModel& model, const GaussianNoiseSpec& noise,
                          std::span<const StateTerm> terms, const Vector& theta,
                          const Vector& theta_prev, const LearnerOptions& options) {
  double total = 0.0;
  const double norm_w = diag_gaussian_log_normalizer(noise.sigma_w);
  const double norm_v = diag_gaussian_log_normalizer(noise.sigma_v);
  const Vector inv_w = noise.sigma_w.cwiseInverse();
  const Vector inv_v = noise.sigma_v.cwiseInverse();
  for (const auto& term : terms) {
    const Matrix& x = *term.x;
    const Index T = x.cols();
    double acc = static_cast<double>(T) * norm_v + static_cast<double>(T - 1) * norm_w;
    for (Index t = 0; t < T; ++t) {
      const Vector xt = x.col(t);
      const Vector ut = term.u->col(t);
      acc -= 0.5 * (term.y->col(t) - model.observe(xt, ut, t, theta)).cwiseProduct(inv_v).squaredNorm();
      if (t + 1 < T) {
        acc -= 0.5 * (x.col(t + 1) - model.step(xt, ut, t, theta)).cwiseProduct(inv_w).squaredNorm();
      }
    }
    total += term.weight * acc;
  }
  total += regularizer(theta, theta_prev, options);
  return std::isfinite(total) ? total : kNegInf;
}

ObjectiveGradient objective_and_gradient(const SystemModel& model, const GaussianNoiseSpec& noise,
                                         std::span<const StateTerm> terms, const Vector& theta,
                                         const Vector& theta_prev, const LearnerOptions& options) {
  require_dim(theta.size(), model.param_dim(), "parameters");
  require_dim(theta_prev.size(), model.param_dim(), "previous parameters");
  noise.validate_for_density();
  check_terms(model, terms);

  ObjectiveGradient out;
  out.gradient = Vector::Zero(theta.size());
  const bool obs_depends_on_theta = !model.linear_observation().has_value();
  const double norm_w = diag_gaussian_log_normalizer(noise.sigma_w);
  const double norm_v = diag_gaussian_log_normalizer(noise.sigma_v);
  const Vector inv_w2 = noise.sigma_w.cwiseAbs2().cwiseInverse();
  const Vector inv_v2 = noise.sigma_v.cwiseAbs2().cwiseInverse();
  for (const auto& term : terms) {
    const Matrix& x = *term.x;
    const Index T = x.cols();
    double acc = static_cast<double>(T) * norm_v + static_cast<double>(T - 1) * norm_w;
    Vector grad = Vector::Zero(theta.size());
    for (Index t = 0; t < T; ++t) {
      const Vector xt = x.col(t);
      const Vector ut = term.u->col(t);
      const Vector e = term.y->col(t) - model.observe(xt, ut, t, theta);
      acc -= 0.5 * e.dot(inv_v2.cwiseProduct(e));
      if (obs_depends_on_theta) {
        const Jacobians G = model.observe_jacobians(xt, ut, t, theta);
        grad.noalias() += G.wrt_params.transpose() * inv_v2.cwiseProduct(e);
        out.approximate |= G.approximate;
      }
      if (t + 1 < T) {
        const Vector r = x.col(t + 1) - model.step(xt, ut, t, theta);
        acc -= 0.5 * r.dot(inv_w2.cwiseProduct(r));
        const Jacobians F = model.step_jacobians(xt, ut, t, theta);
        grad.noalias() += F.wrt_params.transpose() * inv_w2.cwiseProduct(r);
        out.approximate |= F.approximate;
      }
    }
    out.value += term.weight * acc;
    out.gradient += term.weight * grad;
  }
  out.value += regularizer(theta, theta_prev, options);
  out.gradient -= 2.0 * options.rho_theta * (theta - theta_prev);
  if (options.prior) {
    out.gradient -= (theta - options.prior->mean).cwiseQuotient(options.prior->stddev.cwiseAbs2());
  }
  if (!std::isfinite(out.value) || !out.gradient.allFinite()) out.value = kNegInf;
  return out;
}

namespace {

using Objective = std::function<double(const Vector&)>;

LearnResult nelder_mead(const Objective& objective, const Vector& start,
                        const LearnerOptions& opt) {
  const Index q = start.size();
  // Minimize the negated objective; nonfinite values rank last.
  auto cost = [&](const Vector& p) {
    const double v = objective(p);
    return std::isfinite(v) ? -v : std::numeric_limits<double>::infinity();
  };
  std::vector<Vector> simplex(static_cast<size_t>(q + 1), start);
  std::vector<double> values(static_cast<size_t>(q + 1));
  for (Index i = 0; i < q; ++i) {
    simplex[static_cast<size_t>(i + 1)][i] +=
        std::max(opt.nm_relative_scale * std::abs(start[i]), opt.nm_min_scale);
  }
  for (size_t i = 0; i < simplex.size(); ++i) values[i] = cost(simplex[i]);

  std::vector<size_t> order(simplex.size());
  LearnResult result;
  for (int iter = 0; iter < opt.nm_max_iterations; ++iter) {
    result.iterations = iter + 1;
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] < values[b]; });
    {
      std::vector<Vector> s2;
      std::vector<double> v2;
      for (size_t i : order) {
        s2.push_back(simplex[i]);
        v2.push_back(values[i]);
      }
      simplex.swap(s2);
      values.swap(v2);
    }
    const double f_best = values.front(), f_worst = values.back();
    double x_spread = 0.0;
    for (size_t i = 1; i < simplex.size(); ++i) {
      x_spread = std::max(x_spread, (simplex[i] - simplex[0]).cwiseAbs().maxCoeff());
    }
    if (std::isfinite(f_worst) &&
        f_worst - f_best <= opt.nm_tolerance * (1.0 + std::abs(f_best)) &&
        x_spread <= 1e-8 * (1.0 + simplex[0].cwiseAbs().maxCoeff())) {
      result.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(q);
    for (Index i = 0; i < q; ++i) centroid += simplex[static_cast<size_t>(i)];
    centroid /= static_cast<double>(q);
    const Vector& worst = simplex.back();

    const Vector reflected = centroid + (centroid - worst);
    const double f_r = cost(reflected);
    if (f_r < values[static_cast<size_t>(q - 1)] && f_r >= f_best) {
      simplex.back() = reflected;
      values.back() = f_r;
      continue;
    }
    if (f_r < f_best) {
      const Vector expanded = centroid + 2.0 * (centroid - worst);
      const double f_e = cost(expanded);
      if (f_e < f_r) {
        simplex.back() = expanded;
        values.back() = f_e;
      } else {
        simplex.back() = reflected;
        values.back() = f_r;
      }
      continue;
    }
    if (f_r < f_worst) {
      const Vector outside = centroid + 0.5 * (reflected - centroid);
      const double f_c = cost(outside);
      if (f_c <= f_r) {
        simplex.back() = outside;
        values.back() = f_c;
        continue;
      }
    } else {
      const Vector inside = centroid + 0.5 * (worst - centroid);
      const double f_c = cost(inside);
      if (f_c < f_worst) {
        simplex.back() = inside;
        values.back() = f_c;
        continue;
      }
    }
    for (size_t i = 1; i < simplex.size(); ++i) {
      simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0]);
      values[i] = cost(simplex[i]);
    }
  }
  const auto best = static_cast<size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  result.theta = simplex[best];
  result.objective = -values[best];
  return result;
}

using GradObjective = std::function<ObjectiveGradient(const Vector&)>;

LearnResult adam(const GradObjective& fg, const Vector& start, const LearnerOptions& opt) {
  Vector theta = start;
  Vector m = Vector::Zero(start.size()), v = Vector::Zero(start.size());
  ObjectiveGradient cur = fg(theta);
  LearnResult best{theta, cur.value, 0, false};
  double step = opt.adam_step;
  for (int k = 1; k <= opt.adam_iterations; ++k) {
    best.iterations = k;
    m = opt.adam_beta1 * m + (1.0 - opt.adam_beta1) * cur.gradient;
    v = opt.adam_beta2 * v + (1.0 - opt.adam_beta2) * cur.gradient.cwiseAbs2();
    const Vector m_hat = m / (1.0 - std::pow(opt.adam_beta1, k));
    const Vector v_hat = v / (1.0 - std::pow(opt.adam_beta2, k));
    const Vector candidate =
        theta + step * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + opt.adam_epsilon).matrix());
    ObjectiveGradient next = fg(candidate);
    if (!std::isfinite(next.value)) {
      step *= 0.5;
      continue;
    }
    theta = candidate;
    cur = std::move(next);
    if (cur.value > best.objective) {
      best.theta = theta;
      best.objective = cur.value;
    }
    if (cur.gradient.cwiseAbs().maxCoeff() < opt.lbfgs_gradient_tolerance) {
      best.converged = true;
      break;
    }
  }
  return best;
}

LearnResult lbfgs(const GradObjective& fg, const Vector& start, const LearnerOptions& opt) {
  // Minimizes h = -objective.
  Vector theta = start;
  ObjectiveGradient cur = fg(theta);
  LearnResult result{theta, cur.value, 0, false};
  if (!std::isfinite(cur.value)) return result;
  std::deque<std::pair<Vector, Vector>> history;  // (s, y) pairs for h
  Vector g = -cur.gradient;
  for (int iter = 0; iter < opt.lbfgs_max_iterations; ++iter) {
    result.iterations = iter + 1;
    if (g.cwiseAbs().maxCoeff() < opt.lbfgs_gradient_tolerance) {
      result.converged = true;
      break;
    }
    // Two-loop recursion.
    Vector d = -g;
    std::vector<double> alpha(history.size());
    for (size_t i = history.size(); i-- > 0;) {
      const auto& [s, y] = history[i];
      alpha[i] = s.dot(d) / y.dot(s);
      d -= alpha[i] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      d *= s.dot(y) / y.dot(y);
    } else {
      d /= std::max(1.0, g.norm());
    }
    for (size_t i = 0; i < history.size(); ++i) {
      const auto& [s, y] = history[i];
      const double beta = y.dot(d) / y.dot(s);
      d += (alpha[i] - beta) * s;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      history.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    // Backtracking with the sufficient-increase (Armijo) condition.
    double step = 1.0;
    bool accepted = false;
    ObjectiveGradient next;
    Vector candidate;
    for (int ls = 0; ls < 50; ++ls) {
      candidate = theta + step * d;
      next = fg(candidate);
      if (std::isfinite(next.value) && next.value >= cur.value - 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(next.value > cur.value)) break;
    const Vector g_next = -next.gradient;
    const Vector s = candidate - theta;
    const Vector y = g_next - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      history.emplace_back(s, y);
      if (static_cast<int>(history.size()) > opt.lbfgs_history) history.pop_front();
    }
    theta = candidate;
    cur = std::move(next);
    g = g_next;
    result.theta = theta;
    result.objective = cur.value;
  }
  return result;
}

}  // namespace

LearnResult learn(const SystemModel& model, const GaussianNoiseSpec& noise,
                  std::span<const StateTerm> terms, const Vector& theta_prev,
                  const LearnerOptions& options) {
  options.validate();
  noise.validate_for_density();
  require_dim(theta_prev.size(), model.param_dim(), "previous parameters");
  if (!theta_prev.allFinite()) throw ContractError("learn: theta_prev must be finite");
  check_terms(model, terms);
  if (options.prior) {
    require_dim(options.prior->mean.size(), model.param_dim(), "prior mean");
    require_dim(options.prior->stddev.size(), model.param_dim(), "prior std-devs");
  }

  const double start_value = learning_objective(model, noise, terms, theta_prev, theta_prev, options);
  LearnResult result;
  switch (options.resolve(model.param_dim())) {
    case LearnerStrategy::nelder_mead:
      result = nelder_mead(
          [&](const Vector& p) {
            return learning_objective(model, noise, terms, p, theta_prev, options);
          },
          theta_prev, options);
      break;
    case LearnerStrategy::first_order:
      result = adam(
          [&](const Vector& p) {
            return objective_and_gradient(model, noise, terms, p, theta_prev, options);
          },
          theta_prev, options);
      break;
    default:
      result = lbfgs(
          [&](const Vector& p) {
            return objective_and_gradient(model, noise, terms, p, theta_prev, options);
          },
          theta_prev, options);
      break;
  }
  if (!std::isfinite(start_value) && !std::isfinite(result.objective)) {
    return {theta_prev, start_value, result.iterations, false};
  }
  if (!(result.objective >= start_value)) {
    return {theta_prev, start_value, result.iterations, false};
  }
  return result;
}

}  // namespace ceem
