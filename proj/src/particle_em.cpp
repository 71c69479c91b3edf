#include "ceem/particle_em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "ceem/eval.hpp"
#include "ceem/parallel.hpp"

namespace ceem {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Symmetric square root of a PSD matrix (eigenvalues clipped at zero).
Matrix psd_sqrt(const Matrix& P) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (P + P.transpose()));
  const Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// Conditional of x ~ N(mean, P) given y = C x + v, v ~ N(0, R).
struct LinearGaussianUpdate {
  Matrix gain;       // P C^T S^{-1}
  Matrix post_sqrt;  // sqrt of (I - K C) P
  Eigen::LLT<Matrix> innovation;
  bool innovation_ok = false;
  double log_det_half = 0.0;  // sum log diag(L)

  LinearGaussianUpdate(const Matrix& P, const Matrix& C, const Matrix& R) {
    const Matrix S = C * P * C.transpose() + R;
    innovation.compute(0.5 * (S + S.transpose()));
    innovation_ok = innovation.info() == Eigen::Success;
    if (P.isZero(0.0)) {
      gain = Matrix::Zero(P.rows(), C.rows());
      post_sqrt = Matrix::Zero(P.rows(), P.rows());
      if (innovation_ok) log_det_half = Matrix(innovation.matrixL()).diagonal().array().log().sum();
      return;
    }
    if (!innovation_ok) throw NumericalError("particle filter: singular innovation covariance");
    gain = innovation.solve(C * P).transpose();
    post_sqrt = psd_sqrt(P - gain * C * P);
    log_det_half = Matrix(innovation.matrixL()).diagonal().array().log().sum();
  }

  double log_likelihood(const Vector& innov) const {
    const Vector z = innovation.matrixL().solve(innov);
    return -0.5 * static_cast<double>(innov.size()) * kLog2Pi - log_det_half - 0.5 * z.squaredNorm();
  }
};

Vector standard_normal(Index n, Rng& rng) {
  Vector z(n);
  for (Index i = 0; i < n; ++i) z[i] = rng.normal();
  return z;
}

// Normalizes log-weights in place into probabilities; throws on degeneracy.
Vector normalize_log_weights(const Vector& logw, Index t) {
  const double mx = logw.maxCoeff();
  if (!std::isfinite(mx)) {
    throw NumericalError("particle filter degeneracy: all weights vanish at t=" + std::to_string(t),
                         t);
  }
  Vector w = (logw.array() - mx).exp().matrix();
  const double s = w.sum();
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw NumericalError("particle filter degeneracy at t=" + std::to_string(t), t);
  }
  return w / s;
}

Index sample_categorical(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<Index>(it - cumulative.begin());
}

}  // namespace

Matrix ParticleEnsemble::filtered_mean() const {
  Matrix out(steps.empty() ? 0 : steps.front().particles.rows(), length());
  for (Index t = 0; t < length(); ++t) {
    const auto& s = steps[static_cast<size_t>(t)];
    out.col(t) = s.particles * s.weights;
  }
  return out;
}

double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

std::vector<Index> systematic_resample(const Vector& weights, Index count, Rng& rng) {
  if (count < 1) throw ContractError("systematic_resample: count must be positive");
  if (weights.size() < 1 || (weights.array() < 0.0).any() || !weights.allFinite() ||
      std::abs(weights.sum() - 1.0) > 1e-8) {
    throw ContractError("systematic_resample: weights must be normalized");
  }
  const Index N = weights.size();
  std::vector<Index> out(static_cast<size_t>(count));
  const double step = 1.0 / static_cast<double>(count);
  const double offset = rng.uniform() * step;
  double cumulative = weights[0];
  Index i = 0;
  for (Index j = 0; j < count; ++j) {
    const double pointer = offset + static_cast<double>(j) * step;
    while (pointer >= cumulative && i < N - 1) {
      ++i;
      cumulative += weights[i];
    }
    // Never land on a zero-weight tail entry because of rounding.
    Index pick = i;
    while (weights[pick] == 0.0 && pick > 0) --pick;
    out[static_cast<size_t>(j)] = pick;
  }
  return out;
}

ParticleEnsemble particle_filter(const SystemModel& model, const Vector& theta,
                                 const GaussianNoiseSpec& noise, const Matrix& y, const Matrix& u,
                                 Index num_particles, const InitialConditionSpec& initial, Rng& rng,
                                 double resample_threshold) {
  if (num_particles < 1) throw ContractError("particle_filter: need at least one particle");
  const Index n = model.state_dim(), m = model.obs_dim(), T = y.cols();
  require_dim(y.rows(), m, "observations");
  require_dim(u.rows(), model.input_dim(), "inputs");
  require_dim(u.cols(), T, "input sequence length");
  require_dim(initial.mean.size(), n, "initial mean");
  require_dim(noise.sigma_w.size(), n, "sigma_w");
  require_dim(noise.sigma_v.size(), m, "sigma_v");
  if (T < 1) throw ContractError("particle_filter: empty sequence");
  const Index N = num_particles;
  const bool weigh = N > 1;

  ParticleEnsemble ens;
  ens.steps.resize(static_cast<size_t>(T));
  const auto C = model.linear_observation();
  ens.fully_adapted = C.has_value();
  const Matrix Q = noise.sigma_w.cwiseAbs2().asDiagonal();
  const Matrix R = noise.sigma_v.cwiseAbs2().asDiagonal();
  const Matrix P0 = initial.stddev.cwiseAbs2().asDiagonal();

  if (ens.fully_adapted) {
    const LinearGaussianUpdate first(P0, *C, R);
    const LinearGaussianUpdate later(Q, *C, R);
    Vector prev_w;
    for (Index t = 0; t < T; ++t) {
      auto& step = ens.steps[static_cast<size_t>(t)];
      const Vector yt = y.col(t);
      const LinearGaussianUpdate& upd = t == 0 ? first : later;
      // Prior means of each candidate parent.
      Matrix prior_means(n, N);
      Vector select_w = Vector::Constant(N, 1.0 / static_cast<double>(N));
      if (t == 0) {
        prior_means = initial.mean.replicate(1, N);
      } else {
        prior_means = ens.steps[static_cast<size_t>(t - 1)].propagated;
        if (weigh) {
          Vector logw(N);
          for (Index i = 0; i < N; ++i) {
            logw[i] = std::log(prev_w[i]) + upd.log_likelihood(yt - (*C) * prior_means.col(i));
          }
          select_w = normalize_log_weights(logw, t);
        }
      }
      step.ess = effective_sample_size(select_w);
      if (t > 0 && weigh && step.ess < resample_threshold * static_cast<double>(N)) {
        step.ancestors = systematic_resample(select_w, N, rng);
        step.weights = Vector::Constant(N, 1.0 / static_cast<double>(N));
      } else {
        step.ancestors.resize(static_cast<size_t>(N));
        for (Index i = 0; i < N; ++i) step.ancestors[static_cast<size_t>(i)] = i;
        step.weights = select_w;
      }
      step.particles.resize(n, N);
      for (Index i = 0; i < N; ++i) {
        const Vector mu = prior_means.col(step.ancestors[static_cast<size_t>(i)]);
        step.particles.col(i) = mu + upd.gain * (yt - (*C) * mu) + upd.post_sqrt * standard_normal(n, rng);
      }
      prev_w = step.weights;
      if (t + 1 < T) {
        step.propagated.resize(n, N);
        const Vector ut = u.col(t);
        for (Index i = 0; i < N; ++i) {
          step.propagated.col(i) = model.step(step.particles.col(i), ut, t, theta);
        }
        if (!step.propagated.allFinite()) {
          throw NumericalError("particle filter: nonfinite propagation at t=" + std::to_string(t), t);
        }
      }
    }
    return ens;
  }

  // Bootstrap proposal.
  noise.validate_for_density();
  Vector prev_w;
  for (Index t = 0; t < T; ++t) {
    auto& step = ens.steps[static_cast<size_t>(t)];
    const Vector ut = u.col(t);
    step.particles.resize(n, N);
    step.ancestors.resize(static_cast<size_t>(N));
    Vector carried = Vector::Constant(N, 1.0 / static_cast<double>(N));
    if (t == 0) {
      step.ess = static_cast<double>(N);
      for (Index i = 0; i < N; ++i) {
        step.ancestors[static_cast<size_t>(i)] = i;
        step.particles.col(i) = sample_initial_condition(initial, rng);
      }
    } else {
      const auto& prev = ens.steps[static_cast<size_t>(t - 1)];
      step.ess = effective_sample_size(prev_w);
      if (weigh && step.ess < resample_threshold * static_cast<double>(N)) {
        step.ancestors = systematic_resample(prev_w, N, rng);
      } else {
        for (Index i = 0; i < N; ++i) step.ancestors[static_cast<size_t>(i)] = i;
        carried = prev_w;
      }
      for (Index i = 0; i < N; ++i) {
        const Index a = step.ancestors[static_cast<size_t>(i)];
        step.particles.col(i) =
            prev.propagated.col(a) + noise.sigma_w.cwiseProduct(standard_normal(n, rng));
      }
    }
    if (weigh) {
      Vector logw(N);
      for (Index i = 0; i < N; ++i) {
        logw[i] = std::log(carried[i]) +
                  diag_gaussian_logpdf(y.col(t) - model.observe(step.particles.col(i), ut, t, theta),
                                       noise.sigma_v);
      }
      step.weights = normalize_log_weights(logw, t);
    } else {
      step.weights = Vector::Ones(1);
    }
    prev_w = step.weights;
    if (t + 1 < T) {
      step.propagated.resize(n, N);
      for (Index i = 0; i < N; ++i) {
        step.propagated.col(i) = model.step(step.particles.col(i), ut, t, theta);
      }
      if (!step.propagated.allFinite()) {
        throw NumericalError("particle filter: nonfinite propagation at t=" + std::to_string(t), t);
      }
    }
  }
  return ens;
}

std::vector<Matrix> ffbsi_sample(const ParticleEnsemble& ensemble, const GaussianNoiseSpec& noise,
                                 Index num_samples, Rng& rng, int max_rejection_trials) {
  if (ensemble.steps.empty()) throw ContractError("ffbsi_sample: empty ensemble");
  if (num_samples < 1) throw ContractError("ffbsi_sample: need at least one sample");
  const Index T = ensemble.length();
  const Index n = ensemble.steps.front().particles.rows();
  const Index N = ensemble.num_particles();
  require_dim(noise.sigma_w.size(), n, "sigma_w");
  if (T > 1 && !(noise.sigma_w.array() > 0.0).all()) {
    throw ConfigError("ffbsi_sample: process noise std-devs must be positive");
  }
  const Vector inv_w = noise.sigma_w.cwiseInverse();

  std::vector<std::vector<double>> cumulative(static_cast<size_t>(T));
  for (Index t = 0; t < T; ++t) {
    const Vector& w = ensemble.steps[static_cast<size_t>(t)].weights;
    auto& c = cumulative[static_cast<size_t>(t)];
    c.resize(static_cast<size_t>(N));
    double acc = 0.0;
    for (Index i = 0; i < N; ++i) c[static_cast<size_t>(i)] = (acc += w[i]);
  }

  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(num_samples));
  Vector logp(N);
  for (Index s = 0; s < num_samples; ++s) {
    Matrix traj(n, T);
    Index idx = sample_categorical(cumulative[static_cast<size_t>(T - 1)], rng);
    traj.col(T - 1) = ensemble.steps[static_cast<size_t>(T - 1)].particles.col(idx);
    for (Index t = T - 2; t >= 0; --t) {
      const auto& step = ensemble.steps[static_cast<size_t>(t)];
      const Vector target = traj.col(t + 1);
      bool accepted = false;
      for (int trial = 0; trial < max_rejection_trials; ++trial) {
        const Index cand = sample_categorical(cumulative[static_cast<size_t>(t)], rng);
        const double ratio =
            std::exp(-0.5 * (target - step.propagated.col(cand)).cwiseProduct(inv_w).squaredNorm());
        if (rng.uniform() < ratio) {
          idx = cand;
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        for (Index i = 0; i < N; ++i) {
          logp[i] = std::log(step.weights[i]) -
                    0.5 * (target - step.propagated.col(i)).cwiseProduct(inv_w).squaredNorm();
        }
        const Vector p = normalize_log_weights(logp, t);
        std::vector<double> c(static_cast<size_t>(N));
        double acc = 0.0;
        for (Index i = 0; i < N; ++i) c[static_cast<size_t>(i)] = (acc += p[i]);
        idx = sample_categorical(c, rng);
      }
      traj.col(t) = step.particles.col(idx);
    }
    out.push_back(std::move(traj));
  }
  return out;
}

double saem_step_size(int k, int burn_in, double exponent) {
  if (k < 1) throw ContractError("saem_step_size: k starts at 1");
  if (k <= burn_in) return 1.0;
  return std::pow(static_cast<double>(k - burn_in), -exponent);
}

SaemResult saem_update(SaemState state, SaemBuffer new_samples, double gamma,
                       const SystemModel& model, const GaussianNoiseSpec& noise,
                       const TrajectoryDataset& data, const Vector& theta_prev,
                       const LearnerOptions& learner, double horizon) {
  if (!(gamma > 0.0) || gamma > 1.0) throw ContractError("saem_update: gamma must lie in (0, 1]");
  if (new_samples.samples.size() != new_samples.trajectory.size() ||
      new_samples.samples.size() != new_samples.sample_weight.size()) {
    throw ContractError("saem_update: sample bookkeeping is inconsistent");
  }
  for (auto& b : state.buffers) b.weight *= 1.0 - gamma;
  new_samples.weight = gamma;
  state.buffers.push_back(std::move(new_samples));
  std::erase_if(state.buffers, [&](const SaemBuffer& b) { return b.weight < horizon; });
  if (state.buffers.empty()) throw ContractError("saem_update: every buffer fell below the horizon");
  double total = 0.0;
  for (const auto& b : state.buffers) total += b.weight;
  for (auto& b : state.buffers) b.weight /= total;
  ++state.iteration;

  std::vector<StateTerm> terms;
  for (const auto& b : state.buffers) {
    for (size_t s = 0; s < b.samples.size(); ++s) {
      const auto& tr = data.trajectories.at(b.trajectory[s]);
      terms.push_back({&b.samples[s], &tr.y, &tr.u, b.weight * b.sample_weight[s]});
    }
  }
  SaemResult out;
  out.learned = learn(model, noise, terms, theta_prev, learner);
  out.state = std::move(state);
  return out;
}

void PemConfig::validate() const {
  if (num_particles < 2) throw ConfigError("pem: num_particles must be at least 2");
  if (num_samples < 1) throw ConfigError("pem: num_samples must be at least 1");
  if (epochs < 1) throw ConfigError("pem: epochs must be at least 1");
  if (!(resample_threshold > 0.0) || resample_threshold > 1.0) {
    throw ConfigError("pem: resample_threshold must lie in (0, 1]");
  }
  if (saem_burn_in < 0 || !(saem_exponent > 0.5) || saem_exponent > 1.0) {
    throw ConfigError("pem: SAEM exponent must lie in (0.5, 1]");
  }
  if (!(buffer_horizon > 0.0) || buffer_horizon >= 1.0) {
    throw ConfigError("pem: buffer_horizon must lie in (0, 1)");
  }
  learner.validate();
}

FitReport pem_fit(const TrajectoryDataset& data, const SystemModel& model,
                  const Vector& theta_init, const GaussianNoiseSpec& noise,
                  const PemConfig& config, const std::optional<TruthInfo>& truth) {
  config.validate();
  noise.validate_for_density();
  if (data.trajectories.empty()) throw ContractError("pem_fit: dataset is empty");
  require_dim(theta_init.size(), model.param_dim(), "initial parameters");
  require_dim(config.initial.mean.size(), model.state_dim(), "pem initial-state mean");

  auto eps_of = [&](const Vector& theta) -> std::optional<double> {
    if (!truth) return std::nullopt;
    Rng rng(truth->seed, 0);
    return dynamics_error(model, theta, truth->theta_true, truth->x0_dist, truth->num_samples, rng)
        .estimate;
  };

  const size_t num_traj = data.trajectories.size();
  FitReport report;
  report.algorithm = "pem";
  report.param_names = model.layout().coordinate_names();
  report.initial_theta = theta_init;
  report.initial_eps = eps_of(theta_init);
  report.initial_J = std::numeric_limits<double>::quiet_NaN();
  Vector theta = theta_init;
  SaemState saem;
  std::vector<std::vector<Matrix>> samples(num_traj);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    try {
      parallel_for(static_cast<std::ptrdiff_t>(num_traj), [&](std::ptrdiff_t i) {
        const auto& tr = data.trajectories[static_cast<size_t>(i)];
        Rng rng(config.seed, static_cast<std::uint64_t>(epoch) * 1000003ULL + static_cast<std::uint64_t>(i));
        const ParticleEnsemble ens = particle_filter(model, theta, noise, tr.y, tr.u,
                                                     config.num_particles, config.initial, rng,
                                                     config.resample_threshold);
        samples[static_cast<size_t>(i)] =
            ffbsi_sample(ens, noise, config.num_samples, rng, config.max_rejection_trials);
      });
    } catch (const NumericalError& e) {
      throw NumericalError("pem epoch " + std::to_string(epoch) + ": " + e.what(), e.time_index());
    }

    SaemBuffer buffer;
    for (size_t i = 0; i < num_traj; ++i) {
      for (auto& s : samples[i]) {
        buffer.samples.push_back(s);
        buffer.trajectory.push_back(i);
        buffer.sample_weight.push_back(1.0 / static_cast<double>(config.num_samples));
      }
    }
    const double gamma = saem_step_size(epoch, config.saem_burn_in, config.saem_exponent);
    SaemResult upd = saem_update(std::move(saem), std::move(buffer), gamma, model, noise, data,
                                 theta, config.learner, config.buffer_horizon);
    saem = std::move(upd.state);
    theta = upd.learned.theta;

    double J = 0.0;
    for (size_t i = 0; i < num_traj; ++i) {
      const auto& tr = data.trajectories[i];
      for (const auto& s : samples[i]) {
        J += joint_objective(model, theta, noise, tr.y, tr.u, s).total /
             static_cast<double>(samples[i].size());
      }
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back({epoch, J, eps_of(theta), wall, theta});
  }
  report.theta = theta;
  for (const auto& s : samples) {
    Matrix mean = Matrix::Zero(s.front().rows(), s.front().cols());
    for (const auto& x : s) mean += x;
    report.states.push_back(mean / static_cast<double>(s.size()));
  }
  report.termination = Termination::max_epochs;
  return report;
}

}  // namespace ceem
