#pragma once

#include <optional>
#include <vector>

#include "ceem/ceem.hpp"
#include "ceem/learner.hpp"
#include "ceem/rng.hpp"
#include "ceem/simulate.hpp"

namespace ceem {

/// Filter output at one time step.
struct ParticleStep {
  Matrix particles;                  // n x N_p
  Vector weights;                    // normalized
  std::vector<Index> ancestors;      // parent index at the previous step
  double ess = 0.0;                  // 1 / sum w^2 of the selection weights
  Matrix propagated;                 // f(x_t^i), n x N_p; empty at the last step
};

struct ParticleEnsemble {
  std::vector<ParticleStep> steps;
  bool fully_adapted = false;

  Index length() const { return static_cast<Index>(steps.size()); }
  Index num_particles() const { return steps.empty() ? 0 : steps.front().particles.cols(); }
  /// Weighted particle mean at every step, n x T.
  Matrix filtered_mean() const;
};

/// Forward particle filter. When the observation is y = C x + v the
/// proposal is the exact conditional p(x_t | x_{t-1}, y_t) (full adaptation)
/// and particles are selected with the predictive weights
/// w_{t-1} p(y_t | x_{t-1}); otherwise a bootstrap proposal is used.
/// Systematic resampling runs when the ESS of the selection weights falls
/// below resample_threshold * N_p.
ParticleEnsemble particle_filter(const SystemModel& model, const Vector& theta,
                                 const GaussianNoiseSpec& noise, const Matrix& y, const Matrix& u,
                                 Index num_particles, const InitialConditionSpec& initial, Rng& rng,
                                 double resample_threshold = 0.5);

/// Low-variance systematic resampling: one uniform offset, N evenly spaced
/// pointers into the cumulative weights.
std::vector<Index> systematic_resample(const Vector& weights, Index count, Rng& rng);

/// Effective sample size 1 / sum w_i^2 of normalized weights.
double effective_sample_size(const Vector& weights);

/// Forward-filtering backward-simulation. Each backward draw first tries
/// rejection sampling against the bounded transition density and falls back
/// to an exact categorical draw.
std::vector<Matrix> ffbsi_sample(const ParticleEnsemble& ensemble, const GaussianNoiseSpec& noise,
                                 Index num_samples, Rng& rng, int max_rejection_trials = 32);

/// Retained samples of one SAEM iteration, weighted by their SA weight.
struct SaemBuffer {
  double weight = 1.0;
  std::vector<Matrix> samples;        // smoothed state trajectories
  std::vector<size_t> trajectory;     // dataset index of each sample
  std::vector<double> sample_weight;  // 1 / (samples per trajectory)
};

struct SaemState {
  std::vector<SaemBuffer> buffers;
  int iteration = 0;
};

/// 1 for k <= burn_in, then (k - burn_in)^(-exponent).
double saem_step_size(int k, int burn_in = 5, double exponent = 0.7);

struct SaemResult {
  LearnResult learned;
  SaemState state;
};

/// Blends the stored Monte-Carlo objective (weight 1 - gamma) with the new
/// samples (weight gamma), drops buffers whose weight fell below `horizon`,
/// and maximizes the blended objective over theta.
SaemResult saem_update(SaemState state, SaemBuffer new_samples, double gamma,
                       const SystemModel& model, const GaussianNoiseSpec& noise,
                       const TrajectoryDataset& data, const Vector& theta_prev,
                       const LearnerOptions& learner, double horizon = 1e-3);

struct PemConfig {
  Index num_particles = 100;
  Index num_samples = 10;
  int epochs = 50;
  double resample_threshold = 0.5;
  int saem_burn_in = 5;
  double saem_exponent = 0.7;
  double buffer_horizon = 1e-3;
  int max_rejection_trials = 32;
  std::uint64_t seed = 0;
  InitialConditionSpec initial;
  LearnerOptions learner;

  void validate() const;
};

/// Particle EM: per epoch, filter -> FFBSi -> SAEM M-step. The report uses
/// the CE-EM schema; J is the Monte-Carlo average of the joint objective
/// over the epoch's new samples at the updated parameters.
FitReport pem_fit(const TrajectoryDataset& data, const SystemModel& model,
                  const Vector& theta_init, const GaussianNoiseSpec& noise,
                  const PemConfig& config, const std::optional<TruthInfo>& truth = std::nullopt);

}  // namespace ceem
