#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>

#include "ceem/eval.hpp"
#include "ceem/lti.hpp"
#include "ceem/particle_em.hpp"
#include "ceem/rng.hpp"
#include "ceem/simulate.hpp"
#include "ceem/smoother.hpp"

namespace ceem::testing {

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng) {
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = rng.normal();
  return M;
}

inline Vector gaussian_vector(Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

/// Random linear-Gaussian problem with spectral radius of A at most 0.95.
struct LtiProblem {
  std::shared_ptr<LtiModel> model;
  Vector theta;
  GaussianNoiseSpec noise;
  Vector x0_mean, x0_std;
  Matrix y, u, x;

  LinearGaussianSystem system() const {
    return LinearGaussianSystem::from_model(*model, theta, noise);
  }
  GaussianBelief belief() const { return {x0_mean, x0_std.array().square().matrix().asDiagonal()}; }
  StatePrior prior() const { return {x0_mean, x0_std}; }
  InitialConditionSpec initial() const { return {x0_mean, x0_std}; }
};

inline LtiProblem random_lti(Rng& rng, Index n, Index m, Index p, Index T) {
  Matrix A = gaussian_matrix(n, n, rng);
  const double radius = A.eigenvalues().cwiseAbs().maxCoeff();
  A *= rng.uniform(0.5, 0.95) / radius;
  Matrix C = gaussian_matrix(m, n, rng);
  LtiProblem pr;
  if (p > 0) {
    pr.model = std::make_shared<LtiModel>(A, gaussian_matrix(n, p, rng), C,
                                          gaussian_matrix(m, p, rng));
  } else {
    pr.model = std::make_shared<LtiModel>(A, C);
  }
  pr.theta = pr.model->nominal_theta();
  pr.noise.sigma_w.resize(n);
  pr.noise.sigma_v.resize(m);
  for (Index i = 0; i < n; ++i) pr.noise.sigma_w[i] = rng.uniform(0.1, 0.5);
  for (Index i = 0; i < m; ++i) pr.noise.sigma_v[i] = rng.uniform(0.1, 0.5);
  pr.x0_mean = gaussian_vector(n, rng);
  pr.x0_std = Vector::Constant(n, 1.0);
  pr.u = gaussian_matrix(p, T, rng);
  const Vector x0 = sample_initial_condition(pr.initial(), rng);
  auto tr = generate_trajectory(*pr.model, pr.theta, x0, pr.u, T, pr.noise,
                                static_cast<std::uint64_t>(rng.engine()()));
  pr.y = tr.y;
  pr.x = *tr.x;
  return pr;
}

/// Root-mean-square gap between particle-filter and Kalman-filter means,
/// pooled over steps, coordinates and independent filter runs.
inline double pf_kf_rms_gap(const LtiProblem& pr, Index num_particles, int reps, std::uint64_t seed) {
  const auto kf = kalman_filter(pr.system(), pr.y, pr.u, pr.belief());
  double sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    const auto ens = particle_filter(*pr.model, pr.theta, pr.noise, pr.y, pr.u, num_particles,
                                     pr.initial(), rng);
    sq += (ens.filtered_mean() - kf.filtered_mean).squaredNorm();
  }
  return std::sqrt(sq / (static_cast<double>(reps) * static_cast<double>(kf.filtered_mean.size())));
}

/// Largest |z| of replicated FFBSi smoothed means against RTS means, with
/// the standard error of each entry taken across independent replications.
inline double ffbsi_rts_max_z(const LtiProblem& pr, Index num_particles, Index num_samples,
                              int reps, std::uint64_t seed) {
  const auto rts = rts_smoother(pr.system(), pr.y, pr.u, pr.belief());
  const Index n = rts.mean.rows(), T = rts.mean.cols();
  Matrix sum = Matrix::Zero(n, T), sq = Matrix::Zero(n, T);
  for (int r = 0; r < reps; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    const auto ens = particle_filter(*pr.model, pr.theta, pr.noise, pr.y, pr.u, num_particles,
                                     pr.initial(), rng);
    const auto draws = ffbsi_sample(ens, pr.noise, num_samples, rng);
    Matrix mean = Matrix::Zero(n, T);
    for (const auto& d : draws) mean += d;
    mean /= static_cast<double>(draws.size());
    sum += mean;
    sq += mean.cwiseProduct(mean);
  }
  const double R = reps;
  const Matrix grand = sum / R;
  const Matrix var = (sq - R * grand.cwiseProduct(grand)) / (R - 1.0);
  const Matrix se = (var / R).cwiseSqrt();
  return ((grand - rts.mean).cwiseAbs().array() / se.array()).maxCoeff();
}

}  // namespace ceem::testing
