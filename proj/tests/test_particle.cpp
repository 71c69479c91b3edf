#include <gtest/gtest.h>

#include <cmath>

#include "ceem/experiments.hpp"
#include "support.hpp"

using namespace ceem;
using ceem::testing::random_lti;

namespace {

struct ScalarLgss {
  std::shared_ptr<LtiModel> model =
      std::make_shared<LtiModel>(Matrix::Constant(1, 1, 0.8), Matrix::Identity(1, 1));
  GaussianNoiseSpec noise = GaussianNoiseSpec::isotropic(1, 0.5, 1, 0.5);
  InitialConditionSpec x0{Vector::Zero(1), Vector::Ones(1)};
  TrajectoryDataset data;

  explicit ScalarLgss(Index T = 200, int trajectories = 1) {
    data.manifest.model_id = "lti";
    data.manifest.n = data.manifest.m = 1;
    data.manifest.T = T;
    data.manifest.num_trajectories = trajectories;
    data.manifest.sigma_w = noise.sigma_w;
    data.manifest.sigma_v = noise.sigma_v;
    Rng rng(4);
    for (int i = 0; i < trajectories; ++i) {
      data.trajectories.push_back(generate_trajectory(*model, model->nominal_theta(),
                                                      sample_initial_condition(x0, rng),
                                                      no_inputs(T), T, noise, 60 + i));
    }
  }

  /// Fixed point of exact EM for the transition coefficient.
  double exact_em() const {
    const GaussianBelief belief{x0.mean, Matrix::Identity(1, 1)};
    double a = 0.5;
    for (int k = 0; k < 10000; ++k) {
      const auto sys = LinearGaussianSystem::from_model(*model, Vector::Constant(1, a), noise);
      double num = 0.0, den = 0.0;
      for (const auto& tr : data.trajectories) {
        const auto s = rts_smoother(sys, tr.y, tr.u, belief);
        for (Index t = 0; t + 1 < s.mean.cols(); ++t) {
          num += s.mean(0, t + 1) * s.mean(0, t) + s.lag_one_cov[static_cast<size_t>(t)](0, 0);
          den += s.mean(0, t) * s.mean(0, t) + s.cov[static_cast<size_t>(t)](0, 0);
        }
      }
      const double next = num / den;
      if (std::abs(next - a) < 1e-13) return next;
      a = next;
    }
    return a;
  }
};

SaemBuffer buffer_from(const std::vector<Matrix>& samples) {
  SaemBuffer b;
  b.samples = samples;
  b.trajectory.assign(samples.size(), 0);
  b.sample_weight.assign(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return b;
}

}  // namespace

TEST(Resample, UniformWeightsHitEveryIndexOnce) {
  Rng rng(1);
  const auto idx = systematic_resample(Vector::Constant(8, 1.0 / 8.0), 8, rng);
  for (Index i = 0; i < 8; ++i) EXPECT_EQ(idx[static_cast<size_t>(i)], i);
}

TEST(Resample, DegenerateWeights) {
  Rng rng(2);
  Vector w = Vector::Zero(4);
  w[0] = 1.0;
  for (auto i : systematic_resample(w, 4, rng)) EXPECT_EQ(i, 0);
}

TEST(Resample, FrequenciesMatchWeights) {
  Rng rng(3);
  Vector w(5);
  w << 0.05, 0.3, 0.15, 0.4, 0.1;
  const int R = 10000;
  const Index N = 10;
  Vector counts = Vector::Zero(5);
  for (int r = 0; r < R; ++r)
    for (auto i : systematic_resample(w, N, rng)) counts[i] += 1.0;
  for (Index i = 0; i < 5; ++i) {
    const double expected = R * N * w[i];
    const double se = std::sqrt(R * N * w[i] * (1.0 - w[i]));
    EXPECT_NEAR(counts[i], expected, 3.0 * se);
  }
}

TEST(Resample, RejectsUnnormalizedWeights) {
  Rng rng(4);
  EXPECT_THROW(systematic_resample(Vector::Constant(3, 0.5), 3, rng), ContractError);
}

TEST(Resample, EffectiveSampleSize) {
  EXPECT_DOUBLE_EQ(effective_sample_size(Vector::Constant(10, 0.1)), 10.0);
  Vector w = Vector::Zero(10);
  w[3] = 1.0;
  EXPECT_DOUBLE_EQ(effective_sample_size(w), 1.0);
}

TEST(ParticleFilter, WeightsNormalizedAndEssBounded) {
  Rng rng(5);
  const auto pr = random_lti(rng, 3, 2, 1, 40);
  for (bool nonlinear : {false, true}) {
    ParticleEnsemble ens;
    if (nonlinear) {
      LorenzBenchmarkSpec spec;
      spec.T = 40;
      spec.sigma_w = 0.1;
      spec.sigma_v = 0.5;
      const auto b = make_lorenz_benchmark(spec);
      const auto& tr = b.data.trajectories[0];
      ens = particle_filter(*b.model, b.theta_true, b.noise, tr.y, tr.u, 200, b.x0, rng);
      EXPECT_TRUE(ens.fully_adapted);
    } else {
      ens = particle_filter(*pr.model, pr.theta, pr.noise, pr.y, pr.u, 200, pr.initial(), rng);
    }
    for (const auto& s : ens.steps) {
      EXPECT_NEAR(s.weights.sum(), 1.0, 1e-12);
      EXPECT_GE(s.weights.minCoeff(), 0.0);
      EXPECT_GE(s.ess, 1.0 - 1e-9);
      EXPECT_LE(s.ess, 200.0 + 1e-9);
    }
  }
}

TEST(ParticleFilter, NearlyNoiselessSingleParticleFollowsRollout) {
  LtiModel model(Matrix::Constant(2, 2, 0.4), Matrix::Identity(2, 2));
  const auto noise = GaussianNoiseSpec::isotropic(2, 1e-9, 2, 1e-9);
  const Vector x0 = Vector::Constant(2, 1.5);
  const auto tr = generate_trajectory(model, model.nominal_theta(), x0, no_inputs(10), 10,
                                      GaussianNoiseSpec::isotropic(2, 0.0, 2, 0.0), 1);
  Rng rng(6);
  const auto ens = particle_filter(model, model.nominal_theta(), noise, tr.y, tr.u, 1,
                                   InitialConditionSpec{x0, Vector::Zero(2)}, rng);
  EXPECT_LT((ens.filtered_mean() - *tr.x).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ParticleFilter, MatchesKalmanWithinMonteCarloError) {
  Rng rng(7);
  const auto pr = random_lti(rng, 2, 1, 0, 30);
  const auto kf = kalman_filter(pr.system(), pr.y, pr.u, pr.belief());
  const int R = 400;
  Matrix sum = Matrix::Zero(2, 30), sq = Matrix::Zero(2, 30);
  for (int r = 0; r < R; ++r) {
    Rng prng(70, static_cast<std::uint64_t>(r));
    const Matrix m = particle_filter(*pr.model, pr.theta, pr.noise, pr.y, pr.u, 1000, pr.initial(), prng)
                         .filtered_mean();
    sum += m;
    sq += m.cwiseProduct(m);
  }
  const Matrix mean = sum / R;
  const Matrix se = ((sq - R * mean.cwiseProduct(mean)) / (R - 1.0) / R).cwiseSqrt();
  const double max_z = ((mean - kf.filtered_mean).cwiseAbs().array() / se.array()).maxCoeff();
  EXPECT_LT(max_z, 3.0);
}

TEST(ParticleFilter, ErrorDecaysWithParticleCount) {
  Rng rng(8);
  const auto pr = random_lti(rng, 2, 1, 0, 40);
  const double e100 = ceem::testing::pf_kf_rms_gap(pr, 100, 20, 1);
  const double e1600 = ceem::testing::pf_kf_rms_gap(pr, 1600, 20, 2);
  const double slope = std::log(e1600 / e100) / std::log(16.0);
  EXPECT_GT(slope, -0.65);
  EXPECT_LT(slope, -0.35);
}

TEST(Ffbsi, SamplesLieOnFilterParticles) {
  Rng rng(9);
  const auto pr = random_lti(rng, 2, 2, 0, 15);
  const auto ens = particle_filter(*pr.model, pr.theta, pr.noise, pr.y, pr.u, 50, pr.initial(), rng);
  const auto draws = ffbsi_sample(ens, pr.noise, 20, rng);
  ASSERT_EQ(draws.size(), 20u);
  for (const auto& d : draws) {
    for (Index t = 0; t < 15; ++t) {
      const auto& P = ens.steps[static_cast<size_t>(t)].particles;
      bool found = false;
      for (Index i = 0; i < P.cols() && !found; ++i) found = P.col(i) == d.col(t);
      EXPECT_TRUE(found);
    }
  }
}

TEST(Ffbsi, SingleStepDrawsFromFinalWeights) {
  Rng rng(10);
  const auto pr = random_lti(rng, 1, 1, 0, 2);
  const Matrix y = pr.y.leftCols(1), u = pr.u.leftCols(1);
  const auto ens = particle_filter(*pr.model, pr.theta, pr.noise, y, u, 5, pr.initial(), rng);
  const auto& step = ens.steps[0];
  const Index S = 20000;
  const auto draws = ffbsi_sample(ens, pr.noise, S, rng);
  Vector counts = Vector::Zero(5);
  for (const auto& d : draws)
    for (Index i = 0; i < 5; ++i)
      if (d(0, 0) == step.particles(0, i)) counts[i] += 1.0;
  EXPECT_EQ(counts.sum(), static_cast<double>(S));
  for (Index i = 0; i < 5; ++i) {
    const double w = step.weights[i];
    EXPECT_NEAR(counts[i], S * w, 3.0 * std::sqrt(S * w * (1.0 - w)) + 1e-9);
  }
}

TEST(Ffbsi, MeansMatchRts) {
  Rng rng(11);
  const auto pr = random_lti(rng, 2, 1, 0, 20);
  EXPECT_LT(ceem::testing::ffbsi_rts_max_z(pr, 1000, 500, 20, 3), 3.0);
}

TEST(Saem, StepSizeSchedule) {
  EXPECT_EQ(saem_step_size(1), 1.0);
  EXPECT_EQ(saem_step_size(5), 1.0);
  EXPECT_DOUBLE_EQ(saem_step_size(6), 1.0);
  EXPECT_DOUBLE_EQ(saem_step_size(7), std::pow(2.0, -0.7));
}

TEST(Saem, FullStepIsMonteCarloEm) {
  const ScalarLgss p(60);
  Rng rng(12);
  const auto& tr = p.data.trajectories[0];
  const auto ens = particle_filter(*p.model, Vector::Constant(1, 0.5), p.noise, tr.y, tr.u, 100, p.x0, rng);
  const auto draws = ffbsi_sample(ens, p.noise, 10, rng);
  LearnerOptions opt;
  const Vector prev = Vector::Constant(1, 0.5);
  const auto saem = saem_update({}, buffer_from(draws), 1.0, *p.model, p.noise, p.data, prev, opt);
  std::vector<StateTerm> terms;
  for (const auto& d : draws) terms.push_back({&d, &tr.y, &tr.u, 0.1});
  const auto direct = learn(*p.model, p.noise, terms, prev, opt);
  EXPECT_NEAR(saem.learned.theta[0], direct.theta[0], 1e-9);
  ASSERT_EQ(saem.state.buffers.size(), 1u);
  EXPECT_DOUBLE_EQ(saem.state.buffers[0].weight, 1.0);
}

TEST(Saem, TinyStepKeepsOldSamples) {
  const ScalarLgss p(60);
  Rng rng(13);
  const auto& tr = p.data.trajectories[0];
  const auto old_ens = particle_filter(*p.model, Vector::Constant(1, 0.8), p.noise, tr.y, tr.u, 100, p.x0, rng);
  const auto old_draws = ffbsi_sample(old_ens, p.noise, 10, rng);
  const auto new_ens = particle_filter(*p.model, Vector::Constant(1, 0.1), p.noise, tr.y, tr.u, 100, p.x0, rng);
  const auto new_draws = ffbsi_sample(new_ens, p.noise, 10, rng);
  LearnerOptions opt;
  opt.strategy = LearnerStrategy::quasi_second_order;
  const Vector prev = Vector::Constant(1, 0.5);
  const auto only_old = saem_update({}, buffer_from(old_draws), 1.0, *p.model, p.noise, p.data, prev, opt);
  const auto blended = saem_update(only_old.state, buffer_from(new_draws), 1e-6, *p.model, p.noise,
                                   p.data, prev, opt);
  EXPECT_NEAR(blended.learned.theta[0], only_old.learned.theta[0], 1e-4);
  const auto half = saem_update(only_old.state, buffer_from(new_draws), 0.5, *p.model, p.noise,
                                p.data, prev, opt);
  EXPECT_GT(std::abs(half.learned.theta[0] - only_old.learned.theta[0]), 1e-3);
}

TEST(Saem, FixedPointMatchesExactEm) {
  const ScalarLgss p(200);
  const double exact = p.exact_em();
  PemConfig cfg;
  cfg.num_particles = 100;
  cfg.num_samples = 10;
  cfg.epochs = 200;
  cfg.seed = 5;
  cfg.initial = p.x0;
  const auto r = pem_fit(p.data, *p.model, Vector::Constant(1, 0.5), p.noise, cfg);
  EXPECT_NEAR(r.theta[0], exact, 1e-2);
}

TEST(PemFit, ReportSchemaAndDeterminism) {
  const ScalarLgss p(50, 2);
  PemConfig cfg;
  cfg.num_particles = 50;
  cfg.num_samples = 5;
  cfg.epochs = 6;
  cfg.initial = p.x0;
  const auto a = pem_fit(p.data, *p.model, Vector::Constant(1, 0.5), p.noise, cfg);
  const auto b = pem_fit(p.data, *p.model, Vector::Constant(1, 0.5), p.noise, cfg);
  EXPECT_EQ(a.algorithm, "pem");
  EXPECT_EQ(a.epochs.size(), 6u);
  EXPECT_EQ(a.termination, Termination::max_epochs);
  EXPECT_EQ(a.states.size(), 2u);
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].theta, b.epochs[i].theta);
    EXPECT_EQ(a.epochs[i].J, b.epochs[i].J);
  }
}

TEST(PemConfig, Validation) {
  PemConfig c;
  c.initial = InitialConditionSpec::lorenz(1);
  EXPECT_NO_THROW(c.validate());
  c.num_particles = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.num_particles = 10;
  c.num_samples = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.num_samples = 1;
  c.saem_exponent = 0.4;
  EXPECT_THROW(c.validate(), ConfigError);
}
