#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ceem/experiments.hpp"
#include "support.hpp"

using namespace ceem;
using ceem::testing::gaussian_matrix;
using ceem::testing::random_lti;

TEST(DynamicsError, ZeroAtTruth) {
  LorenzBenchmarkSpec spec;
  spec.num_attractors = 2;
  const auto b = make_lorenz_benchmark(spec);
  Rng rng(1);
  const auto e = dynamics_error(*b.model, b.theta_true, b.theta_true, b.x0, 256, rng);
  EXPECT_EQ(e.estimate, 0.0);
  EXPECT_EQ(e.std_error, 0.0);
}

TEST(DynamicsError, LinearFamilyBruteForceAndHomogeneity) {
  Rng setup(2);
  const Matrix A = gaussian_matrix(3, 3, setup);
  LtiModel model(A, Matrix::Identity(3, 3));
  const Vector truth = model.nominal_theta();
  const Vector delta = 0.1 * ceem::testing::gaussian_vector(9, setup);
  const InitialConditionSpec x0{Vector::Constant(3, 1.0), Vector::Constant(3, 2.0)};

  Rng rng(3);
  const auto e1 = dynamics_error(model, truth + delta, truth, x0, 500, rng);
  Rng rng2(3);
  const auto e2 = dynamics_error(model, truth + 2.0 * delta, truth, x0, 500, rng2);

  Rng replay(3);
  const Matrix dA = Eigen::Map<const Matrix>(delta.data(), 3, 3);
  double sum = 0.0;
  for (int i = 0; i < 500; ++i) sum += (dA * sample_initial_condition(x0, replay)).norm();
  EXPECT_NEAR(e1.estimate, sum / 500.0, 1e-12);
  EXPECT_NEAR(e2.estimate, 2.0 * e1.estimate, 1e-12);
  EXPECT_GT(e1.std_error, 0.0);
}

TEST(DynamicsError, StableUnderMoreSamples) {
  LorenzBenchmarkSpec spec;
  const auto b = make_lorenz_benchmark(spec);
  const Vector theta = b.theta_true * 1.03;
  Rng r1(4), r2(5);
  const auto a = dynamics_error(*b.model, theta, b.theta_true, b.x0, 1024, r1);
  const auto c = dynamics_error(*b.model, theta, b.theta_true, b.x0, 2048, r2);
  EXPECT_LT(std::abs(a.estimate - c.estimate),
            3.0 * std::hypot(a.std_error, c.std_error));
}

TEST(Rmse, Values) {
  const Matrix a = Matrix::Random(3, 10);
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_NEAR(rmse(a, a + Matrix::Ones(3, 10)), std::sqrt(3.0), 1e-12);
  Matrix b = a;
  b.col(9) += Vector::Constant(3, 2.0);
  EXPECT_NEAR(rmse(a, b, 9), std::sqrt(12.0), 1e-12);
  EXPECT_THROW(rmse(a, Matrix::Zero(3, 9)), ContractError);
}

TEST(Ekf, DefaultsFollowEvaluationProtocol) {
  const EkfSettings s;
  EXPECT_EQ(s.drop_first, 25);
  const auto r = s.resolved(3, 2);
  EXPECT_EQ(*r.Q, Matrix::Identity(3, 3));
  EXPECT_EQ(*r.R, Matrix::Identity(2, 2));
  EXPECT_EQ(*r.Sigma0, Matrix::Identity(3, 3));
  EXPECT_EQ(*r.x0, Vector::Zero(3));
}

TEST(Ekf, LinearModelMatchesKalmanPredictions) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pr = random_lti(rng, 1 + trial % 4, 1 + trial % 3, trial % 2, 60);
    const Index n = pr.model->state_dim(), m = pr.model->obs_dim();
    const auto ekf = ekf_evaluate(*pr.model, pr.theta, pr.y, pr.u);
    LinearGaussianSystem sys = pr.system();
    sys.Q = Matrix::Identity(n, n);
    sys.R = Matrix::Identity(m, m);
    const auto kf = kalman_filter(sys, pr.y, pr.u, {Vector::Zero(n), Matrix::Identity(n, n)});
    EXPECT_LT((ekf.predicted_obs - kf.predicted_obs).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((ekf.filtered_mean - kf.filtered_mean).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(ekf.rmse, rmse(kf.predicted_obs, pr.y, 25), 1e-10);
  }
}

TEST(Ekf, ExactModelOnNoiselessData) {
  LorenzBenchmarkSpec spec;
  spec.sigma_w = 0.0;
  spec.sigma_v = 0.0;
  const auto b = make_lorenz_benchmark(spec);
  const auto& tr = b.data.trajectories[0];
  EkfSettings s;
  s.x0 = tr.x->col(0);
  s.Sigma0 = 1e-12 * Matrix::Identity(3, 3);
  s.Q = 1e-12 * Matrix::Identity(3, 3);
  s.R = Matrix::Identity(2, 2);
  const auto out = ekf_evaluate(*b.model, b.theta_true, tr.y, tr.u, s);
  EXPECT_LT(out.rmse, 1e-8);
}

TEST(Kalman, StaticAveraging) {
  LtiModel model(Matrix::Identity(1, 1), Matrix::Identity(1, 1));
  const auto sys = LinearGaussianSystem::from_model(
      model, model.nominal_theta(), GaussianNoiseSpec::isotropic(1, 1e-9, 1, 1.0));
  Matrix y(1, 2);
  y << 3.0, 7.0;
  const auto s = rts_smoother(sys, y, no_inputs(2), {Vector::Zero(1), 1e12 * Matrix::Identity(1, 1)});
  EXPECT_NEAR(s.mean(0, 0), 5.0, 1e-6);
  EXPECT_NEAR(s.mean(0, 1), 5.0, 1e-6);
}

TEST(Kalman, ExactObservationLimit) {
  Rng rng(7);
  auto pr = random_lti(rng, 3, 3, 0, 20);
  auto sys = pr.system();
  sys.C += 2.0 * Matrix::Identity(3, 3);
  sys.R = 1e-12 * Matrix::Identity(3, 3);
  const auto s = rts_smoother(sys, pr.y, pr.u, pr.belief());
  const Matrix expected = sys.C.lu().solve(pr.y);
  EXPECT_LT((s.mean - expected).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Kalman, SmootherAgreesWithFilterAtEndAndShrinksCovariance) {
  Rng rng(8);
  const auto pr = random_lti(rng, 3, 2, 1, 25);
  const auto kf = kalman_filter(pr.system(), pr.y, pr.u, pr.belief());
  const auto rts = rts_smoother(pr.system(), pr.y, pr.u, pr.belief());
  EXPECT_EQ(rts.mean.col(24), kf.filtered_mean.col(24));
  for (size_t t = 0; t < 25; ++t) {
    const Matrix diff = kf.filtered_cov[t] - rts.cov[t];
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (diff + diff.transpose()));
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LT((rts.cov[t] - rts.cov[t].transpose()).norm(), 1e-14);
  }
  EXPECT_EQ(rts.lag_one_cov.size(), 24u);
}

TEST(MetricReport, FileEchoesSettings) {
  Rng rng(9);
  const auto pr = random_lti(rng, 2, 1, 0, 40);
  TrajectoryDataset d;
  d.manifest.n = 2;
  d.manifest.m = 1;
  d.manifest.T = 40;
  d.manifest.num_trajectories = 2;
  d.trajectories = {{pr.y, pr.u, std::nullopt, 0}, {pr.y * 2.0, pr.u, std::nullopt, 1}};
  auto report = evaluate_dataset(*pr.model, pr.theta, d);
  EXPECT_EQ(report.rmse.size(), 2u);
  EXPECT_NEAR(report.mean, 0.5 * (report.rmse[0] + report.rmse[1]), 1e-14);
  const auto path = std::filesystem::temp_directory_path() / "ceem_test_metrics.csv";
  write_metric_report(report, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_NE(text.find("drop_first=25"), std::string::npos);
  EXPECT_NE(text.find("Q=identity"), std::string::npos);
  EXPECT_NE(text.find("trajectory_id,rmse"), std::string::npos);
  EXPECT_NE(text.find("# aggregate mean="), std::string::npos);
}
