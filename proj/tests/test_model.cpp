#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ceem/lorenz.hpp"
#include "ceem/lti.hpp"
#include "ceem/noise.hpp"
#include "support.hpp"

using namespace ceem;
using ceem::testing::gaussian_matrix;
using ceem::testing::gaussian_vector;

namespace {

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max(1.0, numeric.cwiseAbs().maxCoeff());
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

void check_jacobians(const SystemModel& model, const Vector& x, const Vector& u,
                     const Vector& theta) {
  const auto J = jacobians(model, x, u, 0, theta);
  const Matrix fx = central_difference([&](const Vector& v) { return model.step(v, u, 0, theta); }, x);
  const Matrix ft = central_difference([&](const Vector& v) { return model.step(x, u, 0, v); }, theta);
  const Matrix gx = central_difference([&](const Vector& v) { return model.observe(v, u, 0, theta); }, x);
  const Matrix gt = central_difference([&](const Vector& v) { return model.observe(x, u, 0, v); }, theta);
  EXPECT_FALSE(J.approximate);
  EXPECT_LT(relative_error(J.df_dx, fx), 1e-5);
  EXPECT_LT(relative_error(J.df_dtheta, ft), 1e-5);
  EXPECT_LT(relative_error(J.dg_dx, gx), 1e-5);
  EXPECT_LT(relative_error(J.dg_dtheta, gt), 1e-5);
}

}  // namespace

TEST(Lti, ScalarStep) {
  LtiModel model(Matrix::Constant(1, 1, 0.9), Matrix::Identity(1, 1));
  const Vector x = Vector::Constant(1, 2.0);
  EXPECT_DOUBLE_EQ(dynamics_step(model, x, Vector(0), 0, model.nominal_theta())[0], 1.8);
}

TEST(Lti, IdentityDynamics) {
  LtiModel model(Matrix::Identity(3, 3), Matrix::Identity(3, 3));
  const Vector x(Vector::LinSpaced(3, -1.0, 4.0));
  EXPECT_EQ(dynamics_step(model, x, Vector(0), 5, model.nominal_theta()), x);
}

TEST(Lti, StateJacobianIsA) {
  Rng rng(1);
  const Matrix A = gaussian_matrix(3, 3, rng);
  LtiModel model(A, gaussian_matrix(3, 2, rng), gaussian_matrix(2, 3, rng), gaussian_matrix(2, 2, rng));
  const auto J = jacobians(model, gaussian_vector(3, rng), gaussian_vector(2, rng), 0,
                           model.nominal_theta());
  EXPECT_EQ(J.df_dx, A);
}

TEST(Lti, FreeEntriesSelectParameters) {
  Matrix A(2, 2);
  A << 0.5, 0.1, -0.2, 0.7;
  LtiModel model(A, Matrix::Identity(2, 2), {{0, 1}, {1, 0}});
  EXPECT_EQ(model.param_dim(), 2);
  EXPECT_DOUBLE_EQ(model.nominal_theta()[0], 0.1);
  EXPECT_DOUBLE_EQ(model.nominal_theta()[1], -0.2);
  Vector theta(2);
  theta << 3.0, 4.0;
  const Matrix At = model.transition(theta);
  EXPECT_DOUBLE_EQ(At(0, 1), 3.0);
  EXPECT_DOUBLE_EQ(At(1, 0), 4.0);
  EXPECT_DOUBLE_EQ(At(0, 0), 0.5);
}

TEST(Lti, DimensionMismatchIsContractError) {
  LtiModel model(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EXPECT_THROW(dynamics_step(model, Vector::Zero(3), Vector(0), 0, model.nominal_theta()),
               ContractError);
  EXPECT_THROW(observe(model, Vector::Zero(1), Vector(0), 0, model.nominal_theta()),
               ContractError);
}

TEST(Lorenz, OriginIsFixedPoint) {
  Matrix C(2, 3);
  C << 1, 0, 0, 0, 1, 0;
  auto model = make_lorenz_model(1, C, 0.04);
  const Vector theta = lorenz_theta(LorenzParams::nominal(1, C));
  EXPECT_EQ(model->step(Vector::Zero(3), Vector(0), 0, theta), Vector::Zero(3));
}

TEST(Lorenz, SelectionObservation) {
  Matrix C(2, 3);
  C << 1, 0, 0, 0, 1, 0;
  auto model = make_lorenz_model(1, C, 0.04);
  Vector x(3);
  x << 3, -1, 7;
  const Vector y = model->observe(x, Vector(0), 0, lorenz_theta(LorenzParams::nominal(1, C)));
  EXPECT_EQ(y, Vector((Vector(2) << 3, -1).finished()));
}

TEST(Lorenz, ZeroObservationMatrix) {
  auto model = make_lorenz_model(1, Matrix::Zero(2, 3), 0.04);
  EXPECT_EQ(model->observe(Vector::Ones(3), Vector(0), 0, Vector::Ones(3)), Vector::Zero(2));
}

TEST(Lorenz, ObservationMatchesNaiveProduct) {
  Rng rng(4);
  const Matrix C = gaussian_matrix(4, 6, rng);
  auto model = make_lorenz_model(2, C, 0.04);
  const Vector x = gaussian_vector(6, rng, 5.0);
  const Vector y = model->observe(x, Vector(0), 0, lorenz_theta(LorenzParams::nominal(2, C)));
  for (Index i = 0; i < 4; ++i) {
    double s = 0.0;
    for (Index j = 0; j < 6; ++j) s += C(i, j) * x[j];
    EXPECT_NEAR(y[i], s, 1e-12);
  }
}

TEST(Lorenz, DriftAtOnes) {
  const auto p = LorenzParams::nominal(1, Matrix::Identity(3, 3));
  const Vector d = lorenz_drift(p, Vector::Ones(3));
  EXPECT_NEAR(d[0], 0.0, 1e-15);
  EXPECT_NEAR(d[1], 26.0, 1e-15);
  EXPECT_NEAR(d[2], -5.0 / 3.0, 1e-15);
  EXPECT_EQ(lorenz_drift(p, Vector::Zero(3)), Vector::Zero(3));
}

TEST(Lorenz, DriftJacobianEntry) {
  LorenzDrift drift(1);
  const Vector theta = lorenz_theta(LorenzParams::nominal(1, Matrix::Identity(3, 3)));
  const auto J = drift.drift_jacobians(Vector::Ones(3), Vector(0), 0.0, theta);
  EXPECT_DOUBLE_EQ(J.wrt_state(1, 0), 27.0);
}

TEST(Lorenz, UncoupledAttractorsAreIndependent) {
  Rng rng(2);
  auto p2 = LorenzParams::nominal(2, Matrix::Identity(6, 6));
  p2.sigma << 9.0, 11.0;
  p2.rho << 27.0, 29.0;
  p2.beta << 2.5, 2.9;
  const Vector x = gaussian_vector(6, rng, 10.0);
  const Vector d = lorenz_drift(p2, x);
  for (Index k = 0; k < 2; ++k) {
    auto p1 = LorenzParams::nominal(1, Matrix::Identity(3, 3));
    p1.sigma[0] = p2.sigma[k];
    p1.rho[0] = p2.rho[k];
    p1.beta[0] = p2.beta[k];
    EXPECT_EQ(d.segment(3 * k, 3), lorenz_drift(p1, x.segment(3 * k, 3)));
  }
}

TEST(Lorenz, ThetaRoundTrip) {
  Rng rng(3);
  const auto p = sample_lorenz_structure(3, 0.1, 7, rng);
  const Vector theta = lorenz_theta(p);
  EXPECT_EQ(theta.size(), 9 + 81 - 27);
  const auto back = lorenz_params_from_theta(3, theta, p.C);
  EXPECT_EQ(back.H, p.H);
  EXPECT_EQ(back.sigma, p.sigma);
  EXPECT_EQ(lorenz_layout(3).size(), theta.size());
}

TEST(Lorenz, ValidateRejectsSelfCouplingAndRankDeficientC) {
  auto p = LorenzParams::nominal(2, Matrix::Identity(4, 6));
  EXPECT_NO_THROW(p.validate());
  p.H(0, 1) = 0.3;
  EXPECT_THROW(p.validate(), ConfigError);
  p.H(0, 1) = 0.0;
  p.H(0, 4) = 0.3;
  EXPECT_NO_THROW(p.validate());
  p.C.row(1) = p.C.row(0);
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Jacobians, MatchFiniteDifferencesLorenz) {
  Rng rng(10);
  for (Index K : {1, 2}) {
    const auto p = sample_lorenz_structure(K, 0.1, K == 1 ? 2 : 3 * K - 2, rng);
    auto model = make_lorenz_model(K, p.C, 0.04);
    const auto init = InitialConditionSpec::lorenz(K);
    for (int i = 0; i < 100; ++i) {
      Vector theta = lorenz_theta(p);
      for (Index j = 0; j < theta.size(); ++j) theta[j] *= rng.uniform(0.8, 1.2);
      check_jacobians(*model, sample_initial_condition(init, rng), Vector(0), theta);
    }
  }
}

TEST(Jacobians, MatchFiniteDifferencesLti) {
  Rng rng(11);
  LtiModel model(gaussian_matrix(3, 3, rng), gaussian_matrix(3, 2, rng), gaussian_matrix(2, 3, rng),
                 gaussian_matrix(2, 2, rng), {{0, 0}, {1, 2}, {2, 1}});
  for (int i = 0; i < 100; ++i) {
    check_jacobians(model, gaussian_vector(3, rng), gaussian_vector(2, rng),
                    gaussian_vector(3, rng));
  }
}

TEST(Noise, LogProbValues) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi);
  const auto spec = GaussianNoiseSpec::isotropic(1, 1.0, 2, 1.0);
  EXPECT_NEAR(log_prob_noise(spec, Vector::Zero(1), NoiseKind::process), -c, 1e-12);
  EXPECT_NEAR(log_prob_noise(spec, Vector::Ones(1), NoiseKind::process), -0.5 - c, 1e-12);
  EXPECT_NEAR(log_prob_noise(spec, Vector::Zero(2), NoiseKind::observation), -2.0 * c, 1e-12);
  EXPECT_NEAR(-0.9189385, -c, 1e-7);
}

TEST(Noise, MaximizedAtZeroAndConcave) {
  Rng rng(5);
  const auto spec = GaussianNoiseSpec::isotropic(3, 0.7, 3, 0.2);
  const double at_zero = log_prob_noise(spec, Vector::Zero(3), NoiseKind::observation);
  for (int i = 0; i < 50; ++i) {
    const Vector a = gaussian_vector(3, rng), b = gaussian_vector(3, rng);
    const double fa = log_prob_noise(spec, a, NoiseKind::observation);
    const double fb = log_prob_noise(spec, b, NoiseKind::observation);
    const double fm = log_prob_noise(spec, 0.5 * (a + b), NoiseKind::observation);
    EXPECT_LT(fa, at_zero);
    EXPECT_GT(fm, 0.5 * (fa + fb));
  }
}

TEST(Noise, NonpositiveStdDevIsConfigError) {
  auto spec = GaussianNoiseSpec::isotropic(2, 1.0, 1, 0.0);
  EXPECT_THROW(log_prob_noise(spec, Vector::Zero(1), NoiseKind::observation), ConfigError);
  EXPECT_THROW(spec.validate_for_density(), ConfigError);
}

TEST(ParamLayout, SlicesTileTheVector) {
  ParamLayout layout;
  layout.add("a", 2).add("b", 3);
  EXPECT_EQ(layout.size(), 5);
  EXPECT_EQ(layout.slice("b").offset, 2);
  EXPECT_EQ(layout.coordinate_names()[3], "b[1]");
  EXPECT_THROW(ParamLayout({{"a", 0, 2}, {"b", 3, 1}}), ContractError);
}
