#include "ceem/eval.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "ceem/csv.hpp"

namespace ceem {

namespace {

Matrix symmetrize(const Matrix& P) { return 0.5 * (P + P.transpose()); }

void check_spd(const Matrix& M, const char* name) {
  if (M.rows() != M.cols()) throw ConfigError(std::string(name) + " must be square");
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success || !M.isApprox(M.transpose(), 1e-12)) {
    throw ConfigError(std::string(name) + " must be symmetric positive definite");
  }
}

Vector input_term(const Matrix& B, const Matrix& u, Index t) {
  if (B.cols() == 0) return Vector::Zero(B.rows());
  return B * u.col(t);
}

}  // namespace

LinearGaussianSystem LinearGaussianSystem::from_model(const LtiModel& model, const Vector& theta,
                                                      const GaussianNoiseSpec& noise) {
  LinearGaussianSystem sys;
  sys.A = model.transition(theta);
  sys.B = model.B();
  sys.C = model.C();
  sys.D = model.D();
  sys.Q = noise.sigma_w.cwiseAbs2().asDiagonal();
  sys.R = noise.sigma_v.cwiseAbs2().asDiagonal();
  return sys;
}

KalmanOutput kalman_filter(const LinearGaussianSystem& sys, const Matrix& y, const Matrix& u,
                           const GaussianBelief& init) {
  const Index n = sys.A.rows(), m = sys.C.rows(), T = y.cols();
  require_dim(y.rows(), m, "observations");
  require_dim(init.mean.size(), n, "initial mean");
  if (u.cols() != T || u.rows() != sys.B.cols()) throw ContractError("kalman_filter: bad inputs");

  KalmanOutput out;
  out.predicted_mean.resize(n, T);
  out.filtered_mean.resize(n, T);
  out.predicted_obs.resize(m, T);
  Vector x = init.mean;
  Matrix P = init.cov;
  for (Index t = 0; t < T; ++t) {
    out.predicted_mean.col(t) = x;
    out.predicted_cov.push_back(P);
    const Vector y_pred = sys.C * x + input_term(sys.D, u, t);
    out.predicted_obs.col(t) = y_pred;
    const Matrix S = symmetrize(sys.C * P * sys.C.transpose() + sys.R);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("kalman_filter: innovation covariance not SPD at t=" +
                           std::to_string(t), t);
    }
    const Vector innov = y.col(t) - y_pred;
    const Matrix K = llt.solve(sys.C * P).transpose();
    x = x + K * innov;
    P = symmetrize(P - K * S * K.transpose());
    const Matrix L = llt.matrixL();
    out.log_likelihood += -0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi) -
                          L.diagonal().array().log().sum() -
                          0.5 * innov.dot(llt.solve(innov));
    out.filtered_mean.col(t) = x;
    out.filtered_cov.push_back(P);
    x = sys.A * x + input_term(sys.B, u, t);
    P = symmetrize(sys.A * P * sys.A.transpose() + sys.Q);
  }
  return out;
}

RtsOutput rts_smoother(const LinearGaussianSystem& sys, const Matrix& y, const Matrix& u,
                       const GaussianBelief& init) {
  const KalmanOutput kf = kalman_filter(sys, y, u, init);
  const Index T = y.cols();
  RtsOutput out;
  out.mean = kf.filtered_mean;
  out.cov = kf.filtered_cov;
  out.lag_one_cov.resize(static_cast<size_t>(std::max<Index>(T - 1, 0)));
  for (Index t = T - 2; t >= 0; --t) {
    const auto k = static_cast<size_t>(t);
    const Matrix& Pf = kf.filtered_cov[k];
    const Matrix& Pp = kf.predicted_cov[k + 1];
    Eigen::LLT<Matrix> llt(Pp);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("rts_smoother: predicted covariance not SPD at t=" +
                           std::to_string(t + 1), t + 1);
    }
    const Matrix G = llt.solve(sys.A * Pf).transpose();  // Pf A^T Pp^{-1}
    out.mean.col(t) = kf.filtered_mean.col(t) +
                      G * (out.mean.col(t + 1) - kf.predicted_mean.col(t + 1));
    out.cov[k] = symmetrize(Pf + G * (out.cov[k + 1] - Pp) * G.transpose());
    out.lag_one_cov[k] = out.cov[k + 1] * G.transpose();
  }
  return out;
}

EkfSettings EkfSettings::resolved(Index n, Index m) const {
  EkfSettings s = *this;
  if (!s.Q) s.Q = Matrix::Identity(n, n);
  if (!s.R) s.R = Matrix::Identity(m, m);
  if (!s.Sigma0) s.Sigma0 = Matrix::Identity(n, n);
  if (!s.x0) s.x0 = Vector::Zero(n);
  require_dim(s.Q->rows(), n, "EKF Q");
  require_dim(s.R->rows(), m, "EKF R");
  require_dim(s.Sigma0->rows(), n, "EKF Sigma0");
  require_dim(s.x0->size(), n, "EKF x0");
  check_spd(*s.Q, "EKF Q");
  check_spd(*s.R, "EKF R");
  check_spd(*s.Sigma0, "EKF Sigma0");
  if (s.drop_first < 0) throw ConfigError("EKF drop_first must be nonnegative");
  return s;
}

EkfOutput ekf_evaluate(const SystemModel& model, const Vector& theta, const Matrix& y,
                       const Matrix& u, const EkfSettings& settings) {
  const Index n = model.state_dim(), m = model.obs_dim(), T = y.cols();
  require_dim(y.rows(), m, "observations");
  require_dim(u.rows(), model.input_dim(), "inputs");
  require_dim(u.cols(), T, "input sequence length");
  const EkfSettings s = settings.resolved(n, m);

  EkfOutput out;
  out.predicted_obs.resize(m, T);
  out.filtered_mean.resize(n, T);
  Vector x = *s.x0;
  Matrix P = *s.Sigma0;
  const Matrix I = Matrix::Identity(n, n);
  for (Index t = 0; t < T; ++t) {
    const Vector ut = u.col(t);
    const Vector y_pred = model.observe(x, ut, t, theta);
    out.predicted_obs.col(t) = y_pred;
    const Matrix G = model.observe_jacobians(x, ut, t, theta).wrt_state;
    const Matrix S = symmetrize(G * P * G.transpose() + *s.R);
    Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("ekf: innovation covariance factorization failed at t=" +
                           std::to_string(t), t);
    }
    const Matrix K = llt.solve(G * P).transpose();
    x = x + K * (y.col(t) - y_pred);
    const Matrix IKG = I - K * G;
    P = symmetrize(IKG * P * IKG.transpose() + K * (*s.R) * K.transpose());
    out.filtered_mean.col(t) = x;
    const Matrix F = model.step_jacobians(x, ut, t, theta).wrt_state;
    x = model.step(x, ut, t, theta);
    P = symmetrize(F * P * F.transpose() + *s.Q);
    if (!x.allFinite() || !P.allFinite()) {
      throw NumericalError("ekf: state estimate diverged at t=" + std::to_string(t), t);
    }
  }
  out.rmse = rmse(out.predicted_obs, y, std::min(s.drop_first, T - 1));
  return out;
}

double rmse(const Matrix& predicted, const Matrix& measured, Index drop_first) {
  if (predicted.rows() != measured.rows() || predicted.cols() != measured.cols()) {
    throw ContractError("rmse: sequences differ in shape");
  }
  const Index T = predicted.cols();
  if (drop_first < 0 || T <= drop_first) {
    throw ContractError("rmse: sequence length must exceed drop_first");
  }
  const Index kept = T - drop_first;
  const double sq = (predicted.rightCols(kept) - measured.rightCols(kept)).squaredNorm();
  return std::sqrt(sq / static_cast<double>(kept));
}

DynamicsError dynamics_error(const SystemModel& model, const Vector& theta,
                             const Vector& theta_true, const InitialConditionSpec& x0_dist,
                             Index num_samples, Rng& rng) {
  require_dim(theta.size(), model.param_dim(), "parameters");
  require_dim(theta_true.size(), model.param_dim(), "true parameters");
  require_dim(x0_dist.mean.size(), model.state_dim(), "initial-condition mean");
  if (num_samples < 1) throw ContractError("dynamics_error: need at least one sample");
  const Vector u = Vector::Zero(model.input_dim());
  double sum = 0.0, sum_sq = 0.0;
  for (Index i = 0; i < num_samples; ++i) {
    const Vector x = sample_initial_condition(x0_dist, rng);
    const double e = (model.step(x, u, 0, theta) - model.step(x, u, 0, theta_true)).norm();
    sum += e;
    sum_sq += e * e;
  }
  const double N = static_cast<double>(num_samples);
  const double mean = sum / N;
  const double var = num_samples > 1 ? std::max(0.0, (sum_sq - N * mean * mean) / (N - 1.0)) : 0.0;
  return {mean, std::sqrt(var / N)};
}

void MetricReport::aggregate() {
  if (rmse.empty()) {
    mean = stddev = 0.0;
    return;
  }
  double s = 0.0;
  for (double r : rmse) s += r;
  mean = s / static_cast<double>(rmse.size());
  double v = 0.0;
  for (double r : rmse) v += (r - mean) * (r - mean);
  stddev = rmse.size() > 1 ? std::sqrt(v / static_cast<double>(rmse.size() - 1)) : 0.0;
}

MetricReport evaluate_dataset(const SystemModel& model, const Vector& theta,
                              const TrajectoryDataset& data, const EkfSettings& settings) {
  MetricReport report;
  report.settings = settings;
  for (const auto& tr : data.trajectories) {
    report.rmse.push_back(ekf_evaluate(model, theta, tr.y, tr.u, settings).rmse);
  }
  report.aggregate();
  return report;
}

namespace {

std::string describe_matrix(const std::optional<Matrix>& M) {
  if (!M) return "identity";
  if (M->isIdentity(0.0)) return "identity";
  return "custom";
}

}  // namespace

void write_metric_report(const MetricReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto& s = report.settings;
  out << "# ekf Q=" << describe_matrix(s.Q) << " R=" << describe_matrix(s.R)
      << " Sigma0=" << describe_matrix(s.Sigma0)
      << " x0=" << (!s.x0 || s.x0->isZero(0.0) ? "zero" : "custom")
      << " drop_first=" << s.drop_first << '\n';
  if (report.dynamics) {
    out << "# eps=" << format_double(report.dynamics->estimate)
        << " eps_std_error=" << format_double(report.dynamics->std_error) << '\n';
  }
  out << "trajectory_id,rmse\n";
  for (size_t i = 0; i < report.rmse.size(); ++i) {
    out << i << ',' << format_double(report.rmse[i]) << '\n';
  }
  out << "# aggregate mean=" << format_double(report.mean)
      << " std=" << format_double(report.stddev) << " count=" << report.rmse.size() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace ceem
