#include "ceem/lorenz.hpp"

namespace ceem {

namespace {

bool same_block(Index i, Index j) { return i / 3 == j / 3; }

std::vector<std::pair<Index, Index>> coupling_entries(Index K) {
  std::vector<std::pair<Index, Index>> out;
  const Index n = 3 * K;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (!same_block(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

}  // namespace

void LorenzParams::validate() const {
  const Index K = sigma.size();
  if (K < 1) throw ConfigError("Lorenz model needs at least one attractor");
  if (rho.size() != K || beta.size() != K) {
    throw ConfigError("Lorenz sigma/rho/beta must have equal length");
  }
  const Index n = 3 * K;
  if (H.rows() != n || H.cols() != n) throw ConfigError("Lorenz H must be 3K x 3K");
  for (Index k = 0; k < K; ++k) {
    if (H.block(3 * k, 3 * k, 3, 3).cwiseAbs().maxCoeff() != 0.0) {
      throw ConfigError("Lorenz H has nonzero self-coupling in block " + std::to_string(k));
    }
  }
  if (C.cols() != n) throw ConfigError("Lorenz C must have 3K columns");
  if (C.rows() > n || C.rows() < 1) throw ConfigError("Lorenz C must have between 1 and 3K rows");
  Eigen::ColPivHouseholderQR<Matrix> qr(C.transpose());
  if (qr.rank() != C.rows()) throw ConfigError("Lorenz C is row-rank deficient");
}

LorenzParams LorenzParams::nominal(Index K, Matrix C) {
  LorenzParams p;
  p.sigma = Vector::Constant(K, 10.0);
  p.rho = Vector::Constant(K, 28.0);
  p.beta = Vector::Constant(K, 8.0 / 3.0);
  p.H = Matrix::Zero(3 * K, 3 * K);
  p.C = std::move(C);
  return p;
}

ParamLayout lorenz_layout(Index K) {
  ParamLayout layout;
  layout.add("sigma", K).add("rho", K).add("beta", K);
  if (K > 1) layout.add("H", 9 * K * (K - 1));
  return layout;
}

Vector lorenz_theta(const LorenzParams& params) {
  const Index K = params.num_attractors();
  const auto entries = coupling_entries(K);
  Vector theta(3 * K + static_cast<Index>(entries.size()));
  theta << params.sigma, params.rho, params.beta, Vector::Zero(static_cast<Index>(entries.size()));
  for (size_t e = 0; e < entries.size(); ++e) {
    theta[3 * K + static_cast<Index>(e)] = params.H(entries[e].first, entries[e].second);
  }
  return theta;
}

LorenzParams lorenz_params_from_theta(Index K, const Vector& theta, const Matrix& observation) {
  const auto entries = coupling_entries(K);
  require_dim(theta.size(), 3 * K + static_cast<Index>(entries.size()), "Lorenz theta");
  LorenzParams p;
  p.sigma = theta.segment(0, K);
  p.rho = theta.segment(K, K);
  p.beta = theta.segment(2 * K, K);
  p.H = Matrix::Zero(3 * K, 3 * K);
  for (size_t e = 0; e < entries.size(); ++e) {
    p.H(entries[e].first, entries[e].second) = theta[3 * K + static_cast<Index>(e)];
  }
  p.C = observation;
  return p;
}

Vector lorenz_drift(const LorenzParams& params, const Vector& x) {
  const Index K = params.num_attractors();
  require_dim(x.size(), 3 * K, "Lorenz state");
  Vector out = params.H * x;
  for (Index k = 0; k < K; ++k) {
    const Index o = 3 * k;
    out[o] += params.sigma[k] * (x[o + 1] - x[o]);
    out[o + 1] += x[o] * (params.rho[k] - x[o + 2]) - x[o + 1];
    out[o + 2] += x[o] * x[o + 1] - params.beta[k] * x[o + 2];
  }
  return out;
}

LorenzDrift::LorenzDrift(Index num_attractors)
    : num_attractors_(num_attractors),
      layout_(lorenz_layout(num_attractors)),
      coupling_entries_(coupling_entries(num_attractors)) {
  if (num_attractors < 1) throw ConfigError("Lorenz model needs at least one attractor");
}

Vector LorenzDrift::drift(const Vector& x, const Vector&, double, const Vector& theta) const {
  const Index K = num_attractors_;
  Vector out(3 * K);
  for (Index k = 0; k < K; ++k) {
    const Index o = 3 * k;
    out[o] = theta[k] * (x[o + 1] - x[o]);
    out[o + 1] = x[o] * (theta[K + k] - x[o + 2]) - x[o + 1];
    out[o + 2] = x[o] * x[o + 1] - theta[2 * K + k] * x[o + 2];
  }
  for (size_t e = 0; e < coupling_entries_.size(); ++e) {
    const auto [i, j] = coupling_entries_[e];
    out[i] += theta[3 * K + static_cast<Index>(e)] * x[j];
  }
  return out;
}

Jacobians LorenzDrift::drift_jacobians(const Vector& x, const Vector&, double,
                                       const Vector& theta) const {
  const Index K = num_attractors_;
  const Index n = 3 * K;
  Jacobians J;
  J.wrt_state = Matrix::Zero(n, n);
  J.wrt_params = Matrix::Zero(n, layout_.size());
  for (Index k = 0; k < K; ++k) {
    const Index o = 3 * k;
    const double s = theta[k], r = theta[K + k], b = theta[2 * K + k];
    J.wrt_state(o, o) = -s;
    J.wrt_state(o, o + 1) = s;
    J.wrt_state(o + 1, o) = r - x[o + 2];
    J.wrt_state(o + 1, o + 1) = -1.0;
    J.wrt_state(o + 1, o + 2) = -x[o];
    J.wrt_state(o + 2, o) = x[o + 1];
    J.wrt_state(o + 2, o + 1) = x[o];
    J.wrt_state(o + 2, o + 2) = -b;

    J.wrt_params(o, k) = x[o + 1] - x[o];
    J.wrt_params(o + 1, K + k) = x[o];
    J.wrt_params(o + 2, 2 * K + k) = -x[o + 2];
  }
  for (size_t e = 0; e < coupling_entries_.size(); ++e) {
    const auto [i, j] = coupling_entries_[e];
    J.wrt_state(i, j) += theta[3 * K + static_cast<Index>(e)];
    J.wrt_params(i, 3 * K + static_cast<Index>(e)) = x[j];
  }
  return J;
}

std::shared_ptr<const DiscretizedModel> make_lorenz_model(Index num_attractors,
                                                          const Matrix& observation, double dt) {
  return std::make_shared<DiscretizedModel>(std::make_shared<LorenzDrift>(num_attractors),
                                            observation, dt);
}

LorenzParams sample_lorenz_structure(Index K, double h_scale, Index obs_rows, Rng& rng) {
  const Index n = 3 * K;
  Matrix C(obs_rows, n);
  for (;;) {
    for (Index i = 0; i < C.size(); ++i) C.data()[i] = rng.normal();
    Eigen::ColPivHouseholderQR<Matrix> qr(C.transpose());
    if (qr.rank() == obs_rows) break;
  }
  LorenzParams p = LorenzParams::nominal(K, std::move(C));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (!same_block(i, j)) p.H(i, j) = h_scale * rng.normal();
    }
  }
  return p;
}

}  // namespace ceem
