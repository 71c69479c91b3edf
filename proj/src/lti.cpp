#include "ceem/lti.hpp"

namespace ceem {

LtiModel::LtiModel(Matrix A, Matrix B, Matrix C, Matrix D,
                   std::vector<std::pair<Index, Index>> free_entries)
    : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)),
      free_(std::move(free_entries)) {
  const Index n = A_.rows();
  if (A_.cols() != n) throw ConfigError("LTI: A must be square");
  if (B_.rows() != n) throw ConfigError("LTI: B must have n rows");
  if (C_.cols() != n) throw ConfigError("LTI: C must have n columns");
  if (D_.rows() != C_.rows() || D_.cols() != B_.cols()) {
    throw ConfigError("LTI: D must be m x p");
  }
  if (free_.empty()) {
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) free_.emplace_back(i, j);
    }
  }
  for (const auto& [i, j] : free_) {
    if (i < 0 || i >= n || j < 0 || j >= n) throw ConfigError("LTI: free entry out of range");
  }
  layout_.add("A", static_cast<Index>(free_.size()));
}

LtiModel::LtiModel(Matrix A, Matrix C, std::vector<std::pair<Index, Index>> free_entries)
    : LtiModel(A, Matrix::Zero(A.rows(), 0), C, Matrix::Zero(C.rows(), 0),
               std::move(free_entries)) {}

Matrix LtiModel::transition(const Vector& theta) const {
  Matrix A = A_;
  for (size_t e = 0; e < free_.size(); ++e) {
    A(free_[e].first, free_[e].second) = theta[static_cast<Index>(e)];
  }
  return A;
}

Vector LtiModel::nominal_theta() const {
  Vector out(static_cast<Index>(free_.size()));
  for (size_t e = 0; e < free_.size(); ++e) {
    out[static_cast<Index>(e)] = A_(free_[e].first, free_[e].second);
  }
  return out;
}

Vector LtiModel::step(const Vector& x, const Vector& u, long, const Vector& theta) const {
  Vector out = transition(theta) * x;
  if (B_.cols() > 0) out.noalias() += B_ * u;
  return out;
}

Vector LtiModel::observe(const Vector& x, const Vector& u, long, const Vector&) const {
  Vector out = C_ * x;
  if (D_.cols() > 0) out.noalias() += D_ * u;
  return out;
}

Jacobians LtiModel::step_jacobians(const Vector& x, const Vector&, long,
                                   const Vector& theta) const {
  Jacobians J;
  J.wrt_state = transition(theta);
  J.wrt_params = Matrix::Zero(A_.rows(), layout_.size());
  for (size_t e = 0; e < free_.size(); ++e) {
    J.wrt_params(free_[e].first, static_cast<Index>(e)) = x[free_[e].second];
  }
  return J;
}

Jacobians LtiModel::observe_jacobians(const Vector&, const Vector&, long, const Vector&) const {
  return {C_, Matrix::Zero(C_.rows(), layout_.size()), false};
}

std::optional<Matrix> LtiModel::linear_observation() const {
  if (D_.cols() > 0 && D_.cwiseAbs().maxCoeff() != 0.0) return std::nullopt;
  return C_;
}

}  // namespace ceem
