#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "ceem/model.hpp"

namespace ceem {

/// Linear time-invariant model x' = A x + B u, y = C x + D u.
/// Parameters are a chosen subset of A's entries; the rest of A and all of
/// B, C, D are fixed.
class LtiModel final : public SystemModel {
 public:
  /// `free_entries` empty means every entry of A is a parameter (column-major).
  LtiModel(Matrix A, Matrix B, Matrix C, Matrix D,
           std::vector<std::pair<Index, Index>> free_entries = {});
  /// Autonomous variant with zero-width B and D.
  LtiModel(Matrix A, Matrix C, std::vector<std::pair<Index, Index>> free_entries = {});

  std::string id() const override { return "lti"; }
  Index state_dim() const override { return A_.rows(); }
  Index obs_dim() const override { return C_.rows(); }
  Index input_dim() const override { return B_.cols(); }
  const ParamLayout& layout() const override { return layout_; }

  Vector step(const Vector& x, const Vector& u, long t, const Vector& theta) const override;
  Vector observe(const Vector& x, const Vector& u, long t, const Vector& theta) const override;
  Jacobians step_jacobians(const Vector& x, const Vector& u, long t,
                           const Vector& theta) const override;
  Jacobians observe_jacobians(const Vector& x, const Vector& u, long t,
                              const Vector& theta) const override;
  std::optional<Matrix> linear_observation() const override;

  /// A with the free entries replaced by theta.
  Matrix transition(const Vector& theta) const;
  /// Current values of the free entries of the base A.
  Vector nominal_theta() const;

  const Matrix& B() const { return B_; }
  const Matrix& C() const { return C_; }
  const Matrix& D() const { return D_; }
  const std::vector<std::pair<Index, Index>>& free_entries() const { return free_; }

 private:
  Matrix A_, B_, C_, D_;
  std::vector<std::pair<Index, Index>> free_;
  ParamLayout layout_;
};

}  // namespace ceem
