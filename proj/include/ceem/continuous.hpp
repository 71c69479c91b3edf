#pragma once

#include <memory>

#include "ceem/model.hpp"

namespace ceem {

/// Parametric continuous-time drift with analytic Jacobians.
class ContinuousDynamics {
 public:
  virtual ~ContinuousDynamics() = default;
  virtual std::string id() const = 0;
  virtual Index state_dim() const = 0;
  virtual Index input_dim() const { return 0; }
  virtual const ParamLayout& layout() const = 0;

  virtual Vector drift(const Vector& x, const Vector& u, double t, const Vector& theta) const = 0;
  virtual Jacobians drift_jacobians(const Vector& x, const Vector& u, double t,
                                    const Vector& theta) const = 0;
};

/// Discrete model obtained by one RK4 step of a continuous drift per sample
/// period, observed through a known matrix: y = C x.
///
/// Jacobians of the RK4 map are propagated exactly through the four stages.
class DiscretizedModel final : public SystemModel {
 public:
  DiscretizedModel(std::shared_ptr<const ContinuousDynamics> drift, Matrix observation,
                   double dt);

  std::string id() const override { return drift_->id(); }
  Index state_dim() const override { return drift_->state_dim(); }
  Index obs_dim() const override { return C_.rows(); }
  Index input_dim() const override { return drift_->input_dim(); }
  const ParamLayout& layout() const override { return drift_->layout(); }
  double dt() const override { return dt_; }

  Vector step(const Vector& x, const Vector& u, long t, const Vector& theta) const override;
  Vector observe(const Vector& x, const Vector& u, long t, const Vector& theta) const override;
  Jacobians step_jacobians(const Vector& x, const Vector& u, long t,
                           const Vector& theta) const override;
  Jacobians observe_jacobians(const Vector& x, const Vector& u, long t,
                              const Vector& theta) const override;
  std::optional<Matrix> linear_observation() const override { return C_; }

  const ContinuousDynamics& continuous() const { return *drift_; }
  const Matrix& observation_matrix() const { return C_; }

 private:
  std::shared_ptr<const ContinuousDynamics> drift_;
  Matrix C_;
  double dt_;
};

}  // namespace ceem
