#include "ceem/continuous.hpp"

namespace ceem {

DiscretizedModel::DiscretizedModel(std::shared_ptr<const ContinuousDynamics> drift,
                                   Matrix observation, double dt)
    : drift_(std::move(drift)), C_(std::move(observation)), dt_(dt) {
  if (!drift_) throw ContractError("DiscretizedModel: null drift");
  if (!(dt_ > 0.0)) throw ConfigError("DiscretizedModel: dt must be positive");
  require_dim(C_.cols(), drift_->state_dim(), "observation matrix columns");
}

Vector DiscretizedModel::step(const Vector& x, const Vector& u, long t,
                              const Vector& theta) const {
  const double h = dt_;
  const double time = static_cast<double>(t) * h;
  const Vector k1 = drift_->drift(x, u, time, theta);
  const Vector k2 = drift_->drift(x + 0.5 * h * k1, u, time + 0.5 * h, theta);
  const Vector k3 = drift_->drift(x + 0.5 * h * k2, u, time + 0.5 * h, theta);
  const Vector k4 = drift_->drift(x + h * k3, u, time + h, theta);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vector DiscretizedModel::observe(const Vector& x, const Vector&, long, const Vector&) const {
  return C_ * x;
}

Jacobians DiscretizedModel::step_jacobians(const Vector& x, const Vector& u, long t,
                                           const Vector& theta) const {
  const double h = dt_;
  const double time = static_cast<double>(t) * h;
  const Index n = x.size();
  const Matrix I = Matrix::Identity(n, n);

  // Stage i evaluates the drift at x + c_i h k_{i-1}; chain rule through
  // each stage gives dk_i/dx and dk_i/dtheta.
  const Vector k1 = drift_->drift(x, u, time, theta);
  const Jacobians J1 = drift_->drift_jacobians(x, u, time, theta);
  const Matrix& dk1_dx = J1.wrt_state;
  const Matrix& dk1_dp = J1.wrt_params;

  const Vector x2 = x + 0.5 * h * k1;
  const Vector k2 = drift_->drift(x2, u, time + 0.5 * h, theta);
  const Jacobians J2 = drift_->drift_jacobians(x2, u, time + 0.5 * h, theta);
  const Matrix dk2_dx = J2.wrt_state * (I + 0.5 * h * dk1_dx);
  const Matrix dk2_dp = J2.wrt_params + 0.5 * h * J2.wrt_state * dk1_dp;

  const Vector x3 = x + 0.5 * h * k2;
  const Jacobians J3 = drift_->drift_jacobians(x3, u, time + 0.5 * h, theta);
  const Vector k3 = drift_->drift(x3, u, time + 0.5 * h, theta);
  const Matrix dk3_dx = J3.wrt_state * (I + 0.5 * h * dk2_dx);
  const Matrix dk3_dp = J3.wrt_params + 0.5 * h * J3.wrt_state * dk2_dp;

  const Vector x4 = x + h * k3;
  const Jacobians J4 = drift_->drift_jacobians(x4, u, time + h, theta);
  const Matrix dk4_dx = J4.wrt_state * (I + h * dk3_dx);
  const Matrix dk4_dp = J4.wrt_params + h * J4.wrt_state * dk3_dp;

  Jacobians out;
  out.wrt_state = I + (h / 6.0) * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx);
  out.wrt_params = (h / 6.0) * (dk1_dp + 2.0 * dk2_dp + 2.0 * dk3_dp + dk4_dp);
  out.approximate = J1.approximate || J2.approximate || J3.approximate || J4.approximate;
  return out;
}

Jacobians DiscretizedModel::observe_jacobians(const Vector&, const Vector&, long,
                                              const Vector&) const {
  return {C_, Matrix::Zero(C_.rows(), layout().size()), false};
}

}  // namespace ceem
