#include "ceem/model.hpp"

namespace ceem {

Jacobians SystemModel::step_jacobians(const Vector& x, const Vector& u, long t,
                                      const Vector& theta) const {
  Jacobians J;
  J.wrt_state = central_difference([&](const Vector& z) { return step(z, u, t, theta); }, x);
  J.wrt_params = central_difference([&](const Vector& p) { return step(x, u, t, p); }, theta);
  J.approximate = true;
  return J;
}

Jacobians SystemModel::observe_jacobians(const Vector& x, const Vector& u, long t,
                                         const Vector& theta) const {
  Jacobians J;
  J.wrt_state = central_difference([&](const Vector& z) { return observe(z, u, t, theta); }, x);
  J.wrt_params = central_difference([&](const Vector& p) { return observe(x, u, t, p); }, theta);
  J.approximate = true;
  return J;
}

namespace {
void check_args(const SystemModel& model, const Vector& x, const Vector& u, const Vector& theta) {
  require_dim(x.size(), model.state_dim(), "state");
  require_dim(u.size(), model.input_dim(), "input");
  require_dim(theta.size(), model.param_dim(), "parameters");
}
}  // namespace

Vector dynamics_step(const SystemModel& model, const Vector& x, const Vector& u, long t,
                     const Vector& theta) {
  check_args(model, x, u, theta);
  return model.step(x, u, t, theta);
}

Vector observe(const SystemModel& model, const Vector& x, const Vector& u, long t,
               const Vector& theta) {
  check_args(model, x, u, theta);
  return model.observe(x, u, t, theta);
}

ModelJacobians jacobians(const SystemModel& model, const Vector& x, const Vector& u, long t,
                         const Vector& theta) {
  check_args(model, x, u, theta);
  auto f = model.step_jacobians(x, u, t, theta);
  auto g = model.observe_jacobians(x, u, t, theta);
  return {std::move(f.wrt_state), std::move(f.wrt_params), std::move(g.wrt_state),
          std::move(g.wrt_params), f.approximate || g.approximate};
}

}  // namespace ceem
