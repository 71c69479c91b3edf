#pragma once

#include <memory>
#include <optional>
#include <string>

#include "ceem/types.hpp"

namespace ceem {

/// Jacobians of one evaluator with respect to the state and the parameters.
/// `approximate` is set when they come from finite differences.
struct Jacobians {
  Matrix wrt_state;   // rows x n
  Matrix wrt_params;  // rows x q
  bool approximate = false;
};

/// Discrete-time parametric state-space model
///   x_{t+1} = f_theta(x_t, u_t, t) + w_t,   y_t = g_theta(x_t, u_t, t) + v_t.
///
/// Implementations are immutable after construction; evaluators take theta
/// explicitly so one model instance can be shared across threads and across
/// optimizer iterates.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual std::string id() const = 0;
  virtual Index state_dim() const = 0;
  virtual Index obs_dim() const = 0;
  virtual Index input_dim() const = 0;
  virtual const ParamLayout& layout() const = 0;
  Index param_dim() const { return layout().size(); }

  /// Sample period in seconds. 1 for natively discrete models.
  virtual double dt() const { return 1.0; }

  virtual Vector step(const Vector& x, const Vector& u, long t, const Vector& theta) const = 0;
  virtual Vector observe(const Vector& x, const Vector& u, long t, const Vector& theta) const = 0;

  /// Default implementations use central differences and flag the result.
  virtual Jacobians step_jacobians(const Vector& x, const Vector& u, long t,
                                   const Vector& theta) const;
  virtual Jacobians observe_jacobians(const Vector& x, const Vector& u, long t,
                                      const Vector& theta) const;

  /// The matrix C when g_theta(x, u, t) = C x for every theta, u and t.
  virtual std::optional<Matrix> linear_observation() const { return std::nullopt; }
};

using ModelPtr = std::shared_ptr<const SystemModel>;

/// Checked entry points. Dimension mismatches raise ContractError.
Vector dynamics_step(const SystemModel& model, const Vector& x, const Vector& u, long t,
                     const Vector& theta);
Vector observe(const SystemModel& model, const Vector& x, const Vector& u, long t,
               const Vector& theta);

struct ModelJacobians {
  Matrix df_dx, df_dtheta, dg_dx, dg_dtheta;
  bool approximate = false;
};
ModelJacobians jacobians(const SystemModel& model, const Vector& x, const Vector& u, long t,
                         const Vector& theta);

/// Central-difference Jacobian of `fn` at `at`, step h * max(1, |at_i|).
template <class Fn>
Matrix central_difference(Fn&& fn, const Vector& at, double h = 1e-5) {
  const Vector f0 = fn(at);
  Matrix out(f0.size(), at.size());
  Vector probe = at;
  for (Index i = 0; i < at.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(at[i]));
    probe[i] = at[i] + step;
    const Vector hi = fn(probe);
    probe[i] = at[i] - step;
    const Vector lo = fn(probe);
    probe[i] = at[i];
    out.col(i) = (hi - lo) / (2.0 * step);
  }
  return out;
}

/// An input sequence of width 0 with T columns; for autonomous models.
inline Matrix no_inputs(Index T) { return Matrix(0, T); }

}  // namespace ceem
