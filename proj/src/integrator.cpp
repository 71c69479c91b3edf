#include "ceem/integrator.hpp"

#include <cmath>

namespace ceem {

Vector rk4_step(const DriftFn& drift, const Vector& x, const Vector& u, double t, double dt) {
  if (!(dt > 0.0)) throw ContractError("rk4_step: dt must be positive");
  auto eval = [&](const Vector& at, double time) {
    Vector k = drift(at, u, time);
    require_dim(k.size(), x.size(), "drift output");
    if (!k.allFinite()) {
      throw NumericalError("nonfinite drift at t=" + std::to_string(time),
                           static_cast<long>(std::floor(t / dt)));
    }
    return k;
  };
  const double h = dt;
  const Vector k1 = eval(x, t);
  const Vector k2 = eval(x + 0.5 * h * k1, t + 0.5 * h);
  const Vector k3 = eval(x + 0.5 * h * k2, t + 0.5 * h);
  const Vector k4 = eval(x + h * k3, t + h);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace ceem
