#pragma once

#include <functional>

#include "ceem/types.hpp"

namespace ceem {

/// Continuous drift x_dot = F(x, u, t).
using DriftFn = std::function<Vector(const Vector& x, const Vector& u, double t)>;

/// Classical fourth-order Runge-Kutta step with u held over [t, t + dt].
/// Throws NumericalError (time index = floor(t / dt)) on nonfinite drift.
Vector rk4_step(const DriftFn& drift, const Vector& x, const Vector& u, double t, double dt);

}  // namespace ceem
