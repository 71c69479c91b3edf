#pragma once

#include <memory>

#include "ceem/continuous.hpp"
#include "ceem/rng.hpp"

namespace ceem {

/// K coupled Lorenz attractors. State layout is (x1, x2, x3) per attractor,
/// attractors concatenated.
struct LorenzParams {
  Vector sigma, rho, beta;  // length K each
  Matrix H;                 // 3K x 3K coupling, zero 3x3 diagonal blocks
  Matrix C;                 // (rows) x 3K observation matrix, full row rank

  Index num_attractors() const { return sigma.size(); }

  /// Throws ConfigError on shape errors, self-coupling or rank-deficient C.
  void validate() const;

  /// Nominal (10, 28, 8/3) attractors with zero coupling and the given C.
  static LorenzParams nominal(Index K, Matrix C);
};

/// Flat parameter layout [sigma_{1:K}, rho_{1:K}, beta_{1:K}, H_offdiag]
/// where H_offdiag lists the entries outside the diagonal 3x3 blocks in
/// row-major order.
ParamLayout lorenz_layout(Index K);
Vector lorenz_theta(const LorenzParams& params);
/// Rebuilds sigma/rho/beta/H from theta; C is copied from `observation`.
LorenzParams lorenz_params_from_theta(Index K, const Vector& theta, const Matrix& observation);

/// x_dot = x_dot_tilde + H x.
Vector lorenz_drift(const LorenzParams& params, const Vector& x);

class LorenzDrift final : public ContinuousDynamics {
 public:
  explicit LorenzDrift(Index num_attractors);

  std::string id() const override { return num_attractors_ == 1 ? "lorenz" : "coupled_lorenz"; }
  Index state_dim() const override { return 3 * num_attractors_; }
  const ParamLayout& layout() const override { return layout_; }
  Index num_attractors() const { return num_attractors_; }

  Vector drift(const Vector& x, const Vector& u, double t, const Vector& theta) const override;
  Jacobians drift_jacobians(const Vector& x, const Vector& u, double t,
                            const Vector& theta) const override;

 private:
  Index num_attractors_;
  ParamLayout layout_;
  // (row, col) of each off-diagonal-block H entry, in theta order.
  std::vector<std::pair<Index, Index>> coupling_entries_;
};

std::shared_ptr<const DiscretizedModel> make_lorenz_model(Index num_attractors,
                                                          const Matrix& observation, double dt);

/// Random benchmark structure: nominal attractor constants, H entries drawn
/// N(0, h_scale^2) outside the diagonal blocks, and C with standard normal
/// entries of shape (obs_rows x 3K), redrawn until it has full row rank.
LorenzParams sample_lorenz_structure(Index K, double h_scale, Index obs_rows, Rng& rng);

}  // namespace ceem
