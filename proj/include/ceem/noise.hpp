#pragma once

#include "ceem/types.hpp"

namespace ceem {

/// Diagonal Gaussian process/observation noise, stored as std-devs.
struct GaussianNoiseSpec {
  Vector sigma_w;  // length n
  Vector sigma_v;  // length m

  static GaussianNoiseSpec isotropic(Index n, double sw, Index m, double sv) {
    return {Vector::Constant(n, sw), Vector::Constant(m, sv)};
  }

  /// Throws ConfigError unless every std-dev is strictly positive and finite.
  void validate_for_density() const;
};

enum class NoiseKind { process, observation };

/// Sum over coordinates of -0.5 log(2 pi s_i^2) - r_i^2 / (2 s_i^2).
double log_prob_noise(const GaussianNoiseSpec& spec, const Eigen::Ref<const Vector>& residual,
                      NoiseKind which);

/// Same density for an arbitrary std-dev vector.
double diag_gaussian_logpdf(const Eigen::Ref<const Vector>& residual,
                            const Eigen::Ref<const Vector>& stddev);

/// The residual-independent part: -0.5 sum log(2 pi s_i^2).
double diag_gaussian_log_normalizer(const Eigen::Ref<const Vector>& stddev);

}  // namespace ceem
