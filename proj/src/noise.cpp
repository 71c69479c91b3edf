#include "ceem/noise.hpp"

#include <cmath>
#include <numbers>

namespace ceem {

void GaussianNoiseSpec::validate_for_density() const {
  auto check = [](const Vector& s, const char* name) {
    for (Index i = 0; i < s.size(); ++i) {
      if (!(s[i] > 0.0) || !std::isfinite(s[i])) {
        throw ConfigError(std::string(name) + "[" + std::to_string(i) +
                          "] must be strictly positive");
      }
    }
  };
  check(sigma_w, "sigma_w");
  check(sigma_v, "sigma_v");
}

double diag_gaussian_log_normalizer(const Eigen::Ref<const Vector>& stddev) {
  double acc = 0.0;
  for (Index i = 0; i < stddev.size(); ++i) {
    acc -= 0.5 * std::log(2.0 * std::numbers::pi * stddev[i] * stddev[i]);
  }
  return acc;
}

double diag_gaussian_logpdf(const Eigen::Ref<const Vector>& residual,
                            const Eigen::Ref<const Vector>& stddev) {
  require_dim(residual.size(), stddev.size(), "residual");
  return diag_gaussian_log_normalizer(stddev) -
         0.5 * residual.cwiseQuotient(stddev).squaredNorm();
}

double log_prob_noise(const GaussianNoiseSpec& spec, const Eigen::Ref<const Vector>& residual,
                      NoiseKind which) {
  const Vector& s = which == NoiseKind::process ? spec.sigma_w : spec.sigma_v;
  for (Index i = 0; i < s.size(); ++i) {
    if (!(s[i] > 0.0)) throw ConfigError("noise std-devs must be strictly positive");
  }
  return diag_gaussian_logpdf(residual, s);
}

}  // namespace ceem
