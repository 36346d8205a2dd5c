#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>

namespace mbsde {

/// Polynomial least squares in one standardized state variable:
/// y ~ sum_j beta_j ((x - center) / scale)^j, with x clamped to the range
/// seen by the fit.
struct PolyFit {
  double center = 0.0;
  double scale = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;

  [[nodiscard]] double operator()(double x) const {
    const double u = (std::clamp(x, lo, hi) - center) / scale;
    double acc = 0.0;
    for (Eigen::Index j = beta.size() - 1; j >= 0; --j) acc = acc * u + beta[j];
    return acc;
  }
};

struct RegressionConfig {
  std::size_t degree = 4;
  double ridge = 1e-8;            // relative to the mean diagonal of the normal matrix
  double min_effective = 50.0;    // Kish effective samples needed for a fit
};

/// Weighted fit; weights are given in log domain (empty means equal weights).
/// Returns nullopt when the effective sample size is below cfg.min_effective.
std::optional<PolyFit> fit_polynomial(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> log_w, const RegressionConfig& cfg);

}  // namespace mbsde
