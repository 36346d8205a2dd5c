#include "mbsde/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mbsde/stats.hpp"

namespace mbsde {

std::optional<PolyFit> fit_polynomial(std::span<const double> x, std::span<const double> y,
                                      std::span<const double> log_w, const RegressionConfig& cfg) {
  const std::size_t n = x.size();
  if (y.size() != n || (!log_w.empty() && log_w.size() != n))
    throw std::invalid_argument("regression inputs differ in length");
  if (n == 0) return std::nullopt;
  const double ess = log_w.empty() ? static_cast<double>(n) : effective_sample_size(log_w);
  if (ess < cfg.min_effective) return std::nullopt;

  double top = 0.0;
  if (!log_w.empty()) top = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> w(n, 1.0);
  if (!log_w.empty())
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(log_w[i] - top);

  double sw = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    mx += w[i] * x[i];
  }
  mx /= sw;
  double vx = 0.0;
  for (std::size_t i = 0; i < n; ++i) vx += w[i] * (x[i] - mx) * (x[i] - mx);
  vx /= sw;

  PolyFit fit;
  fit.center = mx;
  fit.scale = vx > 1e-300 ? std::sqrt(vx) : 1.0;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  fit.lo = *lo;
  fit.hi = *hi;
  const auto p = static_cast<Eigen::Index>(cfg.degree + 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd phi(p);
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] == 0.0) continue;
    const double u = (x[i] - fit.center) / fit.scale;
    phi[0] = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) phi[j] = phi[j - 1] * u;
    a.selfadjointView<Eigen::Lower>().rankUpdate(phi, w[i]);
    rhs += (w[i] * y[i]) * phi;
  }
  a = a.selfadjointView<Eigen::Lower>();
  const double ridge = cfg.ridge * std::max(a.diagonal().mean(), std::numeric_limits<double>::min());
  a.diagonal().array() += ridge;
  fit.beta = a.ldlt().solve(rhs);
  if (!fit.beta.allFinite()) return std::nullopt;
  return fit;
}

}  // namespace mbsde
