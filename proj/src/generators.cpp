#include "mbsde/generators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mbsde/rng.hpp"

namespace mbsde {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

}  // namespace

LinearBounded LinearBounded::constant(double b) {
  return LinearBounded{[b](double) { return b; }, std::abs(b)};
}

GeneratorSpec::GeneratorSpec(Variant v) : v_(std::move(v)) {
  std::visit(Overloaded{
                 [](const Quadratic& q) {
                   if (!std::isfinite(q.alpha)) throw std::invalid_argument("alpha must be finite");
                 },
                 [](const LinearBounded& l) {
                   if (!l.coefficient) throw std::invalid_argument("linear generator needs a coefficient");
                   if (!(l.bound >= 0.0)) throw std::invalid_argument("linear bound must be nonnegative");
                 },
                 [](const LipschitzCustom& c) {
                   if (!c.f) throw std::invalid_argument("custom generator needs f");
                 },
             },
             v_);
}

double GeneratorSpec::f(double t, double z) const {
  return std::visit(Overloaded{
                        [&](const Quadratic& q) { return q.alpha * z * z; },
                        [&](const LinearBounded& l) { return l.coefficient(t) * z; },
                        [&](const LipschitzCustom& c) { return c.f(t, z); },
                    },
                    v_);
}

double GeneratorSpec::g(double t, double z) const {
  if (z == 0.0) return 0.0;
  return std::visit(Overloaded{
                        [&](const Quadratic& q) { return q.alpha * z; },
                        [&](const LinearBounded& l) { return l.coefficient(t); },
                        [&](const LipschitzCustom& c) { return c.f(t, z) / z; },
                    },
                    v_);
}

double GeneratorSpec::growth_constant() const {
  if (claimed_c_) return *claimed_c_;
  return std::visit(Overloaded{
                        [](const Quadratic& q) { return std::abs(q.alpha); },
                        [](const LinearBounded& l) { return l.bound; },
                        [](const LipschitzCustom& c) { return c.growth_constant; },
                    },
                    v_);
}

std::optional<double> GeneratorSpec::phi(double t) const {
  return std::visit(Overloaded{
                        [](const Quadratic&) -> std::optional<double> { return std::nullopt; },
                        [](const LinearBounded& l) -> std::optional<double> { return l.bound; },
                        [&](const LipschitzCustom& c) -> std::optional<double> {
                          if (!c.phi_bound) return std::nullopt;
                          return c.phi_bound(t);
                        },
                    },
                    v_);
}

std::string GeneratorSpec::name() const {
  return std::visit(Overloaded{
                        [](const Quadratic&) { return std::string("quadratic"); },
                        [](const LinearBounded&) { return std::string("linear"); },
                        [](const LipschitzCustom&) { return std::string("custom"); },
                    },
                    v_);
}

GeneratorSpec GeneratorSpec::with_growth_constant(double c) const {
  GeneratorSpec out = *this;
  out.claimed_c_ = c;
  return out;
}

double eval_f(const GeneratorSpec& spec, double t, double z) { return spec.f(t, z); }
double eval_g(const GeneratorSpec& spec, double t, double z) { return spec.g(t, z); }

namespace {

// Lattice t in {0, T/4, ..., T}, z in [-10, 10] step 1/4, then random fill.
template <class Visit>
std::size_t scan_samples(double horizon, std::size_t budget, std::uint64_t seed, Visit&& visit) {
  std::size_t n = 0;
  for (int i = 0; i <= 4; ++i) {
    const double t = horizon * i / 4.0;
    for (int j = -40; j <= 40; ++j) {
      visit(t, 0.25 * j);
      ++n;
    }
  }
  const Philox4x32 gen(seed);
  const PathStream stream(gen, 0);
  for (std::size_t k = 0; n < budget; ++k, ++n) {
    const double t = horizon * stream.bridge_uniform(k, 0);
    const double z = 100.0 * (stream.bridge_uniform(k, 1) - 0.5);
    visit(t, z);
  }
  return n;
}

}  // namespace

H1Check check_H1(const GeneratorSpec& spec, double horizon, std::size_t sample_budget, std::uint64_t seed) {
  H1Check out;
  const double c = spec.growth_constant();
  out.samples = scan_samples(horizon, sample_budget, seed, [&](double t, double z) {
    const double val = std::abs(spec.f(t, z));
    const double bound = c * (1.0 + z * z);
    if (val > bound * (1.0 + 1e-12)) out.violations.push_back({H1Violation::Kind::Growth, t, z, val, bound});
    if (std::abs(z) < 1e-2) return;  // z = 0 is the defined-away point
    const double h = 1e-3 * std::max(1.0, std::abs(z));
    const double coarse = std::abs(spec.g(t, z + h) - spec.g(t, z - h));
    const double fine = std::abs(spec.g(t, z + h / 16) - spec.g(t, z - h / 16));
    const double scale = 1e-8 * std::max(1.0, std::abs(spec.g(t, z)));
    if (fine > scale && fine > 0.5 * coarse)
      out.violations.push_back({H1Violation::Kind::Continuity, t, z, fine, scale});
  });
  out.ok = out.violations.empty();
  return out;
}

H1Check check_lipschitz(const GeneratorSpec& spec, double horizon, std::size_t sample_budget,
                        std::uint64_t seed) {
  if (!spec.phi(0.0)) throw std::invalid_argument("generator has no Lipschitz bound phi");
  H1Check out;
  out.samples = scan_samples(horizon, sample_budget, seed, [&](double t, double z) {
    const double phi = *spec.phi(t);
    for (double dz : {1e-3, 0.5, 3.0}) {
      const double diff = std::abs(spec.f(t, z + dz) - spec.f(t, z));
      if (diff > phi * dz * (1.0 + 1e-10) + 1e-14)
        out.violations.push_back({H1Violation::Kind::Growth, t, z, diff / dz, phi});
    }
  });
  out.ok = out.violations.empty();
  return out;
}

PhiIntegral phi_integral(const GeneratorSpec& spec, const TimeGrid& grid) {
  std::vector<double> values(grid.n_nodes(), 0.0);
  if (spec.phi(0.0)) {
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
      const double a = *spec.phi(grid[k]);
      const double b = *spec.phi(grid[k + 1]);
      values[k + 1] = values[k] + 0.5 * (a * a + b * b) * grid.dt(k);
    }
  }
  return {grid, std::move(values)};
}

double psi_of_kappa(double kappa) {
  if (!(kappa > 1.0)) throw std::invalid_argument("kappa must exceed 1");
  const double r = std::sqrt(kappa);
  return 1.0 + 4.0 * r / ((r - 1.0) * (r - 1.0));
}

double psi_of_kappa_product_form(double kappa) {
  if (!(kappa > 1.0)) throw std::invalid_argument("kappa must exceed 1");
  const double r = std::sqrt(kappa);
  return (1.0 + (2.0 * r + 1.0) / kappa) * kappa / ((r - 1.0) * (r - 1.0));
}

namespace {

// theta as a function of s = q - 1 > 0; ln((2q-1)/(2(q-1))) = log1p(1/(2s)).
double theta_shifted(double s) {
  const double q = 1.0 + s;
  const double y = std::log1p(0.5 / s) / (q * q);
  return y / (std::sqrt(1.0 + y) + 1.0);
}

}  // namespace

double theta(double q) {
  if (!(q > 1.0)) throw std::invalid_argument("theta is defined for q > 1");
  return theta_shifted(q - 1.0);
}

double theta_inverse(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument("theta_inverse needs x > 0");
  // Bisection on log(q - 1); theta is decreasing in q.
  double lo = std::log(1e-300);
  double hi = 0.0;
  if (theta_shifted(std::exp(lo)) < x) throw std::invalid_argument("x exceeds the representable range of theta");
  while (theta_shifted(std::exp(hi)) > x) {
    hi += 2.0;
    if (hi > 700.0) throw std::invalid_argument("x below the representable range of theta");
  }
  for (int i = 0; i < 400 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (theta_shifted(std::exp(mid)) > x) lo = mid;
    else hi = mid;
  }
  return 1.0 + std::exp(0.5 * (lo + hi));
}

double psi_of_bmo(double bmo_norm) {
  const double q = theta_inverse(bmo_norm);
  return (1.0 + 0.5 * bmo_norm) * q / (q - 1.0);
}

double exp_integrability_bound(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("need a > 0 and b > 0");
  if (a == b) return std::numeric_limits<double>::infinity();
  return b * b / (4.0 * a * std::abs(b - a));
}

ConstantsReport constants_report(std::optional<double> kappa, std::optional<double> bmo_norm,
                                 std::optional<double> gamma, std::optional<double> alpha_H3,
                                 std::optional<double> delta_H3) {
  if (!kappa && !bmo_norm) throw std::invalid_argument("constants need kappa or bmo_norm");
  ConstantsReport r;
  r.kappa = kappa;
  r.bmo_norm = bmo_norm;
  r.gamma = gamma;
  r.alpha_H3 = alpha_H3;
  r.delta_H3 = delta_H3;
  if (kappa) r.psi_kappa = psi_of_kappa(*kappa);
  if (bmo_norm) {
    r.theta_inverse = theta_inverse(*bmo_norm);
    r.psi_bmo = psi_of_bmo(*bmo_norm);
  }
  return r;
}

}  // namespace mbsde
