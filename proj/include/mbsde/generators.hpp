#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "mbsde/paths.hpp"

namespace mbsde {

/// f(s, z) = alpha z^2
struct Quadratic {
  double alpha = 0.5;
};

/// f(s, z) = b_s z with |b| <= bound.
struct LinearBounded {
  std::function<double(double)> coefficient;
  double bound = 0.0;

  static LinearBounded constant(double b);
};

/// User generator with |f(s,z) - f(s,z')| <= phi_s |z - z'|.
struct LipschitzCustom {
  std::function<double(double, double)> f;
  std::function<double(double)> phi_bound;
  double growth_constant = 1.0;  // c in |f| <= c (1 + z^2)
};

/// Generator f(s, z) of a one-dimensional BSDE together with the ratio
/// g(s, z) = f(s, z) / z (and g(s, 0) = 0). Callables must be pure.
class GeneratorSpec {
 public:
  using Variant = std::variant<Quadratic, LinearBounded, LipschitzCustom>;

  GeneratorSpec(Variant v);  // NOLINT(google-explicit-constructor)
  template <class T>
    requires(std::is_constructible_v<Variant, T> && !std::is_same_v<std::remove_cvref_t<T>, Variant> &&
             !std::is_same_v<std::remove_cvref_t<T>, GeneratorSpec>)
  GeneratorSpec(T v) : GeneratorSpec(Variant(std::move(v))) {}  // NOLINT(google-explicit-constructor)

  [[nodiscard]] double f(double t, double z) const;
  [[nodiscard]] double g(double t, double z) const;
  /// c with |f(s,z)| <= c (1 + z^2).
  [[nodiscard]] double growth_constant() const;
  /// phi_t, when the generator is globally Lipschitz in z.
  [[nodiscard]] std::optional<double> phi(double t) const;
  [[nodiscard]] const Variant& variant() const { return v_; }
  [[nodiscard]] std::string name() const;

  /// Copy with growth constant overridden (for probing claimed bounds).
  [[nodiscard]] GeneratorSpec with_growth_constant(double c) const;

 private:
  Variant v_;
  std::optional<double> claimed_c_;
};

double eval_f(const GeneratorSpec& spec, double t, double z);
double eval_g(const GeneratorSpec& spec, double t, double z);

struct H1Violation {
  enum class Kind { Growth, Continuity } kind;
  double t;
  double z;
  double value;  // |f| for growth, jump size for continuity
  double bound;
};

struct H1Check {
  bool ok = true;  // no violation found on the sampling budget; never a proof
  std::vector<H1Violation> violations;
  std::size_t samples = 0;
};

/// Samples (t, z) on a lattice plus seeded random draws; flags |f| > c (1+z^2)
/// and jumps of g in z away from the convention point z = 0.
H1Check check_H1(const GeneratorSpec& spec, double horizon, std::size_t sample_budget,
                 std::uint64_t seed = 7);

/// Samples |f(t,z) - f(t,z')| <= phi_t |z - z'|. Requires phi.
H1Check check_lipschitz(const GeneratorSpec& spec, double horizon, std::size_t sample_budget,
                        std::uint64_t seed = 11);

/// Phi_t = int_0^t phi_s^2 ds on a grid (trapezoid rule).
struct PhiIntegral {
  TimeGrid grid;
  std::vector<double> values;
};

/// Phi for the generator's phi bound; identically 0 if the generator has none.
PhiIntegral phi_integral(const GeneratorSpec& spec, const TimeGrid& grid);

double psi_of_kappa(double kappa);
/// Second printed form (1 + (2 sqrt k + 1)/k) k / (sqrt k - 1)^2; for cross-checks.
double psi_of_kappa_product_form(double kappa);
double theta(double q);
double theta_inverse(double x);
double psi_of_bmo(double bmo_norm);
/// Largest gamma with E exp(gamma |xi|) < inf for xi = 2a(b-a) tau_b - 2a;
/// +infinity when a == b.
double exp_integrability_bound(double a, double b);

struct ConstantsReport {
  std::optional<double> kappa;
  std::optional<double> psi_kappa;
  std::optional<double> bmo_norm;
  std::optional<double> theta_inverse;
  std::optional<double> psi_bmo;
  std::optional<double> gamma;
  std::optional<double> alpha_H3;
  std::optional<double> delta_H3;
};

/// At least one of kappa / bmo_norm is required.
ConstantsReport constants_report(std::optional<double> kappa, std::optional<double> bmo_norm,
                                 std::optional<double> gamma = {}, std::optional<double> alpha_H3 = {},
                                 std::optional<double> delta_H3 = {});

}  // namespace mbsde
