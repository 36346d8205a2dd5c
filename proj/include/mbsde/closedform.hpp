#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mbsde/paths.hpp"
#include "mbsde/regression.hpp"
#include "mbsde/solution.hpp"

namespace mbsde {

/// xi = 2a(b-a) tau_b - 2a + shift_d.
struct HittingAffine {
  double a = 1.0;
  double b = 1.0;
  double shift_d = 0.0;
};

/// xi_k = W_1^2 / (2(1 + 1/k)); k empty means W_1^2 / 2.
struct SquareEndpoint {
  std::optional<unsigned> k;
};

/// xi = phi(W_T).
struct EndpointFunctional {
  std::function<double(double)> phi;
};

/// xi = functional of a whole grid path.
struct CustomFunctional {
  std::function<double(const TimeGrid&, std::span<const double>)> f;
};

using TerminalSpec = std::variant<HittingAffine, SquareEndpoint, EndpointFunctional, CustomFunctional>;

double hitting_terminal(const HittingAffine& h, double tau);
inline double square_endpoint_f(std::optional<unsigned> k, double t) {
  return (k ? 1.0 / static_cast<double>(*k) : 0.0) + t;
}
/// xi for a non-hitting terminal on a grid path.
double terminal_value(const TerminalSpec& terminal, const TimeGrid& grid, std::span<const double> w);
bool is_hitting(const TerminalSpec& terminal);

/// E exp(-lambda tau_b) = exp(-b (sqrt(1 + 2 lambda / b^2) - 1)), lambda >= -b^2/2.
double laplace_tau(double b, double lambda);

double first_solution_measure_value(double a, double b);
double second_solution_measure_value(double a, double b);

enum class Scenario { A, B, C };
const char* to_string(Scenario s);
Scenario classify_scenario(double a, double b);

struct ScenarioInfo {
  double a;
  double b;
  Scenario scenario;
  int n_solutions;                   // distinct solutions of the pair (first, second)
  std::vector<bool> measure_flags;   // per distinct solution, first listed first
};
ScenarioInfo scenario_info(double a, double b);

/// Initial value l of the mixed solution: d + 2ac + 2(1-a)(1-c).
double mixed_initial_value(double a, double c, double d);
/// Terminal of the mixed solution, 2a(1-a) rho_1 + d, as a HittingAffine with b = 1.
HittingAffine mixed_terminal(double a, double d);

// Single-path builders. (t, w) runs from (0, 0) to the stopping point, which
// must lie on the barrier; Y and Z follow the closed forms pointwise.
Trajectory first_solution_path(double a, double b, std::vector<double> t, std::vector<double> w);
Trajectory second_solution_path(double a, double b, std::vector<double> t, std::vector<double> w);
/// rho_c is the first point with w <= t - c.
Trajectory mixed_solution_path(double a, double c, double d, std::vector<double> t, std::vector<double> w);

// Ensemble builders: hitting times via bridge-corrected detection (or plain
// grid crossing), restart-at-crossing for the second barrier of the mixed
// solution. Paths that do not stop inside the grid are flagged truncated.
SolutionPath first_solution(double a, double b, const BrownianEnsemble& ensemble, bool bridge = true,
                            std::size_t workers = 0);
SolutionPath second_solution(double a, double b, const BrownianEnsemble& ensemble, bool bridge = true,
                             std::size_t workers = 0);
SolutionPath mixed_solution(double a, double c, double d, const BrownianEnsemble& ensemble,
                            bool bridge = true, std::size_t workers = 0);

/// Y^k_t = W_t^2 / (2 f_k(t)) + ln(f_k(1) / f_k(t)) / 2, Z^k_t = W_t / f_k(t),
/// f_k(t) = 1/k + t. For k = infinity Y_0 is NaN (undefined at the origin).
SolutionPath square_endpoint_solution(std::optional<unsigned> k, const BrownianEnsemble& ensemble);

enum class ConditionalEngine { Regression, GaussHermite };

struct ExplicitLogConfig {
  ConditionalEngine engine = ConditionalEngine::Regression;
  RegressionConfig regression{};
  std::size_t quadrature_nodes = 64;
  bool bridge = true;     // hitting terminals
  bool check_moment = true;
};

/// Y_t = ln(M_t) / (2 alpha), Z_t = H_t / (2 alpha M_t) with
/// M_t = E[exp(2 alpha xi) | F_t] = M_0 + int H dW. Y is absolute, so Y_T = xi.
/// Throws DivergingMomentError when the sample mean of exp(2 alpha xi) does
/// not stabilize under sample doubling.
SolutionPath explicit_log_solution(double alpha, const TerminalSpec& terminal, const BrownianEnsemble& ensemble,
                                   const ExplicitLogConfig& cfg = {});

/// Gauss-Hermite nodes and weights for the standard normal law (weights sum to 1).
struct GaussHermiteRule {
  std::vector<double> x;
  std::vector<double> w;
};
GaussHermiteRule gauss_hermite_normal(std::size_t n);

/// Moves a solution of the random-horizon BSDE on time_changed_ensemble(tilde)
/// to [0, 1]: y_s = Y_{rho^{-1}(s)}, z_s = h(s) Z_{rho^{-1}(s)}, and the driving
/// path becomes tilde's W. Stopped paths end at rho(tau).
SolutionPath time_change_solution(const SolutionPath& solution, const BrownianEnsemble& tilde);

}  // namespace mbsde
