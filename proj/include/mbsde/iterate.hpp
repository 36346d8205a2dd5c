#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mbsde/closedform.hpp"
#include "mbsde/generators.hpp"
#include "mbsde/paths.hpp"
#include "mbsde/regression.hpp"
#include "mbsde/solution.hpp"
#include "mbsde/verify.hpp"

namespace mbsde {

/// Weights e^{beta Phi_t} and exponent p of the boundedness diagnostics.
struct DiagnosticsConfig {
  double beta = 1.0;
  double p = 2.0;
  std::size_t track_every = 1;
};

struct IterateConfig {
  RegressionConfig regression{};
  std::size_t max_iter = 30;
  double tol = 1e-4;
  DiagnosticsConfig diagnostics{};
  double min_ess_fraction = 0.05;
  std::size_t stall_window = 5;  // non-decreasing dist_L2 this many times in a row -> error
  bool bridge = true;            // hitting terminals
  std::size_t workers = 0;
};

/// One row of the iteration trace.
struct TraceRow {
  std::size_t n = 0;
  double dist_l2 = 0.0;       // || Z^n - Z^{n-1} || under the latest weights and e^{beta Phi}
  double dist_l2_base = 0.0;  // same under the base measure, without e^{beta Phi}
  double ess = 0.0;
  double y0 = 0.0;
  double sup_weighted_y = 0.0;  // E sup_t e^{beta Phi_t} |Y_t|^p
  double weighted_z_l2 = 0.0;   // E (int e^{beta Phi} Z^2 dt)^{p/2}
  double weight_mean = 1.0;     // mean of R^n_T over paths
  double weight_se = 0.0;
  double martingale_defect = 0.0;  // max over nodes of |weighted mean of dY|
};

struct IterationState {
  std::size_t n = 0;
  std::vector<double> log_weights;  // ln R^n_T per path
  std::vector<PolyFit> z_field;     // per node, Z^n as a function of W_t
  double y0 = 0.0;
  double dist_l2 = 0.0;
  double ess = 0.0;
};

struct IterateResult {
  IterationState state;
  std::vector<TraceRow> trace;
  SolutionPath solution;
  MeasureReport report;
  bool converged = false;
  std::string stop_reason;
  std::size_t dropped_truncated = 0;  // hitting terminals: paths that never stopped
};

/// Iterates conditional-expectation projection under R^n, regression of
/// (Y_{t+dt} - Y_t) dW^n / dt for Z^{n+1}, and re-tilting
/// ln R^{n+1} = sum g(t, Z^{n+1}) dW - 1/2 sum g^2 dt, until dist_L2 < tol,
/// the weights stop changing, or max_iter. `on_row` sees every trace row as
/// it is produced, including the rows before an error is thrown.
/// Throws DegeneracyError (ESS below the floor) and NonConvergenceError.
IterateResult iterate_measure_solution(const TerminalSpec& terminal, const GeneratorSpec& spec,
                                       const BrownianEnsemble& ensemble, const IterateConfig& cfg = {},
                                       const std::function<void(const TraceRow&)>& on_row = {});

struct ConvergenceTrace {
  std::vector<TraceRow> rows;
  std::optional<double> ratio;  // fitted geometric decay of dist_L2
};

/// Least-squares fit of log dist_L2 against n over rows with dist_L2 > 0.
ConvergenceTrace convergence_trace(const std::vector<TraceRow>& rows);

struct BoundednessReport {
  double sup_weighted_y = 0.0;
  double weighted_z_l2 = 0.0;
  bool bounded = true;  // last value <= 2 x median of the history, for both
};

BoundednessReport boundedness_monitor(const std::vector<TraceRow>& rows);

/// max over node pairs (s, t) of E^R |W_t - W_s|^4 / |t - s|^2 under the
/// weights exp(log_weights); pairs are every `stride`-th node pair.
double tightness_statistic(const BrownianEnsemble& ensemble, const std::vector<double>& log_weights,
                           std::size_t stride = 5);

/// CSV "n,dist_L2,ess,Y0,sup_weighted_Y,weighted_Z_L2".
void write_trace_csv(const std::vector<TraceRow>& rows, const std::string& file);

}  // namespace mbsde
