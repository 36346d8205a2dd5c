#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mbsde/generators.hpp"
#include "mbsde/paths.hpp"
#include "mbsde/solution.hpp"
#include "mbsde/stats.hpp"

namespace mbsde {

// ---------------------------------------------------------------- residuals

struct ResidualSummary {
  double rms = 0.0;
  double max_abs = 0.0;
  double terminal_max_abs = 0.0;  // max |Y_terminal - xi|
  std::size_t n_points = 0;
  std::size_t n_paths = 0;
  std::size_t excluded_truncated = 0;
};

/// r_i = Y_i - (xi - sum_{j>=i} Z_j dW_j + sum_{j>=i} f(t_j, Z_j) dt_j) with
/// left-point sums, over all points with t_i >= t_from. Truncated paths and
/// undefined (NaN) points are skipped.
ResidualSummary bsde_residual(const SolutionPath& solution, const GeneratorSpec& spec, double t_from = 0.0);

// ---------------------------------------------------------------- weights

using RatioFn = std::function<double(double t, double z)>;

/// ln V_t = int g dW - 1/2 int g^2 dt and <M>_t = int g^2 dt along each
/// trajectory (left-point sums, same points as the solution).
struct GirsanovWeight {
  std::vector<std::vector<double>> log_v;
  std::vector<std::vector<double>> qv;
  std::vector<bool> truncated;
};

GirsanovWeight girsanov_weight(const SolutionPath& solution, const GeneratorSpec& spec);
GirsanovWeight girsanov_weight(const SolutionPath& solution, const RatioFn& g);

/// Per-path terminal summary used by the estimators. log_w already includes
/// ln(dP/dProposal) when paths were drawn under a tilted proposal.
struct WeightPath {
  double log_w = 0.0;
  double qv = 0.0;
  bool truncated = false;
  double tail_mass = 0.0;               // bound on the mass lost by truncation
  std::vector<double> level_log_w;      // ln weight at tau_n per level; NaN if tau_n not reached
  std::vector<double> segment_log_w;    // per barrier segment; NaN if the segment did not finish
  std::vector<double> segment_tail;     // per segment truncation mass
};

struct WeightSample {
  std::vector<double> levels;
  std::vector<WeightPath> paths;
  std::size_t n_segments = 0;
  double tilt = 0.0;
  std::size_t n_invalid = 0;  // non-finite weights, excluded
};

/// Geometric levels spanning [lo, hi] (count points, lo > 0).
std::vector<double> geometric_levels(double lo, double hi, std::size_t count);
/// Default levels for stored weights: geometric from half the median to 1.5 x the max of <M>_T.
std::vector<double> default_levels(const GirsanovWeight& weight, std::size_t count = 6);

/// Summary of stored weights. Truncated paths carry tail mass V_T (the
/// supermartingale bound on what they could still contribute).
WeightSample summarize(const GirsanovWeight& weight, const std::vector<double>& levels);

/// Hitting family with Z constant on each barrier segment.
struct HittingFamily {
  std::vector<AffineBarrier> barriers;
  std::vector<double> z;
};
HittingFamily first_family(double a, double b);
HittingFamily second_family(double a, double b);
HittingFamily mixed_family(double a, double c);

struct HittingSimConfig {
  std::size_t n_paths = 100000;
  double dt = 1e-2;
  double horizon = 0.0;  // 0: 30 / (smallest barrier slope)
  std::uint64_t seed = 1;
  bool bridge = true;
  /// Proposal drift = tilt * g(t, Z). 0 samples under the base measure; 1
  /// samples under the measure the density V would define.
  double tilt = 1.0;
  std::size_t workers = 0;
  std::vector<double> levels;  // empty: geometric up to 0.8 of the largest reachable <M>
};

/// Streams paths through the barrier segments of a hitting family,
/// accumulating V = exp(int g dW - 1/2 int g^2) with g = spec.g(t, Z), the
/// importance weight of the proposal, level crossings of <M>, and analytic
/// tail mass for paths still running at the horizon.
WeightSample simulate_hitting_weights(const HittingFamily& family, const GeneratorSpec& spec,
                                      const HittingSimConfig& cfg);

// ---------------------------------------------------------------- reports

enum class Verdict { MeasureSolution, NotMeasureSolution, Inconclusive };
const char* to_string(Verdict v);

struct ExplosionPoint {
  double level;
  double q;
  double std_error;
};

struct SegmentEstimate {
  double estimate;
  double std_error;
  double tail_budget;
};

struct MeasureOptions {
  std::optional<double> closed_form_reference;
  double explosion_threshold = 0.05;
  double stability_rel_tol = 0.1;
  double min_ess_fraction = 0.0;  // > 0 turns low effective sample size into Inconclusive
};

struct MeasureReport {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double truncated_fraction = 0.0;
  Verdict verdict = Verdict::Inconclusive;
  std::vector<ExplosionPoint> explosion_curve;
  std::optional<double> closed_form_reference;
  double truncation_budget = 0.0;
  double log_stabilized_estimate = 0.0;
  std::array<double, 3> doubling_estimates{};  // on n/4, n/2, n paths
  bool stable = true;
  double ess = 0.0;
  std::size_t n_invalid = 0;
  double tilt = 0.0;
  std::vector<SegmentEstimate> segments;

  /// 3 SE plus the truncation budget.
  [[nodiscard]] double tolerance() const { return 3.0 * std_error + truncation_budget; }
};

/// Estimates E[V_T] (0 for truncated paths), with explosion curve, doubling
/// and log-stabilized cross-checks, and the verdict:
///   NotMeasureSolution if estimate + tolerance < 1;
///   MeasureSolution if |estimate - 1| <= tolerance, the estimate is stable
///   and the last explosion point is below max(threshold, 3 SE);
///   Inconclusive otherwise.
MeasureReport martingale_expectation(const WeightSample& sample, const MeasureOptions& opts = {});
MeasureReport martingale_expectation(const GirsanovWeight& weight, const MeasureOptions& opts = {});

/// Q^n(tau_n < T) = E[V_{tau_n} 1{tau_n < T}] per level.
std::vector<ExplosionPoint> explosion_criterion(const WeightSample& sample);
std::vector<ExplosionPoint> explosion_criterion(const GirsanovWeight& weight, const std::vector<double>& levels);

/// Least-squares slope of log q against log n over points with q > 0.
std::optional<double> explosion_log_slope(const std::vector<ExplosionPoint>& curve);

// ---------------------------------------------------------------- probes

struct KazamakiReport {
  std::array<double, 3> estimates{};  // n/4, n/2, n paths
  std::array<std::size_t, 3> sizes{};
  double std_error = 0.0;
  double max_rel_change = 0.0;
  bool stable = true;  // relative change < 10% between doublings
};

/// Sample-doubling stability of E exp(alpha S_T / 2), S = int Z dW.
KazamakiReport kazamaki_probe(const SolutionPath& solution, double alpha);

struct ItoIdentityReport {
  double max_abs = 0.0;
  double rms = 0.0;
};

/// |alpha int Z^2 - (-(ln M_t - ln M_0)/(2 alpha) + int Z dW)| with
/// ln M = 2 alpha Y. Needs a solution with Y = ln(M) / (2 alpha).
ItoIdentityReport ito_identity_check(const SolutionPath& solution, double alpha);

struct SignFlipReport {
  MeasureReport measure;  // of V = exp(2 alpha S - 2 alpha^2 <S>)
  double weighted_residual_rms = 0.0;  // (-Y, -Z) against -xi with tilted increments
  double ess = 0.0;
  bool tau_n_equal = true;  // <S> and <S^R> level crossings coincide
  Verdict verdict = Verdict::Inconclusive;
};

SignFlipReport sign_flip_check(const SolutionPath& solution, double alpha);

struct IntegrabilityRow {
  double t;
  double mean;
  double std_error;
};

struct IntegrabilityProbe {
  std::vector<IntegrabilityRow> rows;
  bool increasing = false;  // strictly increasing as t decreases
};

/// E int_t^T Z^2 ds (left-point sums from the first node >= t).
IntegrabilityProbe square_integrability_probe(const SolutionPath& solution, const std::vector<double>& t_list);

}  // namespace mbsde
