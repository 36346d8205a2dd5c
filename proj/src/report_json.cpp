#include "mbsde/report_json.hpp"

#include <cmath>

namespace mbsde {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

namespace {

json optional_number(const std::optional<double>& x) { return x ? number(*x) : json(nullptr); }

}  // namespace

json to_json(const MeasureReport& r) {
  json curve = json::array();
  for (const auto& p : r.explosion_curve) curve.push_back({number(p.level), number(p.q)});
  json curve_se = json::array();
  for (const auto& p : r.explosion_curve) curve_se.push_back(number(p.std_error));
  json segments = json::array();
  for (const auto& s : r.segments)
    segments.push_back({{"estimate", number(s.estimate)},
                        {"std_error", number(s.std_error)},
                        {"tail_budget", number(s.tail_budget)}});
  return {
      {"estimate", number(r.estimate)},
      {"std_error", number(r.std_error)},
      {"n_paths", r.n_paths},
      {"truncated_fraction", number(r.truncated_fraction)},
      {"verdict", to_string(r.verdict)},
      {"explosion_curve", curve},
      {"explosion_curve_std_error", curve_se},
      {"closed_form_reference", optional_number(r.closed_form_reference)},
      {"truncation_budget", number(r.truncation_budget)},
      {"log_stabilized_estimate", number(r.log_stabilized_estimate)},
      {"doubling_estimates",
       {number(r.doubling_estimates[0]), number(r.doubling_estimates[1]), number(r.doubling_estimates[2])}},
      {"stable", r.stable},
      {"ess", number(r.ess)},
      {"n_invalid", r.n_invalid},
      {"tilt", number(r.tilt)},
      {"segments", segments},
  };
}

json to_json(const ScenarioInfo& s) {
  return {{"a", number(s.a)},
          {"b", number(s.b)},
          {"scenario", to_string(s.scenario)},
          {"n_solutions", s.n_solutions},
          {"measure_flags", s.measure_flags}};
}

json to_json(const ConstantsReport& c) {
  return {{"kappa", optional_number(c.kappa)},          {"psi_kappa", optional_number(c.psi_kappa)},
          {"bmo_norm", optional_number(c.bmo_norm)},    {"theta_inverse", optional_number(c.theta_inverse)},
          {"psi_bmo", optional_number(c.psi_bmo)},      {"gamma", optional_number(c.gamma)},
          {"alpha_H3", optional_number(c.alpha_H3)},    {"delta_H3", optional_number(c.delta_H3)}};
}

json to_json(const ResidualSummary& r) {
  return {{"rms", number(r.rms)},
          {"max_abs", number(r.max_abs)},
          {"terminal_max_abs", number(r.terminal_max_abs)},
          {"n_points", r.n_points},
          {"n_paths", r.n_paths},
          {"excluded_truncated", r.excluded_truncated}};
}

json to_json(const KazamakiReport& k) {
  return {{"estimates", {number(k.estimates[0]), number(k.estimates[1]), number(k.estimates[2])}},
          {"sizes", k.sizes},
          {"std_error", number(k.std_error)},
          {"max_rel_change", number(k.max_rel_change)},
          {"stable", k.stable}};
}

json to_json(const IntegrabilityProbe& p) {
  json rows = json::array();
  for (const auto& r : p.rows)
    rows.push_back({{"t", number(r.t)}, {"mean", number(r.mean)}, {"std_error", number(r.std_error)}});
  return {{"rows", rows}, {"increasing", p.increasing}};
}

json to_json(const TraceRow& row) {
  return {{"n", row.n},
          {"dist_L2", number(row.dist_l2)},
          {"dist_L2_base", number(row.dist_l2_base)},
          {"ess", number(row.ess)},
          {"Y0", number(row.y0)},
          {"sup_weighted_Y", number(row.sup_weighted_y)},
          {"weighted_Z_L2", number(row.weighted_z_l2)},
          {"weight_mean", number(row.weight_mean)},
          {"weight_std_error", number(row.weight_se)},
          {"martingale_defect", number(row.martingale_defect)}};
}

json to_json(const IterateResult& r) {
  const auto ct = convergence_trace(r.trace);
  const auto bm = boundedness_monitor(r.trace);
  json trace = json::array();
  for (const auto& row : r.trace) trace.push_back(to_json(row));
  return {{"converged", r.converged},
          {"stop_reason", r.stop_reason},
          {"iterations", r.state.n},
          {"Y0", number(r.state.y0)},
          {"dist_L2", number(r.state.dist_l2)},
          {"ess", number(r.state.ess)},
          {"geometric_ratio", optional_number(ct.ratio)},
          {"bounded", bm.bounded},
          {"dropped_truncated", r.dropped_truncated},
          {"trace", trace},
          {"measure", to_json(r.report)}};
}

}  // namespace mbsde
