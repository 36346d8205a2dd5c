#include <CLI11.hpp>
#include <fmt/format.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mbsde/closedform.hpp"
#include "mbsde/errors.hpp"
#include "mbsde/generators.hpp"
#include "mbsde/io.hpp"
#include "mbsde/iterate.hpp"
#include "mbsde/paths.hpp"
#include "mbsde/report_json.hpp"
#include "mbsde/stats.hpp"
#include "mbsde/verify.hpp"

using namespace mbsde;

namespace {

constexpr int kConfigError = 2;
constexpr int kNumericalError = 3;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

struct Common {
  std::uint64_t seed = 1;
  std::size_t workers = 0;
  std::string out;  // empty: stdout
};

void emit(const Common& c, const json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (c.out.empty()) {
    std::cout << text;
    return;
  }
  TextSink sink(c.out);
  sink.write(text);
}

std::size_t steps_for(double horizon, double dt) {
  require(dt > 0.0 && horizon > 0.0, "dt and horizon must be positive");
  return static_cast<std::size_t>(std::llround(horizon / dt));
}

GeneratorSpec make_generator(const std::string& name, double coef) {
  if (name == "quadratic") {
    require(coef != 0.0, "quadratic generator needs alpha != 0");
    return Quadratic{coef};
  }
  if (name == "linear") return LinearBounded::constant(coef);
  if (name == "zero") return LinearBounded::constant(0.0);
  throw ConfigError("unknown generator " + name);
}

TerminalSpec make_terminal(const std::string& name, std::optional<unsigned> k, double a, double b, double d) {
  if (name == "identity") return EndpointFunctional{[](double w) { return w; }};
  if (name == "tanh") return EndpointFunctional{[](double w) { return std::tanh(w); }};
  if (name == "sin") return EndpointFunctional{[](double w) { return std::sin(w); }};
  if (name == "square") return SquareEndpoint{k};
  if (name == "hitting") {
    require(a != 0.0 && b > 0.0, "hitting terminal needs a != 0 and b > 0");
    return HittingAffine{a, b, d};
  }
  throw ConfigError("unknown terminal " + name);
}

// ------------------------------------------------------------------ simulate

struct SimulateArgs {
  std::size_t n_paths = 1000;
  std::size_t n_steps = 100;
  double horizon = 1.0;
  std::string paths_csv;
  std::string solution;  // first | second | mixed | square
  std::string solution_csv;
  double a = 1.0, b = 1.0, c = 0.5, d = 0.0;
  std::optional<unsigned> k;
  bool bridge = true;
};

json cmd_simulate(const SimulateArgs& s, const Common& c) {
  require(s.n_paths > 0 && s.n_steps > 0, "n_paths and n_steps must be positive");
  const auto grid = build_grid(s.horizon, s.n_steps);
  const auto ens = simulate_ensemble(grid, s.n_paths, c.seed, c.workers);
  if (!s.paths_csv.empty()) write_paths_csv(ens, s.paths_csv);
  RunningStats end;
  for (std::size_t p = 0; p < ens.n_paths(); ++p) end.add(ens.value(p, grid.n_steps()));
  json doc = {{"command", "simulate"},
              {"seed", c.seed},
              {"n_paths", s.n_paths},
              {"n_steps", s.n_steps},
              {"horizon", s.horizon},
              {"terminal_mean", number(end.mean)},
              {"terminal_variance", number(end.variance())}};
  if (!s.solution.empty()) {
    std::optional<SolutionPath> sol;
    if (s.solution == "first") sol = first_solution(s.a, s.b, ens, s.bridge, c.workers);
    else if (s.solution == "second") sol = second_solution(s.a, s.b, ens, s.bridge, c.workers);
    else if (s.solution == "mixed") sol = mixed_solution(s.a, s.c, s.d, ens, s.bridge, c.workers);
    else if (s.solution == "square") sol = square_endpoint_solution(s.k, ens);
    else throw ConfigError("unknown solution " + s.solution);
    if (!s.solution_csv.empty()) write_solution_csv(*sol, s.solution_csv);
    std::size_t trunc = 0;
    for (const auto& tr : sol->paths) trunc += tr.truncated ? 1 : 0;
    doc["solution"] = {{"label", sol->label},
                       {"Y0", number(sol->y0())},
                       {"truncated_fraction", static_cast<double>(trunc) / static_cast<double>(sol->n_paths())}};
  }
  return doc;
}

// ------------------------------------------------------------------ laplace

struct LaplaceArgs {
  double b = 1.0;
  std::vector<double> lambdas{0.5, 1.5};
  std::size_t n_paths = 100000;
  double dt = 1e-3;
  double horizon = 30.0;
  bool bridge = true;
};

json cmd_laplace(const LaplaceArgs& s, const Common& c) {
  require(s.b > 0.0, "b must be positive");
  const auto grid = build_grid(s.horizon, steps_for(s.horizon, s.dt));
  const auto hits = simulate_hitting_times(AffineBarrier::tau_b(s.b), grid, s.n_paths, c.seed, s.bridge, c.workers);
  json rows = json::array();
  for (double lambda : s.lambdas) {
    require(lambda >= 0.0, "lambda must be nonnegative");
    RunningStats st;
    std::size_t trunc = 0;
    for (const auto& h : hits) {
      if (h.truncated()) ++trunc;
      st.add(h.truncated() ? 0.0 : std::exp(-lambda * h.tau));
    }
    const double frac = static_cast<double>(trunc) / static_cast<double>(hits.size());
    const double exact = laplace_tau(s.b, lambda);
    rows.push_back({{"lambda", lambda},
                    {"closed_form", number(exact)},
                    {"estimate", number(st.mean)},
                    {"std_error", number(st.std_error())},
                    {"truncated_fraction", number(frac)},
                    {"truncation_budget", number(frac * std::exp(-lambda * s.horizon))},
                    {"within_tolerance", std::abs(st.mean - exact) <= std::max(0.01 * exact, 3.0 * st.std_error())}});
  }
  return {{"command", "laplace"}, {"seed", c.seed}, {"b", s.b},       {"n_paths", s.n_paths},
          {"dt", s.dt},           {"horizon", s.horizon}, {"rows", rows}};
}

// ------------------------------------------------------------------ scenario

struct HittingArgs {
  std::size_t n_paths = 100000;
  double dt = 1e-2;
  double horizon = 0.0;
  double tilt = 1.0;
  bool bridge = true;
};

HittingSimConfig hitting_config(const HittingArgs& h, const Common& c, std::uint64_t salt) {
  HittingSimConfig cfg;
  cfg.n_paths = h.n_paths;
  cfg.dt = h.dt;
  cfg.horizon = h.horizon;
  cfg.seed = c.seed + salt;
  cfg.bridge = h.bridge;
  cfg.tilt = h.tilt;
  cfg.workers = c.workers;
  return cfg;
}

json cmd_scenario(double a, double b, const HittingArgs& h, const Common& c) {
  require(a > 0.0 && b > 0.0, "scenario needs a > 0 and b > 0");
  const auto info = scenario_info(a, b);
  const GeneratorSpec spec = Quadratic{0.5};
  auto run = [&](const HittingFamily& fam, double reference, std::uint64_t salt) {
    MeasureOptions opts;
    opts.closed_form_reference = reference;
    return martingale_expectation(simulate_hitting_weights(fam, spec, hitting_config(h, c, salt)), opts);
  };
  const double first_cf = first_solution_measure_value(a, b);
  const double second_cf = second_solution_measure_value(a, b);
  const auto first = run(first_family(a, b), first_cf, 0);
  const auto second = run(second_family(a, b), second_cf, 1);
  // With g = a, E V_tau for the first solution is e^{-a} E e^{-lambda tau_b}, lambda = a^2/2 - ab >= -b^2/2.
  const double lambda = a * (0.5 * a - b);
  const json laplace = {{"lambda", lambda}, {"value", number(std::exp(-a) * laplace_tau(b, lambda))}};
  return {{"command", "scenario"},
          {"seed", c.seed},
          {"classification", to_json(info)},
          {"first", {{"closed_form", number(first_cf)}, {"report", to_json(first)}}},
          {"second", {{"closed_form", number(second_cf)}, {"report", to_json(second)}}},
          {"laplace_cross_check", laplace}};
}

// ------------------------------------------------------------------ continuum

json cmd_continuum(double a, const std::vector<double>& cs, double d, const HittingArgs& h, const Common& c,
                   std::size_t identity_paths) {
  require(a != 0.0, "continuum needs a != 0");
  const GeneratorSpec spec = Quadratic{0.5};
  json rows = json::array();
  std::uint64_t salt = 0;
  for (double cc : cs) {
    require(cc > 0.0, "c must be positive");
    // Terminal identity on simulated paths.
    const double horizon = std::max(30.0, 30.0 / std::max(1e-3, cc));
    const auto grid = build_grid(horizon, steps_for(horizon, h.dt));
    const auto ens = simulate_ensemble(grid, identity_paths, c.seed + 100 + salt, c.workers);
    const auto sol = mixed_solution(a, cc, d, ens, h.bridge, c.workers);
    double worst = 0.0;
    std::size_t trunc = 0;
    for (const auto& tr : sol.paths) {
      if (tr.truncated) {
        ++trunc;
        continue;
      }
      worst = std::max(worst, std::abs(tr.y.back() - tr.xi));
    }
    MeasureOptions opts;
    const auto report = martingale_expectation(
        simulate_hitting_weights(mixed_family(a, cc), spec, hitting_config(h, c, salt++)), opts);
    rows.push_back({{"c", cc},
                    {"initial_value", number(mixed_initial_value(a, cc, d))},
                    {"terminal_identity_max_abs", number(worst)},
                    {"identity_truncated", trunc},
                    {"report", to_json(report)}});
  }
  return {{"command", "continuum"},
          {"seed", c.seed},
          {"a", a},
          {"d", d},
          {"two_a_one_minus_a", 2.0 * a * (1.0 - a)},
          {"rows", rows}};
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
  std::string solution = "explicit";  // explicit | square | first | second | mixed
  std::string terminal = "tanh";
  std::string engine = "regression";
  double alpha = 0.25;
  std::optional<unsigned> k;
  double a = 1.0, b = 3.0, c = 0.5, d = 0.0;
  std::size_t n_paths = 20000;
  std::size_t n_steps = 100;
  std::vector<double> probe_t{0.1, 0.01, 0.001};
  HittingArgs hitting;
  std::string solution_csv;
};

json cmd_verify(const VerifyArgs& v, const Common& c) {
  json doc = {{"command", "verify"}, {"seed", c.seed}, {"solution", v.solution}};
  const bool hitting = v.solution == "first" || v.solution == "second" || v.solution == "mixed";
  if (hitting) {
    const GeneratorSpec spec = Quadratic{0.5};
    const double horizon = 30.0 / std::min(v.solution == "mixed" ? 1.0 : v.b, 1.0);
    const auto grid = build_grid(horizon, steps_for(horizon, v.hitting.dt));
    const auto ens = simulate_ensemble(grid, v.n_paths, c.seed, c.workers);
    SolutionPath sol = v.solution == "first"    ? first_solution(v.a, v.b, ens, v.hitting.bridge, c.workers)
                       : v.solution == "second" ? second_solution(v.a, v.b, ens, v.hitting.bridge, c.workers)
                                                : mixed_solution(v.a, v.c, v.d, ens, v.hitting.bridge, c.workers);
    const HittingFamily fam = v.solution == "first"    ? first_family(v.a, v.b)
                              : v.solution == "second" ? second_family(v.a, v.b)
                                                       : mixed_family(v.a, v.c);
    MeasureOptions opts;
    if (v.solution == "first") opts.closed_form_reference = first_solution_measure_value(v.a, v.b);
    if (v.solution == "second") opts.closed_form_reference = second_solution_measure_value(v.a, v.b);
    const auto report =
        martingale_expectation(simulate_hitting_weights(fam, spec, hitting_config(v.hitting, c, 0)), opts);
    doc["label"] = sol.label;
    doc["residual"] = to_json(bsde_residual(sol, spec));
    doc["measure"] = to_json(report);
    if (!v.solution_csv.empty()) write_solution_csv(sol, v.solution_csv);
    return doc;
  }

  const auto grid = build_grid(1.0, v.n_steps);
  const auto ens = simulate_ensemble(grid, v.n_paths, c.seed, c.workers);
  std::optional<SolutionPath> sol;
  double alpha = v.alpha;
  if (v.solution == "square") {
    sol = square_endpoint_solution(v.k, ens);
    alpha = 0.5;
  } else if (v.solution == "explicit") {
    ExplicitLogConfig cfg;
    if (v.engine == "gauss-hermite") cfg.engine = ConditionalEngine::GaussHermite;
    else require(v.engine == "regression", "engine must be regression or gauss-hermite");
    sol = explicit_log_solution(alpha, make_terminal(v.terminal, v.k, v.a, v.b, v.d), ens, cfg);
  } else {
    throw ConfigError("unknown solution " + v.solution);
  }
  const GeneratorSpec spec = Quadratic{alpha};
  doc["label"] = sol->label;
  doc["alpha"] = alpha;
  doc["residual"] = to_json(bsde_residual(*sol, spec));
  doc["measure"] = to_json(martingale_expectation(girsanov_weight(*sol, spec)));
  doc["kazamaki"] = to_json(kazamaki_probe(*sol, alpha));
  if (sol->log_m_alpha) {
    const auto ito = ito_identity_check(*sol, alpha);
    doc["ito_identity"] = {{"max_abs", number(ito.max_abs)}, {"rms", number(ito.rms)}};
    const auto flip = sign_flip_check(*sol, alpha);
    doc["sign_flip"] = {{"verdict", to_string(flip.verdict)},
                        {"weighted_residual_rms", number(flip.weighted_residual_rms)},
                        {"ess", number(flip.ess)},
                        {"tau_n_equal", flip.tau_n_equal},
                        {"measure", to_json(flip.measure)}};
  }
  if (sol->undefined_at_origin) doc["square_integrability"] = to_json(square_integrability_probe(*sol, v.probe_t));
  if (!v.solution_csv.empty()) write_solution_csv(*sol, v.solution_csv);
  return doc;
}

// ------------------------------------------------------------------ iterate

struct IterateArgs {
  std::string generator = "linear";
  double coef = 0.3;
  std::string terminal = "identity";
  std::optional<unsigned> k;
  double a = 1.0, b = 3.0, d = 0.0;
  std::size_t n_paths = 100000;
  std::size_t n_steps = 50;
  double horizon = 1.0;
  std::size_t basis_degree = 4;
  double ridge = 1e-8;
  std::size_t max_iter = 30;
  double tol = 1e-4;
  double beta = 1.0;
  double p = 2.0;
  double min_ess = 0.05;
  std::string trace_csv;
  std::string solution_csv;
};

json cmd_iterate(const IterateArgs& s, const Common& c) {
  require(s.n_paths > 0 && s.n_steps > 0, "n_paths and n_steps must be positive");
  require(s.basis_degree >= 1 && s.basis_degree <= 12, "basis_degree must lie in [1, 12]");
  require(s.tol > 0.0 && s.max_iter >= 1, "tol must be positive and max_iter >= 1");
  const GeneratorSpec spec = make_generator(s.generator, s.coef);
  const TerminalSpec terminal = make_terminal(s.terminal, s.k, s.a, s.b, s.d);
  const auto ens = simulate_ensemble(build_grid(s.horizon, s.n_steps), s.n_paths, c.seed, c.workers);

  IterateConfig cfg;
  cfg.regression.degree = s.basis_degree;
  cfg.regression.ridge = s.ridge;
  cfg.max_iter = s.max_iter;
  cfg.tol = s.tol;
  cfg.diagnostics.beta = s.beta;
  cfg.diagnostics.p = s.p;
  cfg.min_ess_fraction = s.min_ess;
  cfg.workers = c.workers;

  // The trace is written row by row so a failing run still leaves it behind.
  std::unique_ptr<TextSink> trace;
  if (!s.trace_csv.empty()) {
    trace = std::make_unique<TextSink>(s.trace_csv);
    trace->write("n,dist_L2,ess,Y0,sup_weighted_Y,weighted_Z_L2\n");
  }
  auto on_row = [&](const TraceRow& r) {
    if (trace)
      trace->write(fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.n, r.dist_l2, r.ess, r.y0,
                               r.sup_weighted_y, r.weighted_z_l2));
  };
  const auto result = iterate_measure_solution(terminal, spec, ens, cfg, on_row);
  if (!s.solution_csv.empty()) write_solution_csv(result.solution, s.solution_csv);
  json doc = to_json(result);
  doc["command"] = "iterate";
  doc["seed"] = c.seed;
  doc["generator"] = spec.name();
  // weights exist only for kept paths; skip the statistic when hitting terminals dropped some
  doc["tightness"] =
      result.dropped_truncated == 0 ? number(tightness_statistic(ens, result.state.log_weights)) : json(nullptr);
  return doc;
}

// ------------------------------------------------------------------ constants

json cmd_constants(std::optional<double> kappa, std::optional<double> bmo, std::optional<double> gamma,
                   std::optional<double> alpha, std::optional<double> delta) {
  require(kappa || bmo, "constants needs --kappa and/or --bmo");
  json doc = to_json(constants_report(kappa, bmo, gamma, alpha, delta));
  doc["command"] = "constants";
  return doc;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MBSDE_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("MBSDE_SEED is not an integer: {}", env));
    }
  }
  return 1;
}

void add_hitting_flags(CLI::App* cmd, HittingArgs& h) {
  cmd->add_option("--n-paths", h.n_paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
  cmd->add_option("--dt", h.dt, "time step")->check(CLI::PositiveNumber);
  cmd->add_option("--horizon", h.horizon, "truncation horizon (0: 30 / smallest slope)");
  cmd->add_option("--tilt", h.tilt, "proposal drift as a multiple of g");
  cmd->add_option("--bridge", h.bridge, "Brownian-bridge crossing correction");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measure solutions of quadratic BSDEs: simulation and verification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values", false);
  app.allow_config_extras(false);

  Common common;
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "RNG seed (default: $MBSDE_SEED or 1)");
  app.add_option("--workers", common.workers, "worker threads (0: all cores)");
  app.add_option("-o,--out", common.out, "write the JSON report here instead of stdout");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Brownian paths and closed-form solutions");
  simulate->add_option("--n-paths", sim.n_paths)->check(CLI::PositiveNumber);
  simulate->add_option("--n-steps", sim.n_steps)->check(CLI::PositiveNumber);
  simulate->add_option("--horizon", sim.horizon)->check(CLI::PositiveNumber);
  simulate->add_option("--paths-csv", sim.paths_csv, "CSV path_id,t,W (.gz compresses)");
  simulate->add_option("--solution", sim.solution)->check(CLI::IsMember({"first", "second", "mixed", "square"}));
  simulate->add_option("--solution-csv", sim.solution_csv, "CSV path_id,t,Y,Z (.gz compresses)");
  simulate->add_option("--a", sim.a);
  simulate->add_option("--b", sim.b);
  simulate->add_option("--c", sim.c);
  simulate->add_option("--d", sim.d);
  simulate->add_option("--k", sim.k, "square-endpoint index (omit for k = infinity)");
  simulate->add_option("--bridge", sim.bridge);

  double sc_a = 1.0, sc_b = 1.0;
  HittingArgs sc_h;
  auto* scenario = app.add_subcommand("scenario", "first/second solutions, classification and measure checks");
  scenario->add_option("--a", sc_a)->required();
  scenario->add_option("--b", sc_b)->required();
  add_hitting_flags(scenario, sc_h);

  LaplaceArgs lap;
  auto* laplace = app.add_subcommand("laplace", "Monte Carlo Laplace transform of tau_b against the closed form");
  laplace->add_option("--b", lap.b);
  laplace->add_option("--lambda", lap.lambdas)->delimiter(',');
  laplace->add_option("--n-paths", lap.n_paths)->check(CLI::PositiveNumber);
  laplace->add_option("--dt", lap.dt)->check(CLI::PositiveNumber);
  laplace->add_option("--horizon", lap.horizon)->check(CLI::PositiveNumber);
  laplace->add_option("--bridge", lap.bridge);

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "residual, measure and probe checks of a candidate solution");
  verify->add_option("--solution", ver.solution)
      ->check(CLI::IsMember({"explicit", "square", "first", "second", "mixed"}));
  verify->add_option("--terminal", ver.terminal)->check(CLI::IsMember({"identity", "tanh", "sin", "square"}));
  verify->add_option("--engine", ver.engine)->check(CLI::IsMember({"regression", "gauss-hermite"}));
  verify->add_option("--alpha", ver.alpha);
  verify->add_option("--k", ver.k);
  verify->add_option("--a", ver.a);
  verify->add_option("--b", ver.b);
  verify->add_option("--c", ver.c);
  verify->add_option("--d", ver.d);
  verify->add_option("--n-paths", ver.n_paths)->check(CLI::PositiveNumber);
  verify->add_option("--n-steps", ver.n_steps)->check(CLI::PositiveNumber);
  verify->add_option("--probe-t", ver.probe_t)->delimiter(',');
  verify->add_option("--dt", ver.hitting.dt)->check(CLI::PositiveNumber);
  verify->add_option("--mc-paths", ver.hitting.n_paths, "paths for the hitting-family measure check");
  verify->add_option("--tilt", ver.hitting.tilt);
  verify->add_option("--bridge", ver.hitting.bridge);
  verify->add_option("--solution-csv", ver.solution_csv);

  IterateArgs itr;
  auto* iterate = app.add_subcommand("iterate", "iterated Girsanov construction of a measure solution");
  iterate->add_option("--generator", itr.generator)->check(CLI::IsMember({"linear", "quadratic", "zero"}));
  iterate->add_option("--coef", itr.coef, "b for linear, alpha for quadratic");
  iterate->add_option("--terminal", itr.terminal)
      ->check(CLI::IsMember({"identity", "tanh", "sin", "square", "hitting"}));
  iterate->add_option("--k", itr.k);
  iterate->add_option("--a", itr.a);
  iterate->add_option("--b", itr.b);
  iterate->add_option("--d", itr.d);
  iterate->add_option("--n-paths,--n_paths", itr.n_paths)->check(CLI::PositiveNumber);
  iterate->add_option("--n-steps,--n_steps", itr.n_steps)->check(CLI::PositiveNumber);
  iterate->add_option("--horizon", itr.horizon)->check(CLI::PositiveNumber);
  iterate->add_option("--basis-degree,--basis_degree", itr.basis_degree);
  iterate->add_option("--ridge", itr.ridge)->check(CLI::NonNegativeNumber);
  iterate->add_option("--max-iter,--max_iter", itr.max_iter);
  iterate->add_option("--tol", itr.tol);
  iterate->add_option("--beta", itr.beta);
  iterate->add_option("--p", itr.p)->check(CLI::PositiveNumber);
  iterate->add_option("--min-ess", itr.min_ess, "ESS floor as a fraction of n_paths");
  iterate->add_option("--trace-csv", itr.trace_csv, "CSV n,dist_L2,ess,Y0,sup_weighted_Y,weighted_Z_L2");
  iterate->add_option("--solution-csv", itr.solution_csv);

  std::optional<double> kappa, bmo, gamma, alpha_h3, delta_h3;
  auto* constants = app.add_subcommand("constants", "Psi, theta^{-1} and related constants");
  constants->add_option("--kappa", kappa);
  constants->add_option("--bmo", bmo);
  constants->add_option("--gamma", gamma);
  constants->add_option("--alpha-h3", alpha_h3);
  constants->add_option("--delta-h3", delta_h3);

  double ct_a = 0.5, ct_d = 0.0;
  std::vector<double> ct_c{0.25, 0.5, 0.75};
  std::size_t ct_identity_paths = 2000;
  HittingArgs ct_h;
  auto* continuum = app.add_subcommand("continuum", "mixed solutions over a range of switching barriers");
  continuum->add_option("--a", ct_a);
  continuum->add_option("--c", ct_c)->delimiter(',');
  continuum->add_option("--d", ct_d);
  continuum->add_option("--identity-paths", ct_identity_paths)->check(CLI::PositiveNumber);
  add_hitting_flags(continuum, ct_h);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    common.seed = seed ? *seed : default_seed();
    json doc;
    if (*simulate) doc = cmd_simulate(sim, common);
    else if (*scenario) doc = cmd_scenario(sc_a, sc_b, sc_h, common);
    else if (*laplace) doc = cmd_laplace(lap, common);
    else if (*verify) doc = cmd_verify(ver, common);
    else if (*iterate) doc = cmd_iterate(itr, common);
    else if (*constants) doc = cmd_constants(kappa, bmo, gamma, alpha_h3, delta_h3);
    else if (*continuum) doc = cmd_continuum(ct_a, ct_c, ct_d, ct_h, common, ct_identity_paths);
    emit(common, doc);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
