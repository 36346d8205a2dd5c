#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

#include "mbsde/closedform.hpp"
#include "mbsde/errors.hpp"
#include "mbsde/generators.hpp"
#include "mbsde/iterate.hpp"
#include "mbsde/paths.hpp"
#include "mbsde/report_json.hpp"
#include "mbsde/verify.hpp"

namespace py = pybind11;
using namespace mbsde;

namespace {

GeneratorSpec make_generator(const std::string& name, double coef) {
  if (name == "quadratic") return Quadratic{coef};
  if (name == "linear") return LinearBounded::constant(coef);
  if (name == "zero") return LinearBounded::constant(0.0);
  throw std::invalid_argument("unknown generator " + name);
}

TerminalSpec make_terminal(const std::string& name, std::optional<unsigned> k, double a, double b, double d) {
  if (name == "identity") return EndpointFunctional{[](double w) { return w; }};
  if (name == "tanh") return EndpointFunctional{[](double w) { return std::tanh(w); }};
  if (name == "sin") return EndpointFunctional{[](double w) { return std::sin(w); }};
  if (name == "square") return SquareEndpoint{k};
  if (name == "hitting") return HittingAffine{a, b, d};
  throw std::invalid_argument("unknown terminal " + name);
}

HittingFamily make_family(const std::string& name, double a, double b) {
  if (name == "first") return first_family(a, b);
  if (name == "second") return second_family(a, b);
  if (name == "mixed") return mixed_family(a, b);
  throw std::invalid_argument("unknown family " + name);
}

// (n_paths, n_nodes) arrays of Y and Z; stopped paths are padded with NaN.
py::tuple solution_arrays(const SolutionPath& sol) {
  const auto n = static_cast<py::ssize_t>(sol.paths.size());
  const auto m = static_cast<py::ssize_t>(sol.grid.n_nodes());
  py::array_t<double> y({n, m}), z({n, m});
  auto yv = y.mutable_unchecked<2>();
  auto zv = z.mutable_unchecked<2>();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (py::ssize_t p = 0; p < n; ++p) {
    const auto& tr = sol.paths[static_cast<std::size_t>(p)];
    for (py::ssize_t k = 0; k < m; ++k) {
      const auto i = static_cast<std::size_t>(k);
      yv(p, k) = i < tr.size() ? tr.y[i] : nan;
      zv(p, k) = i < tr.size() ? tr.z[i] : nan;
    }
  }
  return py::make_tuple(y, z);
}

}  // namespace

PYBIND11_MODULE(_mbsde, m) {
  m.doc() = "Measure solutions of quadratic BSDEs: closed forms, checks and the iterated construction";

  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
  py::register_exception<DivergingMomentError>(m, "DivergingMomentError", numerical.ptr());
  py::register_exception<DegeneracyError>(m, "DegeneracyError", numerical.ptr());
  py::register_exception<NonConvergenceError>(m, "NonConvergenceError", numerical.ptr());

  m.def(
      "simulate_paths",
      [](double horizon, std::size_t n_steps, std::size_t n_paths, std::uint64_t seed, std::size_t workers) {
        const auto grid = build_grid(horizon, n_steps);
        const auto ens = simulate_ensemble(grid, n_paths, seed, workers);
        const auto nodes = static_cast<py::ssize_t>(grid.n_nodes());
        py::array_t<double> t(nodes), w({static_cast<py::ssize_t>(n_paths), nodes});
        auto tv = t.mutable_unchecked<1>();
        auto wv = w.mutable_unchecked<2>();
        for (py::ssize_t k = 0; k < nodes; ++k) tv(k) = grid[static_cast<std::size_t>(k)];
        for (std::size_t p = 0; p < n_paths; ++p)
          for (py::ssize_t k = 0; k < nodes; ++k)
            wv(static_cast<py::ssize_t>(p), k) = ens.value(p, static_cast<std::size_t>(k));
        return py::make_tuple(t, w);
      },
      py::arg("horizon"), py::arg("n_steps"), py::arg("n_paths"), py::arg("seed") = 1, py::arg("workers") = 0,
      "Returns (t, W) with W of shape (n_paths, n_steps + 1).");

  m.def("laplace_tau", &laplace_tau, py::arg("b"), py::arg("lam"));
  m.def("first_solution_measure_value", &first_solution_measure_value, py::arg("a"), py::arg("b"));
  m.def("second_solution_measure_value", &second_solution_measure_value, py::arg("a"), py::arg("b"));
  m.def("mixed_initial_value", &mixed_initial_value, py::arg("a"), py::arg("c"), py::arg("d") = 0.0);
  m.def(
      "classify_scenario", [](double a, double b) { return std::string(to_string(classify_scenario(a, b))); },
      py::arg("a"), py::arg("b"));
  m.def(
      "scenario_info", [](double a, double b) { return to_json(scenario_info(a, b)).dump(); }, py::arg("a"),
      py::arg("b"));

  m.def("psi_of_kappa", &psi_of_kappa, py::arg("kappa"));
  m.def("psi_of_kappa_product_form", &psi_of_kappa_product_form, py::arg("kappa"));
  m.def("theta", &theta, py::arg("q"));
  m.def("theta_inverse", &theta_inverse, py::arg("x"));
  m.def("psi_of_bmo", &psi_of_bmo, py::arg("bmo_norm"));
  m.def("exp_integrability_bound", &exp_integrability_bound, py::arg("a"), py::arg("b"));
  m.def(
      "constants_report",
      [](std::optional<double> kappa, std::optional<double> bmo, std::optional<double> gamma,
         std::optional<double> alpha_h3, std::optional<double> delta_h3) {
        return to_json(constants_report(kappa, bmo, gamma, alpha_h3, delta_h3)).dump();
      },
      py::arg("kappa") = py::none(), py::arg("bmo_norm") = py::none(), py::arg("gamma") = py::none(),
      py::arg("alpha_h3") = py::none(), py::arg("delta_h3") = py::none());

  m.def(
      "hitting_measure_report",
      [](const std::string& family, double a, double b, std::size_t n_paths, double dt, double horizon, double tilt,
         std::uint64_t seed, std::size_t workers) {
        HittingSimConfig cfg;
        cfg.n_paths = n_paths;
        cfg.dt = dt;
        cfg.horizon = horizon;
        cfg.tilt = tilt;
        cfg.seed = seed;
        cfg.workers = workers;
        py::gil_scoped_release release;
        const auto rep = martingale_expectation(simulate_hitting_weights(make_family(family, a, b), Quadratic{0.5}, cfg));
        return to_json(rep).dump();
      },
      py::arg("family"), py::arg("a"), py::arg("b"), py::arg("n_paths") = 20000, py::arg("dt") = 1e-2,
      py::arg("horizon") = 0.0, py::arg("tilt") = 1.0, py::arg("seed") = 1, py::arg("workers") = 0,
      "MeasureReport JSON for the first, second or mixed hitting family; for 'mixed', b is c.");

  m.def(
      "iterate",
      [](const std::string& generator, double coef, const std::string& terminal, std::optional<unsigned> k, double a,
         double b, double d, std::size_t n_paths, std::size_t n_steps, double horizon, std::uint64_t seed,
         std::size_t basis_degree, double ridge, std::size_t max_iter, double tol, double beta, double p,
         double min_ess, std::size_t workers) {
        const GeneratorSpec spec = make_generator(generator, coef);
        const TerminalSpec term = make_terminal(terminal, k, a, b, d);
        IterateConfig cfg;
        cfg.regression.degree = basis_degree;
        cfg.regression.ridge = ridge;
        cfg.max_iter = max_iter;
        cfg.tol = tol;
        cfg.diagnostics.beta = beta;
        cfg.diagnostics.p = p;
        cfg.min_ess_fraction = min_ess;
        cfg.workers = workers;
        std::optional<IterateResult> result;
        {
          py::gil_scoped_release release;
          const auto ens = simulate_ensemble(build_grid(horizon, n_steps), n_paths, seed, workers);
          result = iterate_measure_solution(term, spec, ens, cfg);
        }
        const auto arrays = solution_arrays(result->solution);
        return py::make_tuple(to_json(*result).dump(), arrays[0], arrays[1]);
      },
      py::arg("generator") = "linear", py::arg("coef") = 0.3, py::arg("terminal") = "identity",
      py::arg("k") = py::none(), py::arg("a") = 1.0, py::arg("b") = 3.0, py::arg("d") = 0.0,
      py::arg("n_paths") = 20000, py::arg("n_steps") = 50, py::arg("horizon") = 1.0, py::arg("seed") = 1,
      py::arg("basis_degree") = 4, py::arg("ridge") = 1e-8, py::arg("max_iter") = 30, py::arg("tol") = 1e-4,
      py::arg("beta") = 1.0, py::arg("p") = 2.0, py::arg("min_ess") = 0.05, py::arg("workers") = 0,
      "Returns (report JSON, Y, Z); Y and Z have shape (n_kept_paths, n_steps + 1).");
}
