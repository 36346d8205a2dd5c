"""Python front end to the mbsde library.

Report-producing calls return dicts with the same layout as the CLI JSON
(see schema/report.schema.json).
"""

import json

from . import _mbsde
from ._mbsde import (
    DegeneracyError,
    DivergingMomentError,
    NonConvergenceError,
    NumericalError,
    classify_scenario,
    exp_integrability_bound,
    first_solution_measure_value,
    laplace_tau,
    mixed_initial_value,
    psi_of_bmo,
    psi_of_kappa,
    psi_of_kappa_product_form,
    second_solution_measure_value,
    simulate_paths,
    theta,
    theta_inverse,
)

__all__ = [
    "DegeneracyError",
    "DivergingMomentError",
    "NonConvergenceError",
    "NumericalError",
    "classify_scenario",
    "constants_report",
    "exp_integrability_bound",
    "first_solution_measure_value",
    "hitting_measure_report",
    "iterate",
    "laplace_tau",
    "mixed_initial_value",
    "psi_of_bmo",
    "psi_of_kappa",
    "psi_of_kappa_product_form",
    "scenario_info",
    "second_solution_measure_value",
    "simulate_paths",
    "theta",
    "theta_inverse",
]


def scenario_info(a, b):
    return json.loads(_mbsde.scenario_info(a, b))


def constants_report(kappa=None, bmo_norm=None, gamma=None, alpha_h3=None, delta_h3=None):
    return json.loads(_mbsde.constants_report(kappa, bmo_norm, gamma, alpha_h3, delta_h3))


def hitting_measure_report(family, a, b, **kwargs):
    """E[V_T] for a hitting family ('first', 'second', or 'mixed' with b = c)."""
    return json.loads(_mbsde.hitting_measure_report(family, a, b, **kwargs))


def iterate(**kwargs):
    """Runs the iterated construction; returns (report, Y, Z)."""
    report, y, z = _mbsde.iterate(**kwargs)
    return json.loads(report), y, z
