import math

import numpy as np
import pytest

import mbsde


def test_closed_forms():
    b, lam = 1.0, 0.5
    assert mbsde.laplace_tau(b, lam) == pytest.approx(math.exp(-b * (math.sqrt(1 + 2 * lam / b**2) - 1)), rel=1e-14)
    assert mbsde.first_solution_measure_value(1.0, 0.5) == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert mbsde.second_solution_measure_value(1.0, 0.5) == pytest.approx(1.0)
    assert [mbsde.classify_scenario(1.0, b) for b in (3.0, 1.5, 0.5)] == ["A", "B", "C"]
    info = mbsde.scenario_info(1.0, 0.5)
    assert info["scenario"] == "C"
    assert info["measure_flags"] == [False, True]


def test_constants():
    assert mbsde.psi_of_kappa(4.0) == pytest.approx(9.0, abs=1e-12)
    assert mbsde.psi_of_kappa_product_form(4.0) == pytest.approx(9.0, abs=1e-12)
    q = 2.5
    assert mbsde.theta_inverse(mbsde.theta(q)) == pytest.approx(q, rel=1e-10)
    rep = mbsde.constants_report(kappa=4.0, bmo_norm=0.1)
    assert rep["psi_kappa"] == pytest.approx(9.0)
    assert rep["psi_bmo"] > 1.0
    with pytest.raises(ValueError):
        mbsde.psi_of_kappa(1.0)


def test_paths():
    t, w = mbsde.simulate_paths(1.0, 20, 5000, seed=3)
    assert t.shape == (21,) and w.shape == (5000, 21)
    assert np.all(w[:, 0] == 0.0)
    assert abs(w[:, -1].mean()) < 4 * 1 / math.sqrt(5000)
    assert w[:, -1].var() == pytest.approx(1.0, rel=0.1)
    _, again = mbsde.simulate_paths(1.0, 20, 5000, seed=3)
    assert np.array_equal(w, again)


def test_hitting_report():
    rep = mbsde.hitting_measure_report("first", 1.0, 0.5, n_paths=20000, seed=5)
    assert abs(rep["estimate"] - math.exp(-1.0)) <= 3 * rep["std_error"] + rep["truncation_budget"]
    assert rep["verdict"] == "NotMeasureSolution"


def test_iterate_linear():
    report, y, z = mbsde.iterate(generator="linear", coef=0.3, n_paths=20000, n_steps=50, seed=7)
    assert report["converged"]
    assert report["Y0"] == pytest.approx(0.3, abs=0.03)
    assert y.shape == z.shape == (20000, 51)
    assert np.allclose(y[:, 0], report["Y0"])
    assert report["measure"]["verdict"] == "MeasureSolution"


def test_iterate_zero_generator():
    report, _, _ = mbsde.iterate(generator="zero", terminal="sin", n_paths=2000, n_steps=10, seed=2)
    assert report["iterations"] == 1
    _, w = mbsde.simulate_paths(1.0, 10, 2000, seed=2)
    assert report["Y0"] == pytest.approx(np.sin(w[:, -1]).mean(), rel=1e-10)


def test_iterate_errors():
    with pytest.raises(mbsde.DegeneracyError):
        mbsde.iterate(generator="quadratic", coef=2.0, n_paths=2000, n_steps=20, min_ess=0.99)
    assert issubclass(mbsde.DegeneracyError, mbsde.NumericalError)
    with pytest.raises(ValueError):
        mbsde.iterate(terminal="nope")
