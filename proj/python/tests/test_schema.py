"""CLI and module reports against schema/report.schema.json."""

import json
import os
import pathlib
import subprocess

import pytest

jsonschema = pytest.importorskip("jsonschema")

import mbsde

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMA = json.loads(pathlib.Path(os.environ.get("MBSDE_SCHEMA", ROOT / "schema" / "report.schema.json")).read_text())
CLI = os.environ.get("MBSDE_CLI")

COMMANDS = {
    "simulate": ["simulate", "--n-paths", "200", "--n-steps", "20"],
    "simulate-solution": ["simulate", "--n-paths", "200", "--n-steps", "2000", "--horizon", "20", "--solution", "first",
                          "--a", "1", "--b", "1.5"],
    "scenario": ["scenario", "--a", "1", "--b", "1.5", "--n-paths", "2000"],
    "laplace": ["laplace", "--b", "1", "--lambda", "0.5", "1.5", "--n-paths", "2000", "--dt", "1e-2"],
    "verify-explicit": ["verify", "--solution", "explicit", "--n-paths", "500", "--n-steps", "20"],
    "verify-square": ["verify", "--solution", "square", "--n-paths", "500", "--n-steps", "50"],
    "verify-first": ["verify", "--solution", "first", "--a", "1", "--b", "0.5", "--mc-paths", "2000"],
    "iterate": ["iterate", "--n-paths", "2000", "--n-steps", "20"],
    "constants": ["constants", "--kappa", "4", "--bmo", "0.2"],
    "continuum": ["continuum", "--a", "0.5", "--c", "0.25", "0.5", "--n-paths", "2000", "--identity-paths", "50"],
}


def validator(ref=None):
    schema = SCHEMA if ref is None else {"$ref": f"#/$defs/{ref}", "$defs": SCHEMA["$defs"]}
    cls = jsonschema.validators.validator_for(SCHEMA)
    cls.check_schema(SCHEMA)
    return cls(schema)


@pytest.mark.skipif(CLI is None, reason="MBSDE_CLI not set")
@pytest.mark.parametrize("name", sorted(COMMANDS))
def test_cli_output_matches_schema(name, tmp_path):
    out = subprocess.run([CLI, "--seed", "3", *COMMANDS[name]], capture_output=True, text=True, cwd=tmp_path, check=True)
    doc = json.loads(out.stdout)
    validator().validate(doc)


@pytest.mark.skipif(CLI is None, reason="MBSDE_CLI not set")
def test_cli_exit_codes(tmp_path):
    run = lambda *args: subprocess.run([CLI, *args], capture_output=True, text=True, cwd=tmp_path)
    assert run("constants").returncode == 2
    bad = run("iterate", "--generator", "quadratic", "--coef", "2", "--n-paths", "2000", "--n-steps", "20",
              "--min-ess", "0.99", "--trace-csv", "trace.csv")
    assert bad.returncode == 3
    assert (tmp_path / "trace.csv").read_text().startswith("n,dist_L2,ess,Y0,sup_weighted_Y,weighted_Z_L2\n")


def test_module_reports_match_schema():
    validator("measure_report").validate(mbsde.hitting_measure_report("first", 1.0, 1.5, n_paths=2000))
    validator("scenario_info").validate(mbsde.scenario_info(1.0, 3.0))
    report, _, _ = mbsde.iterate(n_paths=2000, n_steps=10)
    validator("measure_report").validate(report["measure"])
    for row in report["trace"]:
        validator("trace_row").validate(row)
