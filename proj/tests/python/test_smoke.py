import math

import pytest

import nullext


def test_schema_and_hash():
    assert nullext.schema_version == 1
    assert nullext.metric_hash("kerr_bl", 1.0, 0.5) != nullext.metric_hash("kerr_bl", 1.0, 0.6)
    assert nullext.coords("kerr_ingoing", 1.0, 0.5)[1] == "r"


def test_schwarzschild_component_against_closed_form():
    g = nullext.metric_at("schwarzschild", 1.0, 0.0, [0.0, 3.0, 1.0, 0.2])
    assert g[0][0] == pytest.approx(-(1 - 2 / 3.0), rel=1e-14)
    assert g[2][2] == pytest.approx(9.0, rel=1e-14)
    assert g[3][3] == pytest.approx(9.0 * math.sin(1.0) ** 2, rel=1e-14)


def test_kerr_is_ricci_flat_on_a_few_points():
    for x in nullext.interior_grid("kerr_bl", 1.0, 0.9, 2):
        ric = max(abs(v) for row in nullext.ricci_at("kerr_bl", 1.0, 0.9, x) for v in row)
        assert ric <= 1e-9 * nullext.riemann_scale("kerr_bl", 1.0, 0.9, x)


def test_run_verify_report():
    report, csv = nullext.run("verify", metric="kerr_quotient", suite="ernst", seed=3)
    assert report["passed"]
    assert report["config"]["seed"] == 3
    assert report["metric"]["hash"] == nullext.metric_hash("kerr_quotient", 1.0, 0.5)
    assert csv == ""


def test_run_is_deterministic():
    first = nullext.run_text("command = pseudoconvex\nfunction = corner\n")
    second = nullext.run_text("command = pseudoconvex\nfunction = corner\n")
    assert first == second


def test_obstruction_sweep_csv():
    report, csv = nullext.run("obstruction", eps=[0.1, 0.05])
    rows = csv.strip().splitlines()
    assert rows[0] == "eps,phi,phi_bump,ratio,coefficient_ratio,blowup"
    assert len(rows) == 3
    ratio = float(rows[2].split(",")[3])
    assert 1.4 <= ratio <= 2.6
    assert report["results"]["certificate"]["verdict"] == "obstructed"


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        nullext.run("verify", suite="nothing")
    with pytest.raises(ValueError):
        nullext.metric_hash("kerr_bl", 1.0, 2.0)
    with pytest.raises(ArithmeticError):
        nullext.metric_at("kerr_bl", 1.0, 0.5, [0.0, 1.0, 1.0, 0.0])
