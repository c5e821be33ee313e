import math
import warnings

import pytest

from bllab import harness
from bllab.config import parse_config
from bllab.harness import FitError, fit_rate, run_sweep

EPS = (0.2, 0.14, 0.1, 0.07)

TINY = """[run]
schema_version = 1
epsilon_list = 0.2, 0.14, 0.1
T = 0.01
dt = 0.001
n_out = 3
datum = {datum}

[grid]
n_x = 16
n_y = 64
n_z = 64
"""


def tiny(datum="standard"):
    return parse_config(TINY.format(datum=datum), env={})


def test_fit_exact_power():
    f = fit_rate([(e, 3 * e ** 2) for e in EPS])
    assert abs(f.slope - 2.0) < 1e-12 and f.r2 == pytest.approx(1.0, abs=1e-14)
    assert f.intercept == pytest.approx(math.log(3))


def test_fit_constant():
    f = fit_rate([(e, 0.5) for e in EPS])
    assert abs(f.slope) < 1e-12 and f.r2 == 1.0


def test_fit_perturbed():
    f = fit_rate([(e, e ** 2 * (1 + 0.1 * math.sin(1 / e))) for e in EPS])
    assert 1.8 <= f.slope <= 2.2
    assert f.slope_ci > 0 and f.n == 4


def test_fit_drops_non_positive_values():
    pts = [(e, e ** 2) for e in EPS] + [(0.05, 0.0)]
    with pytest.warns(RuntimeWarning, match="dropping 1"):
        f = fit_rate(pts)
    assert f.n == 4


def test_fit_needs_three_points():
    with pytest.raises(FitError):
        fit_rate([(0.2, 1.0), (0.1, 0.5)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(FitError):
            fit_rate([(0.2, 1.0), (0.1, -1.0), (0.05, 0.0)])


def test_zero_datum_sweep_is_degenerate():
    rep = run_sweep(tiny("zero"))
    assert all(r["status"] == "ok" for r in rep.records)
    assert all(r["U_L2"] == 0.0 and r["W_L2"] == 0.0 for r in rep.records)
    assert "degenerate" in rep.fits["U_L2"]
    assert rep.verdicts["U_L2_slope"]["pass"] is None
    assert not rep.passed


@pytest.fixture(scope="module")
def standard_report():
    return run_sweep(tiny())


def test_standard_sweep_records(standard_report):
    rep = standard_report
    assert [r["epsilon"] for r in rep.records] == [0.2, 0.14, 0.1]
    for r in rep.records:
        assert r["status"] == "ok"
        assert r["divergence_max"] < 1e-8 and r["eta_wall_max"] < 1e-6
        assert r["E_over_eps2"] > 0
    U = [r["U_L2"] for r in rep.records]
    assert U[0] > U[1] > U[2] > 0
    assert rep.provenance["config_hash"] == tiny().digest()


@pytest.mark.parametrize("jobs", [1, 2])
def test_failed_case_is_isolated(monkeypatch, standard_report, jobs):
    real = harness.run_case

    def flaky(profiles, cfg, eps, log_dir=None):
        if eps == 0.14:
            raise RuntimeError("injected failure")
        return real(profiles, cfg, eps, log_dir)

    monkeypatch.setattr(harness, "run_case", flaky)
    rep = run_sweep(tiny(), jobs=jobs)
    status = {r["epsilon"]: r["status"] for r in rep.records}
    assert status == {0.2: "ok", 0.14: "failed", 0.1: "ok"}
    assert "injected failure" in rep.records[1]["error"]
    # surviving cases are untouched by the failure
    for a, b in zip(rep.records[::2], standard_report.records[::2]):
        assert a == b
    assert rep.verdicts["U_L2_slope"]["pass"] is None


def test_pipeline_failure_marks_every_case(monkeypatch):
    def broken(cfg):
        raise RuntimeError("no profiles")

    monkeypatch.setattr(harness, "run_pipeline", broken)
    rep = run_sweep(tiny())
    assert all(r["status"] == "failed" and "no profiles" in r["error"] for r in rep.records)


def test_parallel_matches_serial(standard_report):
    from bllab.report import report_json
    assert report_json(run_sweep(tiny(), jobs=3)) == report_json(standard_report)


def test_expansion_and_assumption_rows():
    cfg = tiny()
    profiles, rows = harness.run_expansion(cfg)
    assert len(rows) == len(cfg.epsilon_list) * len(profiles.times)
    assert max(r["remainder_agreement"] for r in rows) < 1e-5
    _, arows = harness.run_check_assumptions(cfg, profiles)
    assert all(math.isfinite(r["H2_ratio"]) for r in arows)
