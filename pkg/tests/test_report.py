import json
from pathlib import Path

import pytest

from bllab.report import RunReport, emit_report, load_report, loglog_svg, report_json, summary_csv

GOLDEN = Path(__file__).parent / "golden" / "summary_header.csv"


def _sample():
    recs = [{"epsilon": e, "status": "ok", "U_L2": 0.3 * e ** 2, "W_L2": 0.5 * e,
             "assumptions_pass": True, "divergence_max": 1e-14} for e in (0.2, 0.1, 0.05)]
    recs.append({"epsilon": 0.025, "status": "failed", "error": "RuntimeError: boom"})
    fit = {"slope": 2.0, "intercept": -1.2, "r2": 1.0, "slope_ci": 0.0, "n": 3}
    return RunReport(config={"gamma": 0.5, "norms": {"M": 11}}, records=recs,
                     fits={"U_L2": fit}, verdicts={"U_L2_slope": {"pass": True, "value": 2.0,
                                                                  "band": [1.5, 2.5], "r2": 1.0}},
                     provenance={"config_hash": "abc", "code_version": "0"},
                     timing={"pipeline": 1.5})


def test_empty_report(tmp_path):
    paths = emit_report(RunReport(), tmp_path)
    assert {p.name for p in paths} == {"report.json", "summary.csv", "verdict.txt"}
    assert (tmp_path / "summary.csv").read_text() == GOLDEN.read_text()
    assert json.loads((tmp_path / "report.json").read_text())["records"] == []
    assert "OVERALL PASS" in (tmp_path / "verdict.txt").read_text()
    assert not (tmp_path / "timing.json").exists()


def test_csv_schema_matches_golden_file():
    header = summary_csv(_sample()).splitlines()[0]
    assert header + "\n" == GOLDEN.read_text()


def test_csv_cells():
    rows = summary_csv(_sample()).splitlines()
    assert len(rows) == 5
    first = rows[1].split(",")
    assert first[0] == "2.0000000000e-01" and first[1] == "ok"
    assert "true" in first
    assert rows[4].endswith("RuntimeError: boom")


def test_json_round_trip(tmp_path):
    rep = _sample()
    emit_report(rep, tmp_path)
    back = load_report(tmp_path)
    assert back == rep
    assert report_json(back) == report_json(rep)


def test_non_finite_values_become_null():
    rep = RunReport(records=[{"epsilon": 0.1, "status": "ok", "U_L2": float("nan")}])
    assert json.loads(report_json(rep))["records"][0]["U_L2"] is None


def test_emission_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    pa, pb = emit_report(_sample(), a), emit_report(_sample(), b)
    for x, y in zip(pa, pb):
        assert x.read_bytes() == y.read_bytes()
    assert json.loads((a / "timing.json").read_text()) == {"pipeline": 1.5}


def test_verdict_lists_failures(tmp_path):
    emit_report(_sample(), tmp_path)
    text = (tmp_path / "verdict.txt").read_text()
    assert "PASS U_L2_slope value=2" in text
    assert "CASE FAILED eps=0.025: RuntimeError: boom" in text


def test_svg_plot(tmp_path):
    emit_report(_sample(), tmp_path)
    svg = (tmp_path / "rate_U_L2.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert svg.count("<circle") == 3
    assert "slope 2.000" in svg


def test_svg_without_data():
    assert "no data" in loglog_svg([(0.1, None), (0.2, 0.0)])


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot create"):
        emit_report(RunReport(), blocker / "sub")
