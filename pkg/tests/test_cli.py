from __future__ import annotations

import csv
import json

import pytest
from click.testing import CliRunner

from mtoc_market.cli import DEFAULT_GRIDS, SWEEP_METRICS, SweepSpec, main

from conftest import DESK_PATH, RTS_PATH


def _run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def _table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_sw_writes_reports(tmp_path):
    res = _run("solve", "--model", "sw", "--scenario", DESK_PATH, "--out", tmp_path)
    assert res.exit_code == 0, res.output
    assert "binaries=12" in res.output
    run = tmp_path / "desk-sw"
    for name in ("stats", "generators", "system", "opportunity_costs", "series", "schedule", "prices"):
        assert (run / f"{name}.csv").exists()
    stats = {r["metric"]: r["value"] for r in _table(run / "stats.csv")}
    assert stats["binaries"] == "12" and stats["status"] == "optimal"


def test_solve_mtoc_json_and_model_dump(tmp_path):
    res = _run("solve", "--model", "mtoc", "--scenario", DESK_PATH, "--out", tmp_path, "--format", "json",
               "--dump-model")
    assert res.exit_code == 0, res.output
    run = tmp_path / "desk-mtoc"
    stats = {r["metric"]: r["value"] for r in json.loads((run / "stats.json").read_text())}
    assert stats["binaries"] == 20
    assert (run / "model.lp").read_text().startswith("\\ mtoc.desk")


def test_rts_mtoc_stats(tmp_path):
    res = _run("solve", "--model", "mtoc", "--scenario", RTS_PATH, "--out", tmp_path, "--assemble-only")
    assert res.exit_code == 0, res.output
    assert "binaries=696" in res.output


@pytest.mark.parametrize(
    "args, code",
    [
        (("solve", "--model", "sw", "--scenario", "/no/such/file.json"), 3),
        (("solve", "--model", "nope", "--scenario", DESK_PATH), 2),
        (("solve", "--model", "mtoc", "--scenario", DESK_PATH, "--price-cap", "10"), 2),
        (("sweep", "--scenario", DESK_PATH, "--parameter", "h", "--values", "-1"), 2),
    ],
)
def test_exit_codes(args, code, tmp_path):
    res = _run(*args, "--out", tmp_path)
    assert res.exit_code == code, res.output


def test_parse_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert _run("solve", "--model", "sw", "--scenario", bad, "--out", tmp_path).exit_code == 3


def test_infeasible_exit_code(tmp_path):
    raw = json.loads(DESK_PATH.read_text())
    raw["config"]["gmax_pct"] = 20
    path = tmp_path / "tight.json"
    path.write_text(json.dumps(raw))
    assert _run("solve", "--model", "sw", "--scenario", path, "--out", tmp_path).exit_code == 4


def test_compare_outputs_and_determinism(tmp_path):
    outs = []
    for k in range(2):
        res = _run("compare", "--scenario", DESK_PATH, "--out", tmp_path / str(k))
        assert res.exit_code == 0, res.output
        outs.append(tmp_path / str(k) / "desk-compare")
    checks = {r["check"]: r["holds"] for r in _table(outs[0] / "checks.csv")}
    assert checks["OC(MTOC) <= OC(SW)"] == "true"
    series = _table(outs[0] / "series.csv")
    T = 4
    for metric in ("total_demand", "average_energy_price", "reserve_price"):
        for model in ("SW", "MTOC"):
            assert sum(1 for r in series if r["metric"] == metric and r["model"] == model) == T
    welfare = next(r for r in _table(outs[0] / "system.csv") if r["Description"] == "Total social welfare")
    change = welfare["Change (%)"]
    assert change.endswith("%") and len(change.rstrip("%").split(".")[1]) == 4
    for f in sorted(outs[0].iterdir()):
        assert f.read_bytes() == (outs[1] / f.name).read_bytes()


def test_sweep_row_count_and_monotone_welfare(tmp_path):
    res = _run("sweep", "--scenario", DESK_PATH, "--parameter", "fmax_pct", "--out", tmp_path, "--jobs", "2")
    assert res.exit_code == 0, res.output
    rows = _table(tmp_path / "desk-sweep-fmax_pct" / "sweep.csv")
    assert len(rows) == len(DEFAULT_GRIDS["fmax_pct"]) * 2 * len(SWEEP_METRICS)
    welfare = [float(r["result"]) for r in rows if r["metric"] == "social_welfare" and r["model"] == "SW"]
    assert all(b >= a - 1e-6 for a, b in zip(welfare, welfare[1:]))


@pytest.mark.filterwarnings("ignore::mtoc_market.scenario.FloorAboveDemandWarning")
def test_h_sweep_has_six_groups(tmp_path):
    res = _run("sweep", "--scenario", DESK_PATH, "--parameter", "h", "--model", "sw", "--out", tmp_path)
    assert res.exit_code == 0, res.output
    rows = _table(tmp_path / "desk-sweep-h" / "sweep.csv")
    assert len({r["value"] for r in rows}) == 6
    welfare = [float(r["result"]) for r in rows if r["metric"] == "social_welfare"]
    assert all(b <= a + 1e-6 for a, b in zip(welfare, welfare[1:]))


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("h", (), ("SW",))
    with pytest.raises(ValueError):
        SweepSpec("fmax_pct", (0.0,), ("SW",))
    with pytest.raises(ValueError):
        SweepSpec("theta", (1.0,), ("SW",))
