from __future__ import annotations

import copy
import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtoc_market.scenario import (
    FloorAboveDemandWarning,
    ScenarioError,
    apply_defaults,
    derive_susceptance,
    dump_scenario,
    load_scenario,
    scale_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

from conftest import DESK_PATH, RTS_PATH, random_desk_dict

MINIMAL = {
    "config": {"T": 1, "phi": 0.0, "slack_bus": "a"},
    "buses": ["a", "b"],
    "lines": [{"id": "ab", "from": "a", "to": "b", "reactance": 0.5, "fmax": 10}],
    "generators": [
        {"id": "g", "bus": "a", "lambda": 10, "c_su": 0, "c_rp": 0, "ru": 10, "rd": 10, "gmin": 0,
         "gmax": 10, "dmin": 1, "umin": 1, "reserve_capable": False, "z0": 0, "g0": 0, "t_on": 0, "t_off": 0}
    ],
    "demands": [{"bus": "b", "series": [{"qbar": 8, "qmin": 4, "ph": 30, "pl": 10}]}],
}


def test_minimal_two_bus_file():
    sc = scenario_from_dict(copy.deepcopy(MINIMAL))
    assert len(sc.network.buses) == 2
    assert len(sc.network.lines) == 1
    assert sc.network.lines[0].susceptance == 2.0


def test_bundled_rts_shape():
    sc = load_scenario(RTS_PATH)
    assert len(sc.network.buses) == 24
    assert len(sc.generators) == 12
    assert len(sc.demands) == 17
    assert sc.T == 24


def test_unknown_destination_bus_names_line():
    raw = copy.deepcopy(MINIMAL)
    raw["lines"][0]["to"] = "zz"
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(raw)
    assert "ab" in str(err.value)
    assert err.value.path.startswith("lines[0]")


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda r: r["generators"][0].update(gmin=20), "generators[0].gmin"),
        (lambda r: r["generators"][0].update(z0=0, g0=5), "generators[0].g0"),
        (lambda r: r["generators"][0].update(t_on=2, t_off=2), "generators[0].t_on"),
        (lambda r: r["lines"][0].update(reactance=0), "lines[0].reactance"),
        (lambda r: r["config"].update(phi=0.05), "generators"),
        (lambda r: r["demands"][0]["series"][0].update(ph=10), "demands"),
    ],
)
def test_invariant_violations_report_field_path(mutate, path):
    raw = copy.deepcopy(MINIMAL)
    mutate(raw)
    with pytest.raises((ScenarioError, ValueError)) as err:
        scenario_from_dict(raw)
    if isinstance(err.value, ScenarioError):
        assert err.value.path.startswith(path)


def test_parse_failure(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    with pytest.raises(ScenarioError):
        load_scenario(bad)


def test_defaults_from_factors():
    raw = copy.deepcopy(MINIMAL)
    raw["generators"][0].update({"lambda": 50, "c_su": 1000, "ru": 30})
    sc = apply_defaults(scenario_from_dict(raw))
    g = sc.generators[0]
    assert g.reserve_cost == 20.0
    assert g.shutdown_cost == 200.0
    assert g.startup_rate == 30
    assert g.shutdown_rate == 10


@pytest.mark.parametrize("x, b", [(0.25, 4.0), (1.0, 1.0)])
def test_susceptance(x, b):
    assert derive_susceptance(x) == b


@pytest.mark.parametrize("x", [0.0, -1.0])
def test_susceptance_rejects_non_positive(x):
    with pytest.raises(ValueError):
        derive_susceptance(x)


def test_scaling_examples(desk):
    assert scale_scenario(desk, 1.0, 100, 100) == desk
    raw = copy.deepcopy(MINIMAL)
    raw["lines"][0]["fmax"] = 500
    sc = scale_scenario(scenario_from_dict(raw), fmax_pct=60)
    assert sc.effective_fmax(sc.network.lines[0]) == pytest.approx(300)
    raw = copy.deepcopy(MINIMAL)
    raw["demands"][0]["series"][0].update(qmin=85, qbar=100)
    sc = scenario_from_dict(raw)
    with pytest.warns(FloorAboveDemandWarning):
        high = scale_scenario(sc, h=1.2)
    assert high.demand_floor(high.demands[0], 1) == pytest.approx(102)


def test_scaling_leaves_demand_curves(desk):
    scaled = scale_scenario(desk, h=0.5, fmax_pct=70, gmax_pct=120)
    assert scaled.demands == desk.demands


@settings(max_examples=40, deadline=None)
@given(st.floats(10, 100), st.floats(10, 100))
def test_scaling_composes(a, b):
    sc = scenario_from_dict(copy.deepcopy(MINIMAL))
    line = sc.network.lines[0]
    twice = scale_scenario(scale_scenario(sc, fmax_pct=a), fmax_pct=b)
    once = scale_scenario(sc, fmax_pct=a * b / 100)
    assert twice.effective_fmax(line) == pytest.approx(once.effective_fmax(line), rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_round_trip(seed, tmp_path_factory):
    sc = scenario_from_dict(random_desk_dict(seed))
    path = tmp_path_factory.mktemp("rt") / "s.json"
    dump_scenario(sc, path)
    again = load_scenario(path)
    assert again == sc
    assert scenario_to_dict(again) == scenario_to_dict(sc)


def test_bundled_files_round_trip(tmp_path):
    for path in (DESK_PATH, RTS_PATH):
        sc = load_scenario(path)
        out = tmp_path / path.name
        dump_scenario(sc, out)
        assert load_scenario(out) == sc
        json.loads(out.read_text())


def test_no_warning_at_nominal_floor(desk):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        scale_scenario(desk, h=1.0)
