from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtoc_market.scenario import load_scenario, scale_scenario
from mtoc_market.solver import enumerate_binaries
from mtoc_market.sw import (
    StepError,
    build_sw,
    model_stats,
    social_welfare,
    solve_sw,
)

from conftest import RTS_PATH, random_desk


def test_desk_welfare_matches_objective(desk, desk_sw):
    assert social_welfare(desk, desk_sw) == pytest.approx(-desk_sw.objective, abs=1e-6)
    assert desk_sw.diagnostics["step1_objective"] == pytest.approx(desk_sw.objective, abs=1e-6)


def test_desk_clears(desk_sw):
    energy, reserve = desk_sw.clearing_residual()
    assert energy < 1e-6 and reserve < 1e-6


def test_desk_prices(desk_sw):
    # cheapest unit at the margin except in the peak period
    assert desk_sw.prices.p[:, 0] == pytest.approx([10, 10, 10], abs=1e-6)
    assert desk_sw.prices.p[:, 2] == pytest.approx([25, 25, 25], abs=1e-6)


def test_desk_objective_matches_enumeration(desk):
    model = build_sw(desk).model
    assert model.n_binaries <= 12
    exact = enumerate_binaries(model).require_optimal()
    assert solve_sw(desk).objective == pytest.approx(exact.objective, abs=1e-6)


def test_rts_binary_count():
    sc = load_scenario(RTS_PATH)
    t0 = time.perf_counter()
    stats = model_stats(build_sw(sc).model)
    assert time.perf_counter() - t0 < 5.0
    assert stats.binaries == 288


def test_pwl_route_within_bound(desk, desk_sw):
    sol = solve_sw(desk, method="pwl", segments=64)
    bound = sol.diagnostics["approx_bound"]
    assert bound > 0
    assert sol.objective == pytest.approx(desk_sw.objective, abs=1e-6 + bound)


def test_infeasible_floor_reports_step(desk):
    tight = scale_scenario(desk, gmax_pct=20)
    with pytest.raises(StepError) as err:
        solve_sw(tight)
    assert "step 1" in err.value.step


@settings(max_examples=4, deadline=None)
@given(seed=st.integers(0, 1000))
def test_compact_reduction_equivalent(seed):
    sc = random_desk(seed)
    assert solve_sw(sc, compact=False).objective == pytest.approx(solve_sw(sc).objective, abs=1e-6)


@settings(max_examples=4, deadline=None)
@given(seed=st.integers(0, 1000), h=st.sampled_from([0.0, 0.5, 1.0]))
def test_higher_floor_never_raises_welfare(seed, h):
    sc = random_desk(seed)
    low = solve_sw(scale_scenario(sc, h=h))
    high = solve_sw(scale_scenario(sc, h=h + 0.1))
    assert social_welfare(high.scenario, high) <= social_welfare(low.scenario, low) + 1e-6


def test_prices_equal_step2_duals(desk_sw):
    for t in range(1, desk_sw.scenario.T + 1):
        for bus in desk_sw.scenario.network.buses:
            assert desk_sw.prices.energy(bus, t) == desk_sw.duals[f"bal.{bus}.{t}"]
        assert desk_sw.prices.reserve(t) == desk_sw.duals[f"res.{t}"]
    assert np.all(desk_sw.prices.pR >= -1e-9)
