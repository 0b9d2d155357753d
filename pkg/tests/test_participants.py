from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtoc_market.participants import (
    GeneratorSchedule,
    Prices,
    best_response,
    build_generator_block,
    build_network_block,
    generation_cost,
    generation_revenue,
    instructed_profit,
    network_best_response,
    transmission_profit,
)
from mtoc_market.solver import ModelBuilder, enumerate_binaries

from conftest import random_desk


def test_generator_block_binaries(desk):
    g1 = desk.generator("G1")
    reduced = build_generator_block(g1, desk, compact=True)
    full = build_generator_block(g1, desk, compact=False)
    assert len(reduced.z_names) == desk.T
    assert len(full.z_names) == 3 * desk.T
    assert any(r.name.startswith("sig.") for r in reduced.rows)
    assert not any(r.name.startswith("sig.") for r in full.rows)


def test_first_period_startup_row_uses_initial_state(desk):
    for gen in desk.generators:
        block = build_generator_block(gen, desk)
        row = block.rows[block.row_index[f"sig.{gen.id}.1"]]
        assert row.rhs == 1 - gen.initial_on


def test_equalities_stored_as_mirrored_pairs(desk):
    block = build_generator_block(desk.generator("G2"), desk)
    pairs: dict[str, dict] = {}
    for row in block.rows:
        if row.pair is not None:
            pairs.setdefault(row.pair, {})[row.side] = row
    assert pairs
    for halves in pairs.values():
        le, ge = halves["le"], halves["ge"]
        assert ge.rhs == -le.rhs
        assert dict(ge.coefs) == {k: -v for k, v in le.coefs.items()}


def test_zero_schedule_has_zero_economics(desk):
    gen = desk.generator("G3")
    s = GeneratorSchedule.zeros(desk.T)
    prices = Prices.uniform(desk.network.buses, desk.T, 50.0, 5.0)
    assert generation_cost(gen, s, desk) == 0.0
    assert generation_revenue(gen, s, prices) == 0.0


def test_expensive_prices_keep_unit_off(desk):
    gen = desk.generator("G3")
    prices = Prices.uniform(desk.network.buses, desk.T, 1.0)
    profit, sched = best_response(gen, desk, prices)
    assert profit == pytest.approx(0.0, abs=1e-9)
    assert sched.z.sum() == 0


def _block_oracle(block, prices):
    b = ModelBuilder("oracle")
    block.add_to(b, prices=prices)
    return -enumerate_binaries(b.build()).require_optimal().objective


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 500), level=st.floats(5, 60), res=st.floats(0, 15))
def test_best_response_matches_enumeration(seed, level, res):
    sc = random_desk(seed)
    rng = np.random.default_rng(seed)
    p = level * rng.uniform(0.5, 1.5, (3, sc.T))
    prices = Prices(sc.network.buses, p, np.full(sc.T, res))
    for gen in sc.generators:
        profit, sched = best_response(gen, sc, prices)
        assert profit == pytest.approx(_block_oracle(build_generator_block(gen, sc), prices), abs=1e-6)
        assert profit == pytest.approx(instructed_profit(gen, sched, prices, sc), abs=1e-6)
        full, _ = best_response(gen, sc, prices, compact=False)
        assert full == pytest.approx(profit, abs=1e-6)


def test_uniform_prices_give_no_arbitrage(desk):
    prices = Prices.uniform(desk.network.buses, desk.T, 30.0)
    profit, flows = network_best_response(desk, prices)
    assert profit == pytest.approx(0.0, abs=1e-9)
    assert transmission_profit(desk.network, flows, prices) == pytest.approx(0.0, abs=1e-9)


def test_price_spread_is_arbitraged(desk):
    p = np.tile(np.array([[10.0], [40.0], [10.0]]), (1, desk.T))
    prices = Prices(desk.network.buses, p, np.zeros(desk.T))
    profit, flows = network_best_response(desk, prices)
    assert profit > 0
    assert profit == pytest.approx(transmission_profit(desk.network, flows, prices), abs=1e-6)
    limits = np.array([desk.effective_fmax(l) for l in desk.network.lines])
    assert np.all(np.abs(flows) <= limits[:, None] + 1e-6)


def test_network_block_has_no_binaries(desk):
    block = build_network_block(desk.network, desk)
    assert block.z_names == ()
    assert block.free_pairs
