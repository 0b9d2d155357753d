from __future__ import annotations

import csv
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtoc_market import analytics as an
from mtoc_market.participants import Prices
from mtoc_market.sw import social_welfare

from conftest import FIXTURES


@pytest.fixture(scope="module")
def reports(desk, desk_sw, desk_mtoc):
    return an.financial_report(desk, desk_sw), an.financial_report(desk, desk_mtoc)


def _read(name):
    with open(FIXTURES / name, newline="") as fh:
        return list(csv.reader(fh))


def test_accounting_identity(reports):
    for r in reports:
        assert r.payment_by_consumers == pytest.approx(
            r.total_generation_revenue + r.transmission_profit, abs=1e-6
        )
        for g in r.generators:
            assert g.profit == g.revenue - g.cost


def test_welfare_decomposition(desk, desk_sw, reports):
    sw_report, _ = reports
    assert sw_report.social_welfare == pytest.approx(social_welfare(desk, desk_sw), abs=1e-6)


def test_opportunity_cost_properties(desk_mtoc, reports):
    sw_report, mtoc_report = reports
    gaps = desk_mtoc.diagnostics["firm_gaps"]
    for r in reports:
        assert min(r.opportunity_costs.values()) >= -1e-6
        assert abs(r.opportunity_costs[an.CONSUMERS]) <= 1e-6
        assert r.make_whole <= r.generator_opportunity_cost + 1e-6
    assert abs(sw_report.opportunity_costs[an.TRANSMISSION]) <= 1e-6
    for g in desk_mtoc.scenario.generators:
        assert mtoc_report.opportunity_costs[g.id] <= gaps[g.id] + 1e-6


def test_unit_with_zero_schedule_has_zero_row(reports):
    for r in reports:
        g3 = next(g for g in r.generators if g.id == "G3")
        assert (g3.cost, g3.revenue, g3.profit) == (0.0, 0.0, 0.0)


def test_uncleared_solution_rejected(desk, desk_sw):
    broken = dataclasses.replace(desk_sw, q={k: v + 5.0 for k, v in desk_sw.q.items()})
    with pytest.raises(ValueError):
        an.financial_report(desk, broken)


def _with(solution, q, p, pR):
    sc = solution.scenario
    buses = tuple(sc.network.buses)
    return dataclasses.replace(solution, q=q, prices=Prices(buses, p, pR))


def test_weighted_average_price_examples(desk_sw):
    sc = desk_sw.scenario
    T = sc.T
    # q=(10, 30) at p=(20, 40) with no reserve charge -> 35
    sol = _with(desk_sw, {"2": np.full(T, 10.0), "3": np.full(T, 30.0)},
                np.tile([[0.0], [20.0], [40.0]], (1, T)), np.zeros(T))
    sol = dataclasses.replace(sol, scenario=dataclasses.replace(sc, config=dataclasses.replace(sc.config, phi=0.0)))
    assert an.weighted_avg_price(sol, 1) == pytest.approx(35.0)
    flat = _with(desk_sw, desk_sw.q, np.full((3, T), 17.0), np.zeros(T))
    assert an.weighted_avg_price(flat, 2) == pytest.approx(17.0)
    empty = _with(desk_sw, {"2": np.zeros(T), "3": np.zeros(T)}, np.full((3, T), 17.0), np.zeros(T))
    assert an.weighted_avg_price(empty, 1) is None


def test_series_have_one_row_per_period(reports):
    header, rows = an.series_table(reports)
    T = len(reports[0].series["total_demand"])
    for metric in reports[0].series:
        for r in reports:
            assert sum(1 for row in rows if row[1] == metric and row[2] == r.kind) == T


def test_make_whole_examples():
    rows = [an.GeneratorFinancials("a", 10.0, 30.0), an.GeneratorFinancials("b", 5.0, 5.0)]
    r = an.FinancialReport("SW", "x", rows, 0.0, 0.0, 0.0)
    assert an.make_whole_total(r) == 0.0


def test_compare_identical_reports(reports):
    sw_report, _ = reports
    for d in an.compare_runs(sw_report, sw_report):
        assert d.formatted in ("0.00%", "0.0000%", "n/a")


def test_compare_rejects_mismatched_scenarios(reports):
    sw_report, mtoc_report = reports
    other = dataclasses.replace(mtoc_report, scenario="elsewhere")
    with pytest.raises(ValueError):
        an.compare_runs(sw_report, other)


def test_zero_base_flagged():
    assert an.percent_change(5.0, 0.0) is None
    assert an.DeltaRow("transmission_profit", "x", 1.0, 0.0, None).formatted == "n/a"


@settings(max_examples=200)
@given(st.floats(-1e7, 1e7, allow_nan=False))
def test_money_format_round_trips(value):
    text = an.fmt_money(value)
    assert an.parse_money(text) == pytest.approx(round(value, 1), abs=0.051)
    assert text.count(".") == 1 and len(text.split(".")[1]) == 1


def test_money_format_examples():
    assert an.fmt_money(38008.5) == "38,008.5"
    assert an.fmt_money(-696.9) == "-696.9"
    assert an.fmt_money(-0.01) == "0.0"
    assert an.fmt_money(1078926.7) == "1,078,926.7"


def test_generator_table_replays_fixture_layout():
    reports = an.read_generator_table(FIXTURES / "generator_financials.csv")
    header, rows = an.generator_table([reports["MTOC"], reports["SW"]])
    printed = _read("generator_financials.csv")
    assert header == printed[0]
    # generator rows are reproduced cell for cell
    assert rows[:-1] == printed[1:-1]


def test_json_mirror_matches_csv(reports):
    header, rows = an.system_table(*reports)
    records = json.loads(an.to_json(header, rows))
    assert [list(r.values()) for r in records] == rows
    assert list(records[0]) == header
