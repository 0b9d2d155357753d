"""Settlement accounting, opportunity costs and model comparisons.

Consumers pay ``(p + phi * pR) * q`` at every bus and period.  Because the
energy balance and reserve requirement hold at the solution, that payment
equals generator revenue plus the transmission operator's arbitrage income.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .demand import consumer_surplus, optimal_demand
from .participants import (
    best_response,
    generation_cost,
    generation_revenue,
    instructed_profit,
    network_best_response,
    transmission_profit,
)
from .scenario import Scenario
from .sw import MarketSolution

CLEARING_TOL = 1e-6
TRANSMISSION = "transmission"
CONSUMERS = "consumers"
# bases this close to zero make a relative change meaningless
ZERO_BASE = 1e-6

# (key, label) in the order of the system summary table
SYSTEM_METRICS = (
    ("payment_by_consumers", "Payment by consumers"),
    ("consumers_surplus", "Consumers' surplus"),
    ("total_generation_cost", "Total generation cost"),
    ("total_generation_revenue", "Total revenue of generation units"),
    ("total_generation_profit", "Total profit of generation units"),
    ("transmission_profit", "Profit of transmission network operator"),
    ("social_welfare", "Total social welfare"),
)

# metrics whose relative change is printed with four decimals
FINE_METRICS = {"social_welfare"}


@dataclass(frozen=True)
class GeneratorFinancials:
    """One generator's settlement; ``profit`` defaults to ``revenue - cost``.

    An explicit profit is accepted only to replay published rows whose
    rounded columns differ from each other by a unit in the last place.
    """

    id: str
    cost: float
    revenue: float
    profit: float = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.profit is None:
            object.__setattr__(self, "profit", self.revenue - self.cost)


@dataclass
class FinancialReport:
    kind: str
    scenario: str
    generators: list[GeneratorFinancials]
    payment_by_consumers: float
    consumers_surplus: float
    transmission_profit: float
    opportunity_costs: dict[str, float] = field(default_factory=dict)
    series: dict[str, list[float | None]] = field(default_factory=dict)

    @property
    def total_generation_cost(self) -> float:
        return sum(g.cost for g in self.generators)

    @property
    def total_generation_revenue(self) -> float:
        return sum(g.revenue for g in self.generators)

    @property
    def total_generation_profit(self) -> float:
        return sum(g.profit for g in self.generators)

    @property
    def social_welfare(self) -> float:
        return self.consumers_surplus + self.total_generation_profit + self.transmission_profit

    @property
    def generator_opportunity_cost(self) -> float:
        ids = {g.id for g in self.generators}
        return sum(v for k, v in self.opportunity_costs.items() if k in ids)

    @property
    def total_opportunity_cost(self) -> float:
        return sum(self.opportunity_costs.values())

    @property
    def make_whole(self) -> float:
        return make_whole_total(self)

    def metric(self, key: str) -> float:
        return float(getattr(self, key))

    def system_summary(self) -> dict[str, float]:
        return {key: self.metric(key) for key, _ in SYSTEM_METRICS}


def weighted_avg_price(solution: MarketSolution, t: int) -> float | None:
    """Consumer payments divided by total demand in period ``t``; ``None`` without demand."""
    phi = solution.scenario.config.phi
    total_q = 0.0
    paid = 0.0
    for bus, q in solution.q.items():
        qt = float(q[t - 1])
        total_q += qt
        paid += (solution.prices.energy(bus, t) + phi * solution.prices.reserve(t)) * qt
    if total_q <= 0.0:
        return None
    return paid / total_q


def _check_cleared(solution: MarketSolution) -> None:
    energy, reserve = solution.clearing_residual()
    if energy > CLEARING_TOL or reserve > CLEARING_TOL:
        raise ValueError(
            f"solution does not clear the market (energy {energy:.3g}, reserve {reserve:.3g})"
        )


def opportunity_cost_report(scenario: Scenario, solution: MarketSolution, compact: bool = True) -> dict[str, float]:
    """Best-response profit minus instructed profit for every participant."""
    prices = solution.prices
    out: dict[str, float] = {}
    for gen in scenario.generators:
        best, _ = best_response(gen, scenario, prices, compact)
        out[gen.id] = best - instructed_profit(gen, solution.schedules[gen.id], prices, scenario)
    best_net, _ = network_best_response(scenario, prices)
    out[TRANSMISSION] = best_net - transmission_profit(scenario.network, solution.flows, prices)
    phi = scenario.config.phi
    consumer = 0.0
    for d in scenario.demands:
        for t in scenario.periods:
            curve = d.periods[t - 1]
            p, pR = prices.energy(d.bus, t), prices.reserve(t)
            resp = optimal_demand(curve, p, pR, phi, scenario.demand_floor(d, t))
            consumer += consumer_surplus(curve, resp.q, p, pR, phi) - consumer_surplus(
                curve, solution.demand(d.bus, t), p, pR, phi
            )
    out[CONSUMERS] = consumer
    return out


def financial_report(
    scenario: Scenario, solution: MarketSolution, with_opportunity_costs: bool = True
) -> FinancialReport:
    """Per-generator and system settlement of a cleared market."""
    _check_cleared(solution)
    prices = solution.prices
    phi = scenario.config.phi
    rows = [
        GeneratorFinancials(
            g.id,
            generation_cost(g, solution.schedules[g.id], scenario),
            generation_revenue(g, solution.schedules[g.id], prices),
        )
        for g in scenario.generators
    ]
    payment = 0.0
    surplus = 0.0
    for d in scenario.demands:
        for t in scenario.periods:
            q = solution.demand(d.bus, t)
            p, pR = prices.energy(d.bus, t), prices.reserve(t)
            payment += (p + phi * pR) * q
            surplus += consumer_surplus(d.periods[t - 1], q, p, pR, phi)
    report = FinancialReport(
        kind=solution.kind,
        scenario=scenario.name,
        generators=rows,
        payment_by_consumers=payment,
        consumers_surplus=surplus,
        transmission_profit=transmission_profit(scenario.network, solution.flows, prices),
    )
    total_q = [float(sum(q[t - 1] for q in solution.q.values())) for t in scenario.periods]
    report.series = {
        "total_demand": total_q,
        "average_energy_price": [weighted_avg_price(solution, t) for t in scenario.periods],
        "reserve_price": [prices.reserve(t) for t in scenario.periods],
    }
    if with_opportunity_costs:
        report.opportunity_costs = opportunity_cost_report(scenario, solution)
    return report


def make_whole_total(report: FinancialReport) -> float:
    """Lump sum covering every generator's negative profit."""
    return sum(max(0.0, -g.profit) for g in report.generators)


# --------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class DeltaRow:
    metric: str
    label: str
    mtoc: float
    sw: float
    change_pct: float | None

    @property
    def formatted(self) -> str:
        if self.change_pct is None:
            return "n/a"
        digits = 4 if self.metric in FINE_METRICS else 2
        value = round(self.change_pct, digits) + 0.0
        return f"{value:.{digits}f}%"


def percent_change(new: float, base: float) -> float | None:
    """Relative change in percent; ``None`` when the base is zero to within solver noise."""
    if abs(base) <= ZERO_BASE:
        return None
    return (new - base) / abs(base) * 100.0


def compare_runs(sw: FinancialReport, mtoc: FinancialReport) -> list[DeltaRow]:
    """Relative change of each system metric, MTOC over SW."""
    if sw.scenario != mtoc.scenario:
        raise ValueError(f"reports come from different scenarios: {sw.scenario!r} vs {mtoc.scenario!r}")
    rows = []
    for key, label in SYSTEM_METRICS:
        a, b = mtoc.metric(key), sw.metric(key)
        rows.append(DeltaRow(key, label, a, b, percent_change(a, b)))
    return rows


# --------------------------------------------------------------------------
# tables


def fmt_money(value: float) -> str:
    """Thousands separators and one decimal, as in settlement tables."""
    value = round(value, 1) + 0.0
    return f"{value:,.1f}"


def parse_money(text: str) -> float:
    return float(text.replace(",", "").replace("%", "").strip())


def generator_table(reports: Sequence[FinancialReport]) -> tuple[list[str], list[list[str]]]:
    """Cost/revenue/profit per generator, one column group per report, plus a SUM row."""
    header = ["GEN#"]
    for r in reports:
        header += [f"{r.kind} total cost", f"{r.kind} total revenue", f"{r.kind} total profit"]
    rows = []
    for k, g in enumerate(reports[0].generators):
        row = [g.id]
        for r in reports:
            gk = r.generators[k]
            row += [fmt_money(gk.cost), fmt_money(gk.revenue), fmt_money(gk.profit)]
        rows.append(row)
    total = ["SUM:"]
    for r in reports:
        total += [
            fmt_money(r.total_generation_cost),
            fmt_money(r.total_generation_revenue),
            fmt_money(r.total_generation_profit),
        ]
    rows.append(total)
    return header, rows


def system_table(sw: FinancialReport, mtoc: FinancialReport) -> tuple[list[str], list[list[str]]]:
    header = ["Description", mtoc.kind, sw.kind, "Change (%)"]
    rows = [[d.label, fmt_money(d.mtoc), fmt_money(d.sw), d.formatted] for d in compare_runs(sw, mtoc)]
    return header, rows


def single_system_table(report: FinancialReport) -> tuple[list[str], list[list[str]]]:
    header = ["Description", report.kind]
    rows = [[label, fmt_money(report.metric(key))] for key, label in SYSTEM_METRICS]
    rows.append(["Make-whole payment", fmt_money(report.make_whole)])
    return header, rows


def opportunity_table(reports: Sequence[FinancialReport]) -> tuple[list[str], list[list[str]]]:
    header = ["Participants"] + [r.kind for r in reports]
    rows = [
        ["Generation units"] + [fmt_money(r.generator_opportunity_cost) for r in reports],
        ["Transmission network operator"] + [fmt_money(r.opportunity_costs.get(TRANSMISSION, 0.0)) for r in reports],
        ["Consumers"] + [fmt_money(r.opportunity_costs.get(CONSUMERS, 0.0)) for r in reports],
        ["SUM:"] + [fmt_money(r.total_opportunity_cost) for r in reports],
    ]
    return header, rows


def series_table(reports: Sequence[FinancialReport]) -> tuple[list[str], list[list[Any]]]:
    """Long format: one row per period, metric and model."""
    header = ["t", "metric", "model", "value"]
    rows: list[list[Any]] = []
    for r in reports:
        for metric, values in r.series.items():
            for t, v in enumerate(values, start=1):
                rows.append([t, metric, r.kind, "" if v is None else repr(float(v))])
    rows.sort(key=lambda row: (row[1], row[2], row[0]))
    return header, rows


def to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def to_json(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    return json.dumps([dict(zip(header, row)) for row in rows], indent=2) + "\n"


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], fmt: str = "csv") -> Path:
    path = Path(path).with_suffix(f".{fmt}")
    path.parent.mkdir(parents=True, exist_ok=True)
    text = to_csv(header, rows) if fmt == "csv" else to_json(header, rows)
    path.write_text(text)
    return path


def report_to_dict(report: FinancialReport) -> dict[str, Any]:
    return {
        "kind": report.kind,
        "scenario": report.scenario,
        "generators": [
            {"id": g.id, "cost": g.cost, "revenue": g.revenue, "profit": g.profit} for g in report.generators
        ],
        "system": report.system_summary(),
        "make_whole": report.make_whole,
        "opportunity_costs": dict(report.opportunity_costs),
        "series": report.series,
    }


def read_generator_table(path: str | Path, scenario: str = "fixture") -> dict[str, FinancialReport]:
    """Rebuild per-model reports from a generator table written by :func:`generator_table`.

    The trailing SUM row is ignored; only generator rows are loaded.
    """
    with open(path, newline="") as fh:
        table = list(csv.reader(fh))
    header, body = table[0], [r for r in table[1:] if r and r[0] != "SUM:"]
    kinds = [header[k].split(" ")[0] for k in range(1, len(header), 3)]
    reports = {}
    for m, kind in enumerate(kinds):
        k = 1 + 3 * m
        gens = [
            GeneratorFinancials(r[0], parse_money(r[k]), parse_money(r[k + 1]), parse_money(r[k + 2]))
            for r in body
        ]
        reports[kind] = FinancialReport(kind, scenario, gens, 0.0, 0.0, 0.0)
    return reports
