"""Social-welfare clearing with two-step pricing.

The clearing model minimises total generation cost minus consumers' benefit
subject to every firm's rows, the demand floors, one reserve requirement row
per period and one energy balance row per bus/period.  Prices come from a
second solve with all binaries fixed at the optimum of the first.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .demand import benefit
from .participants import (
    FirmBlock,
    GeneratorSchedule,
    Prices,
    angles_from_values,
    build_generator_block,
    build_network_block,
    flows_from_values,
    generation_cost,
    price_name,
    reserve_price_name,
    var_name,
)
from .scenario import Scenario
from .solver import (
    DEFAULT_PWL_SEGMENTS,
    ModelBuilder,
    ModelInstance,
    SolveResult,
    SolverError,
    solve_miqp,
    solve_qp,
)

SW = "SW"
MTOC = "MTOC"


class StepError(SolverError):
    """A clearing solve did not reach optimality; ``step`` names which one."""

    def __init__(self, step: str, result: SolveResult):
        super().__init__(f"{step}: status {result.status}")
        self.step = step
        self.result = result


def balance_row(bus: str, t: int) -> str:
    return f"bal.{bus}.{t}"


def reserve_row(t: int) -> str:
    return f"res.{t}"


def demand_var(bus: str, t: int) -> str:
    return var_name("q", bus, t)


@dataclass(frozen=True)
class ModelStats:
    binaries: int
    continuous: int
    rows: int

    def as_dict(self) -> dict[str, int]:
        return {"binaries": self.binaries, "continuous": self.continuous, "rows": self.rows}


def model_stats(model: ModelInstance) -> ModelStats:
    nb = model.n_binaries
    return ModelStats(binaries=nb, continuous=model.n_vars - nb, rows=model.n_rows)


@dataclass
class Assembly:
    """An assembled clearing model together with the firm blocks it contains."""

    scenario: Scenario
    model: ModelInstance
    blocks: tuple[FirmBlock, ...]
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass
class MarketSolution:
    scenario: Scenario
    kind: str
    objective: float
    values: dict[str, float]
    schedules: dict[str, GeneratorSchedule]
    q: dict[str, np.ndarray]
    flows: np.ndarray
    angles: np.ndarray
    prices: Prices
    assembly: Assembly
    u: dict[str, np.ndarray] = field(default_factory=dict)
    duals: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def model(self) -> ModelInstance:
        return self.assembly.model

    @property
    def blocks(self) -> tuple[FirmBlock, ...]:
        return self.assembly.blocks

    def demand(self, bus: str, t: int) -> float:
        return float(self.q[bus][t - 1]) if bus in self.q else 0.0

    def clearing_residual(self) -> tuple[float, float]:
        """Largest energy-balance and reserve-requirement violations."""
        sc = self.scenario
        T = sc.T
        supply = {b: np.zeros(T) for b in sc.network.buses}
        reserve = np.zeros(T)
        for gen in sc.generators:
            supply[gen.bus] += self.schedules[gen.id].g
            if gen.reserve_capable:
                reserve += self.schedules[gen.id].gR
        for li, line in enumerate(sc.network.lines):
            supply[line.from_bus] -= self.flows[li]
            supply[line.to_bus] += self.flows[li]
        energy = max(
            float(np.abs(supply[b] - self.q.get(b, np.zeros(T))).max()) for b in sc.network.buses
        )
        total_q = sum(self.q.values(), np.zeros(T))
        res = float(np.abs(reserve - sc.config.phi * total_q).max())
        return energy, res


def _add_clearing(builder: ModelBuilder, scenario: Scenario, blocks: tuple[FirmBlock, ...]) -> None:
    T = scenario.T
    energy: dict[tuple[str, int], dict[str, float]] = {(b, t): {} for t in scenario.periods for b in scenario.network.buses}
    reserve: dict[int, dict[str, float]] = {t: {} for t in scenario.periods}
    for block in blocks:
        for col, links in block.energy.items():
            for bus, t, coef in links:
                row = energy[(bus, t)]
                row[col] = row.get(col, 0.0) + coef
        for col, links in block.reserve.items():
            for t, coef in links:
                reserve[t][col] = reserve[t].get(col, 0.0) + coef
    phi = scenario.config.phi
    for t in range(1, T + 1):
        row = dict(reserve[t])
        for d in scenario.demands:
            row[demand_var(d.bus, t)] = -phi
        builder.add_row(reserve_row(t), row, "=", 0.0, "reserve_requirement")
    for t in range(1, T + 1):
        for bus in scenario.network.buses:
            row = dict(energy[(bus, t)])
            if scenario.demand_at(bus) is not None:
                row[demand_var(bus, t)] = -1.0
            builder.add_row(balance_row(bus, t), row, "=", 0.0, "energy_balance")


def demand_upper_bound(scenario: Scenario) -> float:
    """Total installed capacity; no bus can consume more than this."""
    return sum(scenario.effective_gmax(g) for g in scenario.generators)


def firm_blocks(scenario: Scenario, compact: bool = True) -> tuple[FirmBlock, ...]:
    blocks = [build_generator_block(g, scenario, compact) for g in scenario.generators]
    blocks.append(build_network_block(scenario.network, scenario))
    return tuple(blocks)


def build_sw(scenario: Scenario, compact: bool = True) -> Assembly:
    builder = ModelBuilder(f"sw.{scenario.name}")
    blocks = firm_blocks(scenario, compact)
    for block in blocks:
        block.add_to(builder)
    q_cap = demand_upper_bound(scenario) + 1.0
    for d in scenario.demands:
        for t in scenario.periods:
            curve = d.periods[t - 1]
            floor = scenario.demand_floor(d, t)
            name = demand_var(d.bus, t)
            builder.add_var(name, 0.0, max(q_cap, floor + 1.0), cost=-curve.a, quad=0.5 * curve.b)
            builder.add_row(f"floor.{name}", {name: 1.0}, ">", floor, "demand_floor")
    _add_clearing(builder, scenario, blocks)
    return Assembly(scenario, builder.build(), blocks)


def assemble_sw(scenario: Scenario, compact: bool = True) -> ModelInstance:
    """Welfare-maximising clearing model (as a minimisation)."""
    return build_sw(scenario, compact).model


def extract_solution(
    assembly: Assembly, kind: str, result: SolveResult, prices: Prices, objective: float
) -> MarketSolution:
    sc = assembly.scenario
    values = result.values()
    schedules = {g.id: GeneratorSchedule.from_values(g.id, sc.T, values) for g in sc.generators}
    q = {d.bus: np.array([values[demand_var(d.bus, t)] for t in sc.periods]) for d in sc.demands}
    sol = MarketSolution(
        scenario=sc,
        kind=kind,
        objective=objective,
        values=values,
        schedules=schedules,
        q=q,
        flows=flows_from_values(sc.network, sc.T, values),
        angles=angles_from_values(sc.network, sc.T, values),
        prices=prices,
        assembly=assembly,
    )
    energy, reserve = sol.clearing_residual()
    sol.diagnostics.update(
        primal_residual=result.primal_residual,
        energy_balance_residual=energy,
        reserve_residual=reserve,
        method=result.method,
        approx_bound=result.approx_bound,
    )
    return sol


def solve_sw(
    scenario: Scenario,
    method: str = "auto",
    segments: int = DEFAULT_PWL_SEGMENTS,
    compact: bool = True,
) -> MarketSolution:
    """Clear the market for welfare and price it from the fixed-commitment re-solve."""
    assembly = build_sw(scenario, compact)
    model = assembly.model
    step1 = solve_miqp(model, method=method, segments=segments)
    if not step1.ok:
        raise StepError("step 1 (commitment)", step1)
    step2 = solve_qp(model.fix_binaries(step1.x))
    if not step2.ok:
        raise StepError("step 2 (pricing)", step2)
    step2.model = model
    buses = scenario.network.buses
    p = np.array([[step2.dual(balance_row(b, t)) for t in scenario.periods] for b in buses])
    pR = np.array([step2.dual(reserve_row(t)) for t in scenario.periods])
    sol = extract_solution(assembly, SW, step2, Prices(tuple(buses), p, pR), step2.objective)
    sol.duals = dict(zip(model.row_names, map(float, step2.duals)))
    sol.diagnostics.update(
        step1_objective=step1.objective,
        step1_time=step1.wall_time,
        step2_time=step2.wall_time,
        approx_bound=step1.approx_bound,
        dual_residual=step2.dual_residual,
        stats=model_stats(model).as_dict(),
    )
    return sol


def total_benefit(scenario: Scenario, q: Mapping[str, np.ndarray]) -> float:
    total = 0.0
    for d in scenario.demands:
        for t in scenario.periods:
            total += benefit(d.periods[t - 1], float(q[d.bus][t - 1]))
    return total


def social_welfare(scenario: Scenario, solution: MarketSolution) -> float:
    """Consumers' benefit minus total generation cost."""
    cost = sum(generation_cost(g, solution.schedules[g.id], scenario) for g in scenario.generators)
    return total_benefit(scenario, solution.q) - cost


def prices_row_names(scenario: Scenario) -> list[str]:
    names = [price_name(b, t) for t in scenario.periods for b in scenario.network.buses]
    return names + [reserve_price_name(t) for t in scenario.periods]
