"""Generator and transmission-operator problems in canonical block form.

Every firm is described by a :class:`FirmBlock`: non-negative continuous
columns ``x`` with costs ``c``, binary columns ``z`` with costs ``d``, rows
``E x + D z <= b`` and the linking coefficients that map ``x`` into the
energy balance at each bus/period (``A``) and into the reserve requirement
(``B``).  Equalities are stored as ``.le``/``.ge`` row pairs so that the same
block can be dualised mechanically; the primal models collapse each pair back
into a single equality row.

Period ``t-1`` at ``t = 1`` is replaced by the initial status and output, so
the first-period rows carry those constants in their right-hand sides.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .scenario import GeneratorSpec, Network, Scenario
from .solver import ModelBuilder, SolveResult, solve_milp

GENERATOR = "generator"
NETWORK = "network"


def var_name(kind: str, owner: str, t: int) -> str:
    return f"{kind}.{owner}.{t}"


def price_name(bus: str, t: int) -> str:
    return f"p.{bus}.{t}"


def reserve_price_name(t: int) -> str:
    return f"pR.{t}"


@dataclass(frozen=True)
class BlockRow:
    """One ``<=`` row of a firm block.

    ``pair`` is the base name of the equality this row belongs to (``None``
    for genuine inequalities) and ``side`` is ``"le"`` or ``"ge"``.
    """

    name: str
    coefs: Mapping[str, float]
    rhs: float
    tag: str
    pair: str | None = None
    side: str | None = None


@dataclass(frozen=True)
class FirmBlock:
    firm: str
    kind: str
    x_names: tuple[str, ...]
    z_names: tuple[str, ...]
    c: Mapping[str, float]
    d: Mapping[str, float]
    rows: tuple[BlockRow, ...]
    # column -> ((bus, t, coef), ...) contributions to the energy balance
    energy: Mapping[str, tuple[tuple[str, int, float], ...]]
    # column -> ((t, coef), ...) contributions to the reserve requirement
    reserve: Mapping[str, tuple[tuple[int, float], ...]]
    # free physical quantities stored as (positive part, negative part)
    free_pairs: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.x_names + self.z_names

    @cached_property
    def row_index(self) -> dict[str, int]:
        return {r.name: i for i, r in enumerate(self.rows)}

    @cached_property
    def column_rows(self) -> dict[str, list[tuple[str, float]]]:
        """Transpose of the row data: column -> [(row name, coefficient)]."""
        out: dict[str, list[tuple[str, float]]] = {n: [] for n in self.columns}
        for row in self.rows:
            for col, coef in row.coefs.items():
                out[col].append((row.name, coef))
        return out

    def _matrix(self, cols: tuple[str, ...]) -> sparse.csr_matrix:
        index = {n: j for j, n in enumerate(cols)}
        ri, ci, vals = [], [], []
        for i, row in enumerate(self.rows):
            for col, coef in row.coefs.items():
                if col in index:
                    ri.append(i)
                    ci.append(index[col])
                    vals.append(coef)
        return sparse.csr_matrix((vals, (ri, ci)), shape=(len(self.rows), len(cols)))

    @property
    def E(self) -> sparse.csr_matrix:
        return self._matrix(self.x_names)

    @property
    def D(self) -> sparse.csr_matrix:
        return self._matrix(self.z_names)

    @property
    def b(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows])

    def primal_rows(self) -> Iterable[tuple[str, Mapping[str, float], str, float, str]]:
        """Rows for a primal model: inequalities as-is, pairs merged to ``=``."""
        for row in self.rows:
            if row.pair is None:
                yield row.name, row.coefs, "<", row.rhs, row.tag
            elif row.side == "le":
                yield row.pair, row.coefs, "=", row.rhs, row.tag

    def linked_cost(self, col: str, prices: Prices) -> float:
        """Price-adjusted cost ``c - A'p - B'pR`` of one column."""
        cost = self.c.get(col, 0.0) + self.d.get(col, 0.0)
        for bus, t, coef in self.energy.get(col, ()):
            cost -= coef * prices.energy(bus, t)
        for t, coef in self.reserve.get(col, ()):
            cost -= coef * prices.reserve(t)
        return cost

    def add_to(self, builder: ModelBuilder, with_costs: bool = True, prices: Prices | None = None) -> None:
        """Add columns and primal rows; costs are ``c``/``d`` or price-adjusted."""
        for col in self.x_names:
            if col not in builder:
                builder.add_var(col, 0.0)
        for col in self.z_names:
            if col not in builder:
                builder.add_var(col, binary=True)
        if with_costs:
            for col in self.columns:
                cost = self.linked_cost(col, prices) if prices is not None else self.c.get(col, 0.0) + self.d.get(col, 0.0)
                if cost:
                    builder.add_cost(col, cost)
        for name, coefs, sense, rhs, tag in self.primal_rows():
            builder.add_row(name, coefs, sense, rhs, tag)

    def profit(self, values: Mapping[str, float], prices: Prices) -> float:
        """Revenue minus cost of the firm's actions at the given prices."""
        return -sum(self.linked_cost(col, prices) * values[col] for col in self.columns)

    def residual(self, values: Mapping[str, float]) -> float:
        """Largest violation of the block rows and sign/integrality conditions."""
        worst = 0.0
        for row in self.rows:
            lhs = sum(coef * values[col] for col, coef in row.coefs.items())
            worst = max(worst, lhs - row.rhs)
        for col in self.x_names:
            worst = max(worst, -values[col])
        for col in self.z_names:
            zv = values[col]
            worst = max(worst, -zv, zv - 1.0, abs(zv - round(zv)))
        return worst


@dataclass(frozen=True)
class Prices:
    """Energy prices per bus/period and reserve prices per period."""

    buses: tuple[str, ...]
    p: np.ndarray
    pR: np.ndarray

    @cached_property
    def _bus_index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.buses)}

    def energy(self, bus: str, t: int) -> float:
        return float(self.p[self._bus_index[bus], t - 1])

    def reserve(self, t: int) -> float:
        return float(self.pR[t - 1])

    @classmethod
    def uniform(cls, buses: Iterable[str], T: int, p: float, pR: float = 0.0) -> Prices:
        buses = tuple(buses)
        return cls(buses, np.full((len(buses), T), float(p)), np.full(T, float(pR)))


@dataclass(frozen=True)
class GeneratorSchedule:
    z: np.ndarray
    v: np.ndarray
    w: np.ndarray
    g: np.ndarray
    gR: np.ndarray
    r: np.ndarray

    @property
    def T(self) -> int:
        return len(self.z)

    @classmethod
    def zeros(cls, T: int) -> GeneratorSchedule:
        return cls(*(np.zeros(T) for _ in range(6)))

    @classmethod
    def from_values(cls, gen_id: str, T: int, values: Mapping[str, float]) -> GeneratorSchedule:
        def series(kind: str) -> np.ndarray:
            return np.array([values.get(var_name(kind, gen_id, t), 0.0) for t in range(1, T + 1)])

        return cls(series("z"), series("v"), series("w"), series("g"), series("gR"), series("r"))

    def to_values(self, gen_id: str) -> dict[str, float]:
        out = {}
        for kind in ("z", "v", "w", "g", "gR", "r"):
            arr = getattr(self, kind)
            for t in range(1, self.T + 1):
                out[var_name(kind, gen_id, t)] = float(arr[t - 1])
        return out


# --------------------------------------------------------------------------
# generator block


def _window(limit: int, t: int, T: int) -> int:
    """Length of a minimum up/down window starting at ``t``, cut at the horizon."""
    return max(1, min(limit, T - t + 1))


def build_generator_block(gen: GeneratorSpec, scenario: Scenario, compact: bool = True) -> FirmBlock:
    """Unit-commitment rows of one generator.

    With ``compact=True`` only the commitment status ``z`` is binary; startup
    and shutdown indicators are continuous and the row ``z[t-1] + v[t] <= 1``
    is added.  With ``compact=False`` all three indicator families are binary.
    """
    T = scenario.T
    gid = gen.id
    gmax = scenario.effective_gmax(gen)
    su = gen.startup_rate if gen.startup_rate is not None else gen.ramp_up
    sd = gen.shutdown_rate if gen.shutdown_rate is not None else gen.ramp_down
    c_res = gen.reserve_cost if gen.reserve_cost is not None else scenario.config.reserve_cost_factor * gen.marginal_cost
    c_sd = gen.shutdown_cost if gen.shutdown_cost is not None else scenario.config.shutdown_cost_factor * gen.startup_cost
    z0, g0 = float(gen.initial_on), float(gen.initial_output)

    def n(kind: str, t: int) -> str:
        return var_name(kind, gid, t)

    kinds_x = ["g", "r"] + (["gR"] if gen.reserve_capable else [])
    kinds_z = ["z"]
    if compact:
        kinds_x += ["v", "w"]
    else:
        kinds_z += ["v", "w"]
    x_names = tuple(n(k, t) for t in range(1, T + 1) for k in kinds_x)
    z_names = tuple(n(k, t) for t in range(1, T + 1) for k in kinds_z)

    unit_cost = {"g": gen.marginal_cost, "r": gen.ramp_cost, "gR": c_res, "v": gen.startup_cost, "w": c_sd}
    c = {col: unit_cost[col.split(".")[0]] for col in x_names if unit_cost[col.split(".")[0]]}
    d = {col: unit_cost[col.split(".")[0]] for col in z_names if col.split(".")[0] in unit_cost and unit_cost[col.split(".")[0]]}

    rows: list[BlockRow] = []

    def le(name: str, coefs: dict[str, float], rhs: float, tag: str) -> None:
        rows.append(BlockRow(name, {k: v for k, v in coefs.items() if v != 0.0}, rhs, tag))

    def eq(name: str, coefs: dict[str, float], rhs: float, tag: str) -> None:
        coefs = {k: v for k, v in coefs.items() if v != 0.0}
        rows.append(BlockRow(f"{name}.le", coefs, rhs, tag, name, "le"))
        rows.append(BlockRow(f"{name}.ge", {k: -v for k, v in coefs.items()}, -rhs, tag, name, "ge"))

    forced_on = min(gen.forced_on_hours, T)
    forced_off = min(gen.forced_off_hours, T)
    for t in range(1, T + 1):
        g, r, z, v, w = n("g", t), n("r", t), n("z", t), n("v", t), n("w", t)
        first = t == 1
        prev_g = {} if first else {n("g", t - 1): 1.0}
        prev_z = {} if first else {n("z", t - 1): 1.0}
        init_g = g0 if first else 0.0
        init_z = z0 if first else 0.0

        le(f"rp1.{gid}.{t}", {g: 1.0, **{k: -1.0 for k in prev_g}, r: -1.0}, init_g, "ramp_up_movement")
        le(f"rp2.{gid}.{t}", {**prev_g, g: -1.0, r: -1.0}, -init_g, "ramp_down_movement")
        le(
            f"rp3.{gid}.{t}",
            {g: 1.0, **{k: -1.0 for k in prev_g}, z: -gen.ramp_up, v: -(su - gen.ramp_up)},
            init_g,
            "ramp_up_limit",
        )
        rp4 = {**prev_g, g: -1.0, w: -(sd - gen.ramp_down)}
        if not first:
            rp4[n("z", t - 1)] = -gen.ramp_down
        le(f"rp4.{gid}.{t}", rp4, -init_g + gen.ramp_down * init_z, "ramp_down_limit")
        le(f"min.{gid}.{t}", {z: gen.gmin, g: -1.0}, 0.0, "output_floor")
        cap = {g: 1.0, z: -gmax}
        if gen.reserve_capable:
            cap[n("gR", t)] = 1.0
        le(f"max.{gid}.{t}", cap, 0.0, "output_and_reserve_cap")

        nd = _window(gen.min_down, t, T)
        dt = {w: float(nd)}
        for k in range(t, t + nd):
            dt[n("z", k)] = dt.get(n("z", k), 0.0) + 1.0
        le(f"dt.{gid}.{t}", dt, float(nd), "min_down_time")
        nu = _window(gen.min_up, t, T)
        ut = {v: float(nu)}
        for k in range(t, t + nu):
            ut[n("z", k)] = ut.get(n("z", k), 0.0) - 1.0
        le(f"ut.{gid}.{t}", ut, 0.0, "min_up_time")

        eq(f"op.{gid}.{t}", {**prev_z, z: -1.0, v: 1.0, w: -1.0}, -init_z, "status_transition")
        if t <= forced_on:
            eq(f"on.{gid}.{t}", {z: 1.0}, 1.0, "forced_on")
        if t <= forced_off:
            eq(f"off.{gid}.{t}", {z: 1.0}, 0.0, "forced_off")
        if compact:
            le(f"sig.{gid}.{t}", {**prev_z, v: 1.0}, 1.0 - init_z, "no_startup_while_on")

    energy = {n("g", t): ((gen.bus, t, 1.0),) for t in range(1, T + 1)}
    reserve = {n("gR", t): ((t, 1.0),) for t in range(1, T + 1)} if gen.reserve_capable else {}
    return FirmBlock(gid, GENERATOR, x_names, z_names, c, d, tuple(rows), energy, reserve)


def generation_cost(gen: GeneratorSpec, schedule: GeneratorSchedule, scenario: Scenario | None = None) -> float:
    """Energy, reserve, startup, shutdown and ramping cost of a schedule."""
    res_factor = scenario.config.reserve_cost_factor if scenario else 0.4
    sd_factor = scenario.config.shutdown_cost_factor if scenario else 0.2
    c_res = gen.reserve_cost if gen.reserve_cost is not None else res_factor * gen.marginal_cost
    c_sd = gen.shutdown_cost if gen.shutdown_cost is not None else sd_factor * gen.startup_cost
    gR = schedule.gR if gen.reserve_capable else np.zeros_like(schedule.gR)
    return float(
        gen.marginal_cost * schedule.g.sum()
        + c_res * gR.sum()
        + gen.startup_cost * schedule.v.sum()
        + c_sd * schedule.w.sum()
        + gen.ramp_cost * schedule.r.sum()
    )


def generation_revenue(gen: GeneratorSpec, schedule: GeneratorSchedule, prices: Prices) -> float:
    total = 0.0
    for t in range(1, schedule.T + 1):
        total += prices.energy(gen.bus, t) * schedule.g[t - 1]
        if gen.reserve_capable:
            total += prices.reserve(t) * schedule.gR[t - 1]
    return float(total)


def instructed_profit(
    gen: GeneratorSpec, schedule: GeneratorSchedule, prices: Prices, scenario: Scenario | None = None
) -> float:
    return generation_revenue(gen, schedule, prices) - generation_cost(gen, schedule, scenario)


def solve_block_best_response(block: FirmBlock, prices: Prices) -> tuple[float, dict[str, float], SolveResult]:
    """Maximise one firm's profit with prices held fixed."""
    builder = ModelBuilder(f"best_response.{block.firm}")
    block.add_to(builder, prices=prices)
    res = solve_milp(builder.build()).require_optimal(f"best response of {block.firm}")
    values = res.values()
    return block.profit(values, prices), values, res


def best_response(
    gen: GeneratorSpec, scenario: Scenario, prices: Prices, compact: bool = True
) -> tuple[float, GeneratorSchedule]:
    """Profit-maximising price-taking schedule of one generator."""
    block = build_generator_block(gen, scenario, compact)
    profit, values, _ = solve_block_best_response(block, prices)
    return profit, GeneratorSchedule.from_values(gen.id, scenario.T, values)


# --------------------------------------------------------------------------
# network block


def build_network_block(network: Network, scenario: Scenario) -> FirmBlock:
    """DC network arbitrage rows; free flows and angles are split into signed parts."""
    T = scenario.T
    theta_bar = network.theta_limit
    x_names: list[str] = []
    energy: dict[str, tuple[tuple[str, int, float], ...]] = {}
    free_pairs: dict[str, tuple[str, str]] = {}
    rows: list[BlockRow] = []

    def le(name: str, coefs: dict[str, float], rhs: float, tag: str) -> None:
        rows.append(BlockRow(name, coefs, rhs, tag))

    def eq(name: str, coefs: dict[str, float], rhs: float, tag: str) -> None:
        rows.append(BlockRow(f"{name}.le", dict(coefs), rhs, tag, name, "le"))
        rows.append(BlockRow(f"{name}.ge", {k: -v for k, v in coefs.items()}, -rhs, tag, name, "ge"))

    for t in range(1, T + 1):
        for line in network.lines:
            pos, neg = var_name("fpos", line.id, t), var_name("fneg", line.id, t)
            x_names += [pos, neg]
            free_pairs[var_name("f", line.id, t)] = (pos, neg)
            links = []
            for bus in (line.from_bus, line.to_bus):
                inc = network.incidence(line, bus)
                # flow leaving a bus is a withdrawal from its balance
                links.append((bus, t, -float(inc)))
            energy[pos] = tuple(links)
            energy[neg] = tuple((bus, tt, -coef) for bus, tt, coef in links)
        for bus in network.buses:
            pos, neg = var_name("thpos", bus, t), var_name("thneg", bus, t)
            x_names += [pos, neg]
            free_pairs[var_name("theta", bus, t)] = (pos, neg)

        for line in network.lines:
            pos, neg = var_name("fpos", line.id, t), var_name("fneg", line.id, t)
            fmax = scenario.effective_fmax(line)
            le(f"fmax.{line.id}.{t}", {pos: 1.0, neg: -1.0}, fmax, "flow_upper")
            le(f"fmin.{line.id}.{t}", {pos: -1.0, neg: 1.0}, fmax, "flow_lower")
            phys = {pos: -1.0, neg: 1.0}
            for bus in (line.from_bus, line.to_bus):
                inc = network.incidence(line, bus)
                phys[var_name("thpos", bus, t)] = line.susceptance * inc
                phys[var_name("thneg", bus, t)] = -line.susceptance * inc
            eq(f"phys.{line.id}.{t}", phys, 0.0, "dc_flow")
        for bus in network.buses:
            pos, neg = var_name("thpos", bus, t), var_name("thneg", bus, t)
            le(f"thmax.{bus}.{t}", {pos: 1.0, neg: -1.0}, theta_bar, "angle_upper")
            le(f"thmin.{bus}.{t}", {pos: -1.0, neg: 1.0}, theta_bar, "angle_lower")
        s = network.slack_bus
        eq(f"slack.{t}", {var_name("thpos", s, t): 1.0, var_name("thneg", s, t): -1.0}, 0.0, "reference_angle")
        # Each line enters with +1 and -1, so the purchase/sale balance has
        # all-zero coefficients; it is kept so its dual exists.
        grid: dict[str, float] = {}
        for line in network.lines:
            total = sum(network.incidence(line, bus) for bus in network.buses)
            if total:
                grid[var_name("fpos", line.id, t)] = float(total)
                grid[var_name("fneg", line.id, t)] = -float(total)
        eq(f"grid.{t}", grid, 0.0, "operator_balance")

    return FirmBlock("network", NETWORK, tuple(x_names), (), {}, {}, tuple(rows), energy, {}, free_pairs)


def flows_from_values(network: Network, T: int, values: Mapping[str, float]) -> np.ndarray:
    out = np.zeros((len(network.lines), T))
    for li, line in enumerate(network.lines):
        for t in range(1, T + 1):
            out[li, t - 1] = values[var_name("fpos", line.id, t)] - values[var_name("fneg", line.id, t)]
    return out


def angles_from_values(network: Network, T: int, values: Mapping[str, float]) -> np.ndarray:
    out = np.zeros((len(network.buses), T))
    for ni, bus in enumerate(network.buses):
        for t in range(1, T + 1):
            out[ni, t - 1] = values[var_name("thpos", bus, t)] - values[var_name("thneg", bus, t)]
    return out


def network_values(network: Network, flows: np.ndarray, angles: np.ndarray) -> dict[str, float]:
    """Split signed flows and angles into the block's non-negative columns."""
    out = {}
    T = flows.shape[1]
    for t in range(1, T + 1):
        for li, line in enumerate(network.lines):
            f = float(flows[li, t - 1])
            out[var_name("fpos", line.id, t)] = max(f, 0.0)
            out[var_name("fneg", line.id, t)] = max(-f, 0.0)
        for ni, bus in enumerate(network.buses):
            th = float(angles[ni, t - 1])
            out[var_name("thpos", bus, t)] = max(th, 0.0)
            out[var_name("thneg", bus, t)] = max(-th, 0.0)
    return out


def transmission_profit(network: Network, flows: np.ndarray, prices: Prices) -> float:
    """Arbitrage income: flow bought at the origin price and sold at the destination."""
    total = 0.0
    for li, line in enumerate(network.lines):
        for t in range(1, flows.shape[1] + 1):
            f = flows[li, t - 1]
            for bus in (line.from_bus, line.to_bus):
                total -= prices.energy(bus, t) * network.incidence(line, bus) * f
    return float(total)


def network_best_response(scenario: Scenario, prices: Prices) -> tuple[float, np.ndarray]:
    block = build_network_block(scenario.network, scenario)
    profit, values, _ = solve_block_best_response(block, prices)
    return profit, flows_from_values(scenario.network, scenario.T, values)


__all__ = [
    "BlockRow",
    "FirmBlock",
    "GeneratorSchedule",
    "Prices",
    "best_response",
    "build_generator_block",
    "build_network_block",
    "flows_from_values",
    "angles_from_values",
    "generation_cost",
    "generation_revenue",
    "instructed_profit",
    "network_best_response",
    "network_values",
    "solve_block_best_response",
    "transmission_profit",
    "var_name",
    "price_name",
    "reserve_price_name",
]
