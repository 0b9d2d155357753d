"""Minimum total opportunity cost clearing.

Each firm's block is dualised mechanically: one non-negative multiplier per
block row, one per binary upper bound, one dual-feasibility row per column.
The model minimises the sum of the firms' duality gaps subject to primal
feasibility, dual feasibility, market clearing and a big-M encoding of the
consumers' optimality conditions.  Prices are decision variables confined to
``[-P_cap, P_cap]``.

The bilinear revenue terms of the gap are replaced by a convex expression in
the demand variables, which is exact whenever clearing and the consumers'
conditions hold; the dropped constant ``sum(a * floor)`` is added back when
totals are reported.

Generated dual rows and objective constants are cross-checked against an
independent hand-written listing of the generator and network conditions;
any mismatch aborts assembly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .demand import BigMError, fam_constraints, required_big_m
from .participants import (
    GENERATOR,
    NETWORK,
    FirmBlock,
    Prices,
    price_name,
    reserve_price_name,
    var_name,
)
from .scenario import GeneratorSpec, Scenario
from .solver import DEFAULT_PWL_SEGMENTS, ModelBuilder, ModelInstance, solve_miqp
from .sw import (
    MTOC,
    Assembly,
    MarketSolution,
    StepError,
    _add_clearing,
    demand_upper_bound,
    demand_var,
    extract_solution,
    firm_blocks,
    model_stats,
)

DEFAULT_PRICE_CAP = 1000.0
GAP_TOL = 1e-6
CONST = "1"


class AssemblyError(RuntimeError):
    """Generated model data disagree with the independent hand-written listing."""


class NegativeGapError(RuntimeError):
    pass


def alpha_name(row: str) -> str:
    return f"alpha.{row}"


def alphaz_name(col: str) -> str:
    return f"alphaz.{col}"


def fam_var(bus: str, t: int) -> str:
    return var_name("u", bus, t)


# --------------------------------------------------------------------------
# dualisation


@dataclass(frozen=True)
class DualRow:
    """``const + sum(coefs * vars) >= 0`` for one primal column."""

    column: str
    const: float
    coefs: Mapping[str, float]


@dataclass(frozen=True)
class DualBlock:
    firm: str
    alpha: Mapping[str, str]  # block row -> multiplier variable
    alphaz: Mapping[str, str]  # binary column -> bound multiplier variable
    rows: tuple[DualRow, ...]
    # multiplier variable -> coefficient in b'alpha + 1'alpha_z
    objective: Mapping[str, float]

    def row(self, column: str) -> DualRow:
        for r in self.rows:
            if r.column == column:
                return r
        raise KeyError(column)


def dualize_block(block: FirmBlock) -> DualBlock:
    """Dual-feasibility rows ``c - A'p - B'pR + E'alpha >= 0`` and ``d + D'alpha + alpha_z >= 0``."""
    alpha = {row.name: alpha_name(row.name) for row in block.rows}
    alphaz = {col: alphaz_name(col) for col in block.z_names}
    rows = []
    for col in block.columns:
        coefs: dict[str, float] = {}
        for row_name, coef in block.column_rows[col]:
            coefs[alpha[row_name]] = coefs.get(alpha[row_name], 0.0) + coef
        for bus, t, coef in block.energy.get(col, ()):
            coefs[price_name(bus, t)] = coefs.get(price_name(bus, t), 0.0) - coef
        for t, coef in block.reserve.get(col, ()):
            coefs[reserve_price_name(t)] = coefs.get(reserve_price_name(t), 0.0) - coef
        if col in alphaz:
            coefs[alphaz[col]] = 1.0
        const = block.c.get(col, 0.0) + block.d.get(col, 0.0)
        rows.append(DualRow(col, const, coefs))
    objective = {alpha[row.name]: row.rhs for row in block.rows if row.rhs != 0.0}
    objective.update({name: 1.0 for name in alphaz.values()})
    return DualBlock(block.firm, alpha, alphaz, tuple(rows), objective)


# --------------------------------------------------------------------------
# normalisation to the free-multiplier form


def _fold(block: FirmBlock, coefs: Mapping[str, float]) -> dict[str, float]:
    """Express multiplier coefficients on free equality multipliers.

    An equality's free multiplier is ``ge-half minus le-half``, so a
    coefficient ``k`` on the le-half (and ``-k`` on the ge-half) becomes
    ``-k`` on the free multiplier.
    """
    by_alpha = {alpha_name(r.name): r for r in block.rows}
    out: dict[str, float] = {}
    pending: dict[str, dict[str, float]] = {}
    for name, coef in coefs.items():
        row = by_alpha.get(name)
        if row is None or row.pair is None:
            key = row.name if row is not None else name
            out[key] = out.get(key, 0.0) + coef
        else:
            pending.setdefault(row.pair, {})[row.side] = coef
    for base, sides in pending.items():
        le, ge = sides.get("le", 0.0), sides.get("ge", 0.0)
        if le != -ge:
            raise AssemblyError(f"equality {base}: halves carry {le} and {ge}")
        out[base] = out.get(base, 0.0) - le
    return {k: v for k, v in out.items() if v != 0.0}


def normalized_dual_rows(block: FirmBlock, dual: DualBlock) -> dict[str, dict[str, float]]:
    """Generated dual rows in ``... <= 0`` form over free equality multipliers.

    Free physical quantities (split into two columns) yield a single equality
    row, reported from the positive part.
    """
    negative_parts = {neg for _, neg in block.free_pairs.values()}
    out = {}
    for row in dual.rows:
        if row.column in negative_parts:
            continue
        folded = _fold(block, {k: -v for k, v in row.coefs.items()})
        if row.const:
            folded[CONST] = -row.const
        out[row.column] = folded
    return out


def normalized_objective(block: FirmBlock, dual: DualBlock) -> dict[str, float]:
    return _fold(block, dual.objective)


# --------------------------------------------------------------------------
# hand-written reference


def _add(d: dict[str, float], key: str, val: float) -> None:
    if val != 0.0:
        d[key] = d.get(key, 0.0) + val


def _window(limit: int, t: int, T: int) -> int:
    return max(1, min(limit, T - t + 1))


def reference_generator_rows(gen: GeneratorSpec, scenario: Scenario) -> dict[str, dict[str, float]]:
    """Stationarity conditions of the relaxed generator problem, written out by hand.

    Every row is in ``... <= 0`` form; keys are multiplier names (equality
    multipliers under their base name), prices, bound multipliers and ``"1"``
    for the constant.
    """
    T = scenario.T
    i = gen.id
    su, sd = gen.startup_rate, gen.shutdown_rate
    rows: dict[str, dict[str, float]] = {}
    for t in range(1, T + 1):
        nxt = t < T
        g: dict[str, float] = {}
        _add(g, CONST, -gen.marginal_cost)
        _add(g, price_name(gen.bus, t), 1.0)
        _add(g, f"rp1.{i}.{t}", -1.0)
        _add(g, f"rp2.{i}.{t}", 1.0)
        _add(g, f"rp3.{i}.{t}", -1.0)
        _add(g, f"rp4.{i}.{t}", 1.0)
        if nxt:
            _add(g, f"rp1.{i}.{t + 1}", 1.0)
            _add(g, f"rp2.{i}.{t + 1}", -1.0)
            _add(g, f"rp3.{i}.{t + 1}", 1.0)
            _add(g, f"rp4.{i}.{t + 1}", -1.0)
        _add(g, f"min.{i}.{t}", 1.0)
        _add(g, f"max.{i}.{t}", -1.0)
        rows[var_name("g", i, t)] = g

        v: dict[str, float] = {}
        _add(v, CONST, -gen.startup_cost)
        _add(v, f"rp3.{i}.{t}", su - gen.ramp_up)
        _add(v, f"ut.{i}.{t}", -float(_window(gen.min_up, t, T)))
        _add(v, f"op.{i}.{t}", 1.0)
        _add(v, f"sig.{i}.{t}", -1.0)
        rows[var_name("v", i, t)] = v

        w: dict[str, float] = {}
        _add(w, CONST, -gen.shutdown_cost)
        _add(w, f"rp4.{i}.{t}", sd - gen.ramp_down)
        _add(w, f"dt.{i}.{t}", -float(_window(gen.min_down, t, T)))
        _add(w, f"op.{i}.{t}", -1.0)
        rows[var_name("w", i, t)] = w

        z: dict[str, float] = {}
        _add(z, f"rp3.{i}.{t}", gen.ramp_up)
        if nxt:
            _add(z, f"rp4.{i}.{t + 1}", gen.ramp_down)
        _add(z, f"min.{i}.{t}", -gen.gmin)
        _add(z, f"max.{i}.{t}", scenario.effective_gmax(gen))
        for k in range(max(t - gen.min_down + 1, 1), t + 1):
            _add(z, f"dt.{i}.{k}", -1.0)
        for k in range(max(t - gen.min_up + 1, 1), t + 1):
            _add(z, f"ut.{i}.{k}", 1.0)
        _add(z, f"op.{i}.{t}", -1.0)
        if nxt:
            _add(z, f"op.{i}.{t + 1}", 1.0)
            _add(z, f"sig.{i}.{t + 1}", -1.0)
        _add(z, alphaz_name(var_name("z", i, t)), -1.0)
        if t <= gen.forced_on_hours:
            _add(z, f"on.{i}.{t}", 1.0)
        if t <= gen.forced_off_hours:
            _add(z, f"off.{i}.{t}", 1.0)
        rows[var_name("z", i, t)] = z

        r: dict[str, float] = {}
        _add(r, f"rp1.{i}.{t}", 1.0)
        _add(r, f"rp2.{i}.{t}", 1.0)
        _add(r, CONST, -gen.ramp_cost)
        rows[var_name("r", i, t)] = r

        if gen.reserve_capable:
            gr: dict[str, float] = {}
            _add(gr, reserve_price_name(t), 1.0)
            _add(gr, f"max.{i}.{t}", -1.0)
            _add(gr, CONST, -gen.reserve_cost)
            rows[var_name("gR", i, t)] = gr
    return rows


def reference_network_rows(scenario: Scenario) -> dict[str, dict[str, float]]:
    """Stationarity equalities for flows and angles, written out by hand."""
    net = scenario.network
    rows: dict[str, dict[str, float]] = {}
    for t in scenario.periods:
        for line in net.lines:
            f: dict[str, float] = {}
            for bus in net.buses:
                inc = net.incidence(line, bus)
                _add(f, price_name(bus, t), float(inc))
                _add(f, f"grid.{t}", -float(inc))
            _add(f, f"fmax.{line.id}.{t}", 1.0)
            _add(f, f"fmin.{line.id}.{t}", -1.0)
            _add(f, f"phys.{line.id}.{t}", 1.0)
            rows[var_name("fpos", line.id, t)] = f
        for bus in net.buses:
            th: dict[str, float] = {}
            for line in net.lines:
                _add(th, f"phys.{line.id}.{t}", line.susceptance * net.incidence(line, bus))
            _add(th, f"thmax.{bus}.{t}", -1.0)
            _add(th, f"thmin.{bus}.{t}", 1.0)
            if bus == net.slack_bus:
                _add(th, f"slack.{t}", 1.0)
            rows[var_name("thpos", bus, t)] = th
    return rows


def reference_objective(block: FirmBlock, scenario: Scenario) -> dict[str, float]:
    """Hand-written constant coefficients of the gap objective (multiplier terms)."""
    out: dict[str, float] = {}
    if block.kind == NETWORK:
        for t in scenario.periods:
            for line in scenario.network.lines:
                fmax = scenario.effective_fmax(line)
                _add(out, f"fmax.{line.id}.{t}", fmax)
                _add(out, f"fmin.{line.id}.{t}", fmax)
            for bus in scenario.network.buses:
                _add(out, f"thmax.{bus}.{t}", scenario.network.theta_limit)
                _add(out, f"thmin.{bus}.{t}", scenario.network.theta_limit)
        return out
    gen = scenario.generator(block.firm)
    i, g0, z0 = gen.id, gen.initial_output, float(gen.initial_on)
    _add(out, f"rp1.{i}.1", g0)
    _add(out, f"rp2.{i}.1", -g0)
    _add(out, f"rp3.{i}.1", g0)
    _add(out, f"rp4.{i}.1", -g0 + gen.ramp_down * z0)
    _add(out, f"op.{i}.1", z0)
    for t in scenario.periods:
        _add(out, f"dt.{i}.{t}", float(_window(gen.min_down, t, scenario.T)))
        if var_name("v", i, t) in block.x_names:
            _add(out, f"sig.{i}.{t}", 1.0 - z0 if t == 1 else 1.0)
        if t <= gen.forced_on_hours:
            _add(out, f"on.{i}.{t}", -1.0)
        _add(out, alphaz_name(var_name("z", i, t)), 1.0)
    return out


def reference_costs(block: FirmBlock, scenario: Scenario) -> dict[str, float]:
    if block.kind == NETWORK:
        return {}
    gen = scenario.generator(block.firm)
    out: dict[str, float] = {}
    for t in scenario.periods:
        _add(out, var_name("g", gen.id, t), gen.marginal_cost)
        if gen.reserve_capable:
            _add(out, var_name("gR", gen.id, t), gen.reserve_cost)
        _add(out, var_name("v", gen.id, t), gen.startup_cost)
        _add(out, var_name("w", gen.id, t), gen.shutdown_cost)
        _add(out, var_name("r", gen.id, t), gen.ramp_cost)
    return out


def _same(a: Mapping[str, float], b: Mapping[str, float], tol: float = 1e-12) -> bool:
    keys = set(a) | set(b)
    return all(math.isclose(a.get(k, 0.0), b.get(k, 0.0), rel_tol=tol, abs_tol=tol) for k in keys)


def crosscheck(block: FirmBlock, dual: DualBlock, scenario: Scenario) -> list[str]:
    """Differences between generated and hand-written rows; empty when they agree."""
    problems = []
    generated = normalized_dual_rows(block, dual)
    if block.kind == GENERATOR:
        reference = reference_generator_rows(scenario.generator(block.firm), scenario)
        for col in generated:
            ref = reference.get(col)
            if ref is None or not _same(generated[col], ref):
                problems.append(f"dual row of {col}: generated {generated[col]} vs reference {ref}")
        missing = set(reference) - set(generated)
        problems += [f"dual row of {col} missing" for col in sorted(missing) if col in block.columns]
    else:
        reference = reference_network_rows(scenario)
        for col, ref in reference.items():
            got = generated.get(col)
            # equalities: compare up to an overall sign
            if got is None or not (_same(got, ref) or _same(got, {k: -v for k, v in ref.items()})):
                problems.append(f"dual row of {col}: generated {got} vs reference {ref}")
        for pos, neg in block.free_pairs.values():
            a, b = dual.row(pos), dual.row(neg)
            if not _same(a.coefs, {k: -v for k, v in b.coefs.items()}) or a.const != -b.const:
                problems.append(f"signed parts {pos}/{neg} are not mirror images")
    obj = normalized_objective(block, dual)
    ref_obj = reference_objective(block, scenario)
    if not _same(obj, ref_obj):
        problems.append(f"objective constants of {block.firm}: generated {obj} vs reference {ref_obj}")
    costs = {k: v for k, v in {**block.c, **block.d}.items() if v != 0.0}
    if block.kind == GENERATOR and not _same(costs, reference_costs(block, scenario)):
        problems.append(f"cost row of {block.firm} differs from reference")
    return problems


# --------------------------------------------------------------------------
# big-M policy


@dataclass(frozen=True)
class BigMEntry:
    m_price: float
    m_quantity: float
    q_upper: float


@dataclass(frozen=True)
class BigMPolicy:
    price_cap: float
    entries: Mapping[tuple[str, int], BigMEntry]

    def to_dict(self) -> dict[str, Any]:
        return {
            "price_cap": self.price_cap,
            "entries": [
                {"bus": bus, "t": t, "m_price": e.m_price, "m_quantity": e.m_quantity, "q_upper": e.q_upper}
                for (bus, t), e in sorted(self.entries.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
        }


def choose_big_m(scenario: Scenario, price_cap: float = DEFAULT_PRICE_CAP) -> BigMPolicy:
    """Smallest big-M constants certified by the price box ``[-price_cap, price_cap]``."""
    max_a = max((p.a for d in scenario.demands for p in d.periods), default=0.0)
    max_cost = max((g.marginal_cost + (g.reserve_cost or 0.0) for g in scenario.generators), default=0.0)
    if not price_cap > max_a:
        raise BigMError(f"price cap {price_cap:g} must exceed the largest intercept {max_a:g}")
    if not price_cap > max_cost:
        raise BigMError(f"price cap {price_cap:g} must exceed the largest energy-plus-reserve cost {max_cost:g}")
    phi = scenario.config.phi
    entries = {}
    for d in scenario.demands:
        for t in scenario.periods:
            m_price, m_qty, q_up = required_big_m(d.periods[t - 1], scenario.demand_floor(d, t), phi, price_cap)
            entries[(d.bus, t)] = BigMEntry(m_price, m_qty, q_up)
    return BigMPolicy(price_cap, entries)


# --------------------------------------------------------------------------
# assembly


def transform_objective(scenario: Scenario) -> tuple[dict[str, float], dict[str, float], float]:
    """Convex replacement of the consumers' payment terms.

    Returns linear coefficients, quadratic coefficients and the dropped
    constant ``sum(a * floor)``: per bus/period the terms are
    ``-a q + b q^2 - (p + phi pR) floor - floor b q``.
    """
    phi = scenario.config.phi
    lin: dict[str, float] = {}
    quad: dict[str, float] = {}
    dropped = 0.0
    for d in scenario.demands:
        for t in scenario.periods:
            curve = d.periods[t - 1]
            floor = scenario.demand_floor(d, t)
            q = demand_var(d.bus, t)
            _add(lin, q, -curve.a - floor * curve.b)
            _add(quad, q, curve.b)
            _add(lin, price_name(d.bus, t), -floor)
            _add(lin, reserve_price_name(t), -phi * floor)
            dropped += curve.a * floor
    return lin, quad, dropped


@dataclass
class MtocAssembly(Assembly):
    duals: tuple[DualBlock, ...] = ()
    policy: BigMPolicy | None = None
    dropped_constant: float = 0.0


def build_mtoc(scenario: Scenario, policy: BigMPolicy | None = None, compact: bool = True) -> MtocAssembly:
    policy = policy or choose_big_m(scenario)
    builder = ModelBuilder(f"mtoc.{scenario.name}")
    blocks = firm_blocks(scenario, compact)
    cap = policy.price_cap
    for t in scenario.periods:
        for bus in scenario.network.buses:
            builder.add_var(price_name(bus, t), -cap, cap)
    for t in scenario.periods:
        builder.add_var(reserve_price_name(t), -cap, cap)

    duals = []
    for block in blocks:
        block.add_to(builder)
        dual = dualize_block(block)
        problems = crosscheck(block, dual, scenario) if compact else []
        if problems:
            raise AssemblyError("; ".join(problems[:5]))
        for var in dual.alpha.values():
            builder.add_var(var, 0.0)
        for var in dual.alphaz.values():
            builder.add_var(var, 0.0)
        for var, coef in dual.objective.items():
            builder.add_cost(var, coef)
        for row in dual.rows:
            builder.add_row(f"dual.{row.column}", row.coefs, ">", -row.const, "dual_feasibility")
        duals.append(dual)

    q_total = demand_upper_bound(scenario)
    phi = scenario.config.phi
    for d in scenario.demands:
        for t in scenario.periods:
            floor = scenario.demand_floor(d, t)
            entry = policy.entries[(d.bus, t)]
            q = demand_var(d.bus, t)
            builder.add_var(q, 0.0, max(floor, min(q_total, entry.q_upper)) + 1.0)
            builder.add_var(fam_var(d.bus, t), binary=True)
    lin, quad, dropped = transform_objective(scenario)
    for name, coef in lin.items():
        builder.add_cost(name, coef)
    for name, coef in quad.items():
        builder.add_quad(name, coef)
    for d in scenario.demands:
        for t in scenario.periods:
            entry = policy.entries[(d.bus, t)]
            rows = fam_constraints(
                d.periods[t - 1],
                scenario.demand_floor(d, t),
                entry.m_price,
                entry.m_quantity,
                phi=phi,
                q=demand_var(d.bus, t),
                p=price_name(d.bus, t),
                p_res=reserve_price_name(t),
                u=fam_var(d.bus, t),
                price_cap=cap,
            )
            for row in rows:
                builder.add_row(row.name, row.coefs, row.sense, row.rhs, row.tag)
    _add_clearing(builder, scenario, blocks)
    return MtocAssembly(
        scenario, builder.build(), blocks, duals=tuple(duals), policy=policy, dropped_constant=dropped
    )


def assemble_mtoc(scenario: Scenario, policy: BigMPolicy | None = None, compact: bool = True) -> ModelInstance:
    return build_mtoc(scenario, policy, compact).model


# --------------------------------------------------------------------------
# gaps and objective forms


def duality_gap(block: FirmBlock, dual: DualBlock, values: Mapping[str, float], prices: Prices) -> float:
    """``b'alpha + 1'alpha_z + (c - A'p - B'pR)'x + d'z`` for one firm."""
    gap = sum(coef * values[var] for var, coef in dual.objective.items())
    gap += sum(block.linked_cost(col, prices) * values[col] for col in block.columns)
    return float(gap)


def firm_gaps(solution: MarketSolution, check: bool = True) -> dict[str, float]:
    asm = solution.assembly
    if not isinstance(asm, MtocAssembly):
        raise TypeError("duality gaps need an MTOC solution or an MTOC point")
    gaps = {}
    for block, dual in zip(asm.blocks, asm.duals):
        gap = duality_gap(block, dual, solution.values, solution.prices)
        if check and gap < -GAP_TOL:
            raise NegativeGapError(f"{block.firm}: duality gap {gap:g} is negative")
        gaps[block.firm] = gap
    return gaps


def bilinear_objective(solution: MarketSolution) -> float:
    return sum(firm_gaps(solution, check=False).values())


def transformed_objective(assembly: MtocAssembly, values: Mapping[str, float]) -> float:
    x = assembly.model.vector(values)
    return assembly.model.objective(x)


# --------------------------------------------------------------------------
# solving


def _prices_from_values(scenario: Scenario, values: Mapping[str, float]) -> Prices:
    buses = scenario.network.buses
    p = np.array([[values[price_name(b, t)] for t in scenario.periods] for b in buses])
    pR = np.array([values[reserve_price_name(t)] for t in scenario.periods])
    return Prices(tuple(buses), p, pR)


def _attach(sol: MarketSolution, asm: MtocAssembly) -> None:
    sc = asm.scenario
    values = sol.values
    sol.u = {d.bus: np.array([round(values[fam_var(d.bus, t)]) for t in sc.periods]) for d in sc.demands}
    dual_vars = [v for dual in asm.duals for v in (*dual.alpha.values(), *dual.alphaz.values())]
    sol.duals = {name: values[name] for name in dual_vars}
    gaps = firm_gaps(sol, check=False)
    sol.diagnostics.update(
        firm_gaps=gaps,
        total_gap=sum(gaps.values()),
        dropped_constant=asm.dropped_constant,
        big_m=asm.policy.to_dict() if asm.policy else None,
    )


def solve_mtoc(
    scenario: Scenario,
    price_cap: float = DEFAULT_PRICE_CAP,
    method: str = "auto",
    segments: int = DEFAULT_PWL_SEGMENTS,
    compact: bool = True,
) -> MarketSolution:
    """Minimise the total duality gap; prices are read from the solution."""
    asm = build_mtoc(scenario, choose_big_m(scenario, price_cap), compact)
    res = solve_miqp(asm.model, method=method, segments=segments)
    if not res.ok:
        raise StepError("gap minimisation", res)
    values = res.values()
    prices = _prices_from_values(scenario, values)
    sol = extract_solution(asm, MTOC, res, prices, res.objective)
    _attach(sol, asm)
    sol.diagnostics.update(
        solve_time=res.wall_time,
        iterations=res.iterations,
        stats=model_stats(asm.model).as_dict(),
    )
    return sol


def point_from_sw(sw: MarketSolution, assembly: MtocAssembly | None = None) -> MarketSolution:
    """Feasible MTOC point built from a welfare solution and its pricing duals.

    Multipliers of the firm rows come from the fixed-commitment re-solve;
    bound multipliers are ``max(0, -(d + D'alpha))``; indicators are set
    where the floor binds with a positive multiplier.
    """
    sc = sw.scenario
    asm = assembly or build_mtoc(sc)
    values: dict[str, float] = {}
    for name in asm.model.var_names:
        if name in sw.values:
            values[name] = sw.values[name]
    for t in sc.periods:
        for bus in sc.network.buses:
            values[price_name(bus, t)] = sw.prices.energy(bus, t)
        values[reserve_price_name(t)] = sw.prices.reserve(t)
    for block, dual in zip(asm.blocks, asm.duals):
        for row in block.rows:
            if row.pair is None:
                y = sw.duals[row.name]
                values[dual.alpha[row.name]] = max(0.0, -y)
            else:
                y = sw.duals[row.pair]
                values[dual.alpha[row.name]] = max(0.0, -y) if row.side == "le" else max(0.0, y)
        for col in block.z_names:
            row = dual.row(col)
            slack = row.const + sum(
                coef * values[var] for var, coef in row.coefs.items() if var != dual.alphaz[col]
            )
            values[dual.alphaz[col]] = max(0.0, -slack)
    phi = sc.config.phi
    for d in sc.demands:
        for t in sc.periods:
            curve = d.periods[t - 1]
            floor = sc.demand_floor(d, t)
            q = values[demand_var(d.bus, t)]
            beta = sw.prices.energy(d.bus, t) + phi * sw.prices.reserve(t) - curve.a + curve.b * q
            values[fam_var(d.bus, t)] = 1.0 if (abs(q - floor) <= 1e-7 and beta > 1e-9) else 0.0
    x = asm.model.vector(values)
    objective = asm.model.objective(x)
    point = MarketSolution(
        scenario=sc,
        kind="SW-point",
        objective=objective,
        values=values,
        schedules=sw.schedules,
        q=sw.q,
        flows=sw.flows,
        angles=sw.angles,
        prices=sw.prices,
        assembly=asm,
    )
    _attach(point, asm)
    point.diagnostics["residual"] = asm.model.residual(x)
    return point
