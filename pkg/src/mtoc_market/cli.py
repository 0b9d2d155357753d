"""Command-line front end: ``solve``, ``compare`` and ``sweep``.

Every run writes its tables under ``<out>/<run-id>/<table>.<ext>``.  Files
contain no timestamps, so identical inputs give identical bytes.
"""
from __future__ import annotations

import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import click

from . import analytics as an
from .demand import BigMError
from .mtoc import DEFAULT_PRICE_CAP, AssemblyError, build_mtoc, choose_big_m, solve_mtoc
from .scenario import Scenario, ScenarioError, load_scenario, scale_scenario
from .solver import INFEASIBLE, ApproximationError, SolverError, write_lp
from .sw import MTOC, SW, MarketSolution, StepError, build_sw, model_stats, solve_sw

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5

SWEEP_PARAMETERS = ("h", "fmax_pct", "gmax_pct")
DEFAULT_GRIDS = {
    "h": (0.0, 0.25, 0.5, 0.75, 1.0, 1.2),
    "fmax_pct": (60.0, 70.0, 80.0, 90.0, 100.0),
    "gmax_pct": (70.0, 80.0, 90.0, 100.0, 110.0, 120.0, 130.0),
}
# report attributes recorded for every sweep value and model
SWEEP_METRICS = (
    "social_welfare",
    "consumers_surplus",
    "payment_by_consumers",
    "total_generation_cost",
    "total_generation_revenue",
    "total_generation_profit",
    "transmission_profit",
    "total_opportunity_cost",
    "make_whole",
)


class RunFailure(Exception):
    """A run that ended without an optimal solution; ``code`` is the exit status."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class SolverFlags:
    pwl_segments: int | None = None
    price_cap: float = DEFAULT_PRICE_CAP

    @property
    def method(self) -> str:
        return "auto" if self.pwl_segments is None else "pwl"

    @property
    def segments(self) -> int:
        return 32 if self.pwl_segments is None else self.pwl_segments


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    models: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.parameter == "h" and min(self.values) < 0:
            raise ValueError("h values must be non-negative")
        if self.parameter != "h" and min(self.values) <= 0:
            raise ValueError("scaling percentages must be positive")
        if not self.models or set(self.models) - {SW, MTOC}:
            raise ValueError(f"models must be drawn from {SW} and {MTOC}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, RunFailure):
        return exc.code
    if isinstance(exc, (ScenarioError, OSError, UnicodeDecodeError)):
        return EXIT_IO
    if isinstance(exc, StepError):
        return EXIT_INFEASIBLE if exc.result.status == INFEASIBLE else EXIT_SOLVER
    if isinstance(exc, BigMError):
        return EXIT_USAGE
    if isinstance(exc, (SolverError, ApproximationError, AssemblyError)):
        return EXIT_SOLVER
    raise exc


def read_scenario(path: str) -> Scenario:
    try:
        return load_scenario(path)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        raise RunFailure(exit_code_for(exc), f"cannot load {path}: {exc}") from exc


def run_model(scenario: Scenario, kind: str, flags: SolverFlags) -> MarketSolution:
    try:
        if kind == SW:
            return solve_sw(scenario, method=flags.method, segments=flags.segments)
        return solve_mtoc(scenario, price_cap=flags.price_cap, method=flags.method, segments=flags.segments)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        raise RunFailure(exit_code_for(exc), f"{kind} run failed: {exc}") from exc


def assembled_model(scenario: Scenario, kind: str, flags: SolverFlags):
    if kind == SW:
        return build_sw(scenario).model
    return build_mtoc(scenario, choose_big_m(scenario, flags.price_cap)).model


# --------------------------------------------------------------------------
# table writers


def _fmt_num(value: float) -> str:
    return repr(float(value) + 0.0)


def stats_table(model, solution: MarketSolution | None, flags: SolverFlags, seed: int | None):
    stats = model_stats(model)
    rows: list[list[Any]] = [
        ["binaries", stats.binaries],
        ["continuous", stats.continuous],
        ["rows", stats.rows],
        ["price_cap", _fmt_num(flags.price_cap)],
        ["pwl_segments", "" if flags.pwl_segments is None else flags.pwl_segments],
        ["seed", "" if seed is None else seed],
    ]
    if solution is not None:
        d = solution.diagnostics
        rows += [
            ["status", "optimal"],
            ["method", d.get("method", "")],
            ["objective", _fmt_num(solution.objective)],
            ["approx_bound", _fmt_num(d.get("approx_bound") or 0.0)],
            ["energy_balance_residual", _fmt_num(d.get("energy_balance_residual", 0.0))],
            ["reserve_residual", _fmt_num(d.get("reserve_residual", 0.0))],
        ]
        if "total_gap" in d:
            rows.append(["total_gap", _fmt_num(d["total_gap"])])
    return ["metric", "value"], rows


def schedule_table(solution: MarketSolution):
    header = ["unit", "t", "z", "v", "w", "g", "gR", "r"]
    rows = []
    for gid, s in solution.schedules.items():
        for t in range(s.T):
            rows.append([gid, t + 1] + [_fmt_num(getattr(s, k)[t]) for k in ("z", "v", "w", "g", "gR", "r")])
    return header, rows


def prices_table(solution: MarketSolution):
    sc = solution.scenario
    rows = []
    for t in sc.periods:
        for bus in sc.network.buses:
            rows.append(["energy", bus, t, _fmt_num(solution.prices.energy(bus, t))])
        rows.append(["reserve", "", t, _fmt_num(solution.prices.reserve(t))])
    return ["kind", "bus", "t", "price"], rows


def write_solution(run_dir: Path, solution: MarketSolution, report: an.FinancialReport, fmt: str) -> None:
    an.write_table(run_dir / "generators", *an.generator_table([report]), fmt=fmt)
    an.write_table(run_dir / "system", *an.single_system_table(report), fmt=fmt)
    an.write_table(run_dir / "opportunity_costs", *an.opportunity_table([report]), fmt=fmt)
    an.write_table(run_dir / "series", *an.series_table([report]), fmt=fmt)
    an.write_table(run_dir / "schedule", *schedule_table(solution), fmt=fmt)
    an.write_table(run_dir / "prices", *prices_table(solution), fmt=fmt)


def checks_table(sw: an.FinancialReport, mtoc: an.FinancialReport):
    rows = [
        ["OC(MTOC) <= OC(SW)", str(mtoc.total_opportunity_cost <= sw.total_opportunity_cost + 1e-6).lower()],
        ["welfare(SW) >= welfare(MTOC)", str(sw.social_welfare >= mtoc.social_welfare - 1e-6).lower()],
    ]
    return ["check", "holds"], rows


# --------------------------------------------------------------------------
# sweep worker


def _sweep_one(args: tuple[Scenario, str, float, tuple[str, ...], SolverFlags, str, str]) -> list[list[Any]]:
    scenario, parameter, value, models, flags, run_dir, fmt = args
    if parameter == "h":
        scaled = scale_scenario(scenario, h=value)
    elif parameter == "fmax_pct":
        scaled = scale_scenario(scenario, fmax_pct=value)
    else:
        scaled = scale_scenario(scenario, gmax_pct=value)
    rows: list[list[Any]] = []
    for kind in models:
        try:
            sol = run_model(scaled, kind, flags)
            report = an.financial_report(scaled, sol)
        except RunFailure as exc:
            rows += [[parameter, _fmt_num(value), m, kind, "", f"failed({exc.code})"] for m in SWEEP_METRICS]
            continue
        sub = Path(run_dir) / f"{parameter}={value:g}" / kind.lower()
        an.write_table(sub / "system", *an.single_system_table(report), fmt=fmt)
        rows += [[parameter, _fmt_num(value), m, kind, _fmt_num(report.metric(m)), "optimal"] for m in SWEEP_METRICS]
    return rows


def run_sweep(
    scenario: Scenario, spec: SweepSpec, flags: SolverFlags, run_dir: Path, fmt: str, jobs: int = 1
) -> list[list[Any]]:
    """Long-format rows: |values| x |models| x |metrics|, failures included."""
    tasks = [(scenario, spec.parameter, v, spec.models, flags, str(run_dir), fmt) for v in spec.values]
    if jobs <= 1:
        chunks = [_sweep_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_one, tasks))
    return [row for chunk in chunks for row in chunk]


SWEEP_HEADER = ["parameter", "value", "metric", "model", "result", "status"]


# --------------------------------------------------------------------------
# commands


def _common(f):
    f = click.option("--scenario", "scenario_path", required=True, help="Scenario JSON file.")(f)
    f = click.option("--out", "out", default="runs", show_default=True, type=click.Path(file_okay=False))(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)(f)
    f = click.option("--pwl-segments", type=click.IntRange(min=1), default=None,
                     help="Solve the quadratic part by a secant PWL with N segments.")(f)
    f = click.option("--price-cap", type=float, default=DEFAULT_PRICE_CAP, show_default=True,
                     help="Price box used to size the consumer big-M constants.")(f)
    f = click.option("--seed", type=int, default=None, help="Reserved; recorded but unused.")(f)
    return f


def _fail(exc: RunFailure) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.code)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log solver progress.")
def main(verbose: bool) -> None:
    """Electricity market clearing with welfare and minimum-opportunity-cost pricing."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)


@main.command()
@_common
@click.option("--model", "kind", type=click.Choice(["sw", "mtoc"]), required=True)
@click.option("--dump-model", is_flag=True, help="Also write the assembled model in LP format.")
@click.option("--assemble-only", is_flag=True, help="Write model statistics without solving.")
def solve(scenario_path, out, fmt, pwl_segments, price_cap, seed, kind, dump_model, assemble_only):
    """Clear one scenario with one model."""
    flags = SolverFlags(pwl_segments, price_cap)
    kind = kind.upper()
    try:
        scenario = read_scenario(scenario_path)
        run_dir = Path(out) / f"{scenario.name}-{kind.lower()}"
        try:
            model = assembled_model(scenario, kind, flags)
        except Exception as exc:  # noqa: BLE001
            raise RunFailure(exit_code_for(exc), str(exc)) from exc
        if dump_model:
            write_lp(model, run_dir / "model.lp")
        solution = None if assemble_only else run_model(scenario, kind, flags)
        header, rows = stats_table(model, solution, flags, seed)
        an.write_table(run_dir / "stats", header, rows, fmt=fmt)
        click.echo(" ".join(f"{k}={v}" for k, v in rows[:3]))
        if solution is not None:
            report = an.financial_report(scenario, solution)
            write_solution(run_dir, solution, report, fmt)
            click.echo(f"objective={solution.objective:.6f} welfare={report.social_welfare:.6f}")
        click.echo(f"wrote {run_dir}")
    except RunFailure as exc:
        _fail(exc)


@main.command()
@_common
def compare(scenario_path, out, fmt, pwl_segments, price_cap, seed):
    """Clear one scenario with both models and tabulate the differences."""
    flags = SolverFlags(pwl_segments, price_cap)
    try:
        scenario = read_scenario(scenario_path)
        sw = run_model(scenario, SW, flags)
        mtoc = run_model(scenario, MTOC, flags)
    except RunFailure as exc:
        _fail(exc)
        return
    r_sw = an.financial_report(scenario, sw)
    r_mtoc = an.financial_report(scenario, mtoc)
    run_dir = Path(out) / f"{scenario.name}-compare"
    an.write_table(run_dir / "generators", *an.generator_table([r_mtoc, r_sw]), fmt=fmt)
    an.write_table(run_dir / "system", *an.system_table(r_sw, r_mtoc), fmt=fmt)
    an.write_table(run_dir / "opportunity_costs", *an.opportunity_table([r_mtoc, r_sw]), fmt=fmt)
    an.write_table(run_dir / "series", *an.series_table([r_mtoc, r_sw]), fmt=fmt)
    an.write_table(run_dir / "checks", *checks_table(r_sw, r_mtoc), fmt=fmt)
    for kind, m in ((SW, sw), (MTOC, mtoc)):
        an.write_table(run_dir / f"stats_{kind.lower()}", *stats_table(m.model, m, flags, seed), fmt=fmt)
    click.echo(an.to_csv(*an.system_table(r_sw, r_mtoc)), nl=False)
    click.echo(f"wrote {run_dir}")


def _parse_values(text: str | None, parameter: str) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_GRIDS[parameter]
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise click.BadParameter(f"not a comma-separated number list: {text!r}") from exc
    if any(not math.isfinite(v) for v in vals):
        raise click.BadParameter("values must be finite")
    return vals


@main.command()
@_common
@click.option("--parameter", type=click.Choice(SWEEP_PARAMETERS), required=True)
@click.option("--values", "values_text", default=None, help="Comma-separated values; defaults to the standard grid.")
@click.option("--model", "models", type=click.Choice(["sw", "mtoc", "both"]), default="both", show_default=True)
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True)
def sweep(scenario_path, out, fmt, pwl_segments, price_cap, seed, parameter, values_text, models, jobs):
    """Re-clear a scenario across a grid of one scaling parameter."""
    flags = SolverFlags(pwl_segments, price_cap)
    kinds = (SW, MTOC) if models == "both" else (models.upper(),)
    try:
        spec = SweepSpec(parameter, _parse_values(values_text, parameter), kinds)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from exc
    try:
        scenario = read_scenario(scenario_path)
    except RunFailure as exc:
        _fail(exc)
        return
    run_dir = Path(out) / f"{scenario.name}-sweep-{parameter}"
    rows = run_sweep(scenario, spec, flags, run_dir, fmt, jobs)
    an.write_table(run_dir / "sweep", SWEEP_HEADER, rows, fmt=fmt)
    failed = sum(1 for r in rows if r[-1] != "optimal")
    click.echo(f"{len(rows)} rows, {failed} failed; wrote {run_dir}")
    if failed:
        sys.exit(EXIT_SOLVER)


if __name__ == "__main__":  # pragma: no cover
    main()
