"""Market scenarios: network, generators, demand curves and run knobs.

Scenarios are immutable.  Base data (line ratings, generator capacities,
demand floors) is stored exactly as read; the scaling knobs in
:class:`ScenarioConfig` are applied through the ``effective_*`` accessors so
that a scenario can be re-serialised without loss.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator

from .demand import DegenerateCurveError, calibrate


class ScenarioError(ValueError):
    """Invalid scenario data; ``path`` points at the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class FloorAboveDemandWarning(UserWarning):
    pass


def derive_susceptance(reactance: float) -> float:
    if not reactance > 0:
        raise ValueError(f"reactance must be positive, got {reactance}")
    return 1.0 / reactance


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    reactance: float
    fmax: float

    @property
    def susceptance(self) -> float:
        return derive_susceptance(self.reactance)


@dataclass(frozen=True)
class Network:
    buses: tuple[str, ...]
    lines: tuple[Line, ...]
    slack_bus: str
    theta_limit: float

    def incidence(self, line: Line, bus: str) -> int:
        """+1 at the origin bus, -1 at the destination, 0 elsewhere."""
        if bus == line.from_bus:
            return 1
        if bus == line.to_bus:
            return -1
        return 0


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    bus: str
    marginal_cost: float
    startup_cost: float
    ramp_cost: float
    ramp_up: float
    ramp_down: float
    gmin: float
    gmax: float
    min_down: int
    min_up: int
    reserve_capable: bool
    initial_on: int
    initial_output: float
    forced_on_hours: int = 0
    forced_off_hours: int = 0
    # Optional in files; filled by apply_defaults.
    reserve_cost: float | None = None
    shutdown_cost: float | None = None
    startup_rate: float | None = None
    shutdown_rate: float | None = None


@dataclass(frozen=True)
class DemandPeriod:
    qbar: float
    qmin: float
    ph: float
    pl: float
    a: float = field(init=False)
    b: float = field(init=False)

    def __post_init__(self) -> None:
        a, b = calibrate(self.qmin, self.qbar, self.ph, self.pl)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class DemandSpec:
    bus: str
    periods: tuple[DemandPeriod, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    T: int
    phi: float = 0.05
    h: float = 1.0
    fmax_pct: float = 100.0
    gmax_pct: float = 100.0
    reserve_cost_factor: float = 0.4
    shutdown_cost_factor: float = 0.2


@dataclass(frozen=True)
class Scenario:
    network: Network
    generators: tuple[GeneratorSpec, ...]
    demands: tuple[DemandSpec, ...]
    config: ScenarioConfig
    name: str = "scenario"

    @property
    def T(self) -> int:
        return self.config.T

    @property
    def periods(self) -> range:
        return range(1, self.config.T + 1)

    def effective_fmax(self, line: Line) -> float:
        return line.fmax * self.config.fmax_pct / 100.0

    def effective_gmax(self, gen: GeneratorSpec) -> float:
        return gen.gmax * self.config.gmax_pct / 100.0

    def demand_floor(self, demand: DemandSpec, t: int) -> float:
        return self.config.h * demand.periods[t - 1].qmin

    def demand_at(self, bus: str) -> DemandSpec | None:
        for d in self.demands:
            if d.bus == bus:
                return d
        return None

    def generators_at(self, bus: str) -> Iterator[GeneratorSpec]:
        return (g for g in self.generators if g.bus == bus)

    def generator(self, gen_id: str) -> GeneratorSpec:
        for g in self.generators:
            if g.id == gen_id:
                return g
        raise KeyError(gen_id)


def apply_defaults(scenario: Scenario) -> Scenario:
    """Fill optional generator fields from the config factors."""
    cfg = scenario.config
    gens = []
    for g in scenario.generators:
        gens.append(
            replace(
                g,
                reserve_cost=g.reserve_cost if g.reserve_cost is not None else cfg.reserve_cost_factor * g.marginal_cost,
                shutdown_cost=g.shutdown_cost if g.shutdown_cost is not None else cfg.shutdown_cost_factor * g.startup_cost,
                startup_rate=g.startup_rate if g.startup_rate is not None else g.ramp_up,
                shutdown_rate=g.shutdown_rate if g.shutdown_rate is not None else g.ramp_down,
            )
        )
    return replace(scenario, generators=tuple(gens))


def scale_scenario(
    scenario: Scenario,
    h: float | None = None,
    fmax_pct: float = 100.0,
    gmax_pct: float = 100.0,
) -> Scenario:
    """Set the floor multiplier and rescale line and generator ratings.

    ``h`` replaces the current multiplier (``None`` keeps it); the two
    percentages multiply the current ones, so repeated scaling composes.
    Demand curves are never touched.
    """
    if h is not None and h < 0:
        raise ValueError("h must be non-negative")
    if fmax_pct <= 0 or gmax_pct <= 0:
        raise ValueError("scaling percentages must be positive")
    cfg = scenario.config
    new_cfg = replace(
        cfg,
        h=cfg.h if h is None else float(h),
        fmax_pct=cfg.fmax_pct * fmax_pct / 100.0,
        gmax_pct=cfg.gmax_pct * gmax_pct / 100.0,
    )
    scaled = replace(scenario, config=new_cfg)
    _warn_floor(scaled)
    return scaled


# --------------------------------------------------------------------------
# file IO


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"parse failure: {exc}") from exc
    return scenario_from_dict(raw, name=raw.get("name", path.stem) if isinstance(raw, dict) else path.stem)


def scenario_from_dict(raw: dict[str, Any], name: str | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("$", "top level must be an object")
    cfg_raw = _section(raw, "config", dict)
    config = ScenarioConfig(
        T=_int(cfg_raw, "T", "config.T"),
        phi=_num(cfg_raw, "phi", "config.phi", 0.05),
        h=_num(cfg_raw, "h", "config.h", 1.0),
        fmax_pct=_num(cfg_raw, "fmax_pct", "config.fmax_pct", 100.0),
        gmax_pct=_num(cfg_raw, "gmax_pct", "config.gmax_pct", 100.0),
        reserve_cost_factor=_num(cfg_raw, "reserve_cost_factor", "config.reserve_cost_factor", 0.4),
        shutdown_cost_factor=_num(cfg_raw, "shutdown_cost_factor", "config.shutdown_cost_factor", 0.2),
    )

    buses = tuple(str(b) for b in _section(raw, "buses", list))
    lines = []
    for k, ln in enumerate(_section(raw, "lines", list)):
        p = f"lines[{k}]"
        lines.append(
            Line(
                id=str(_req(ln, "id", p)),
                from_bus=str(_req(ln, "from", p)),
                to_bus=str(_req(ln, "to", p)),
                reactance=_num(ln, "reactance", f"{p}.reactance"),
                fmax=_num(ln, "fmax", f"{p}.fmax"),
            )
        )
    slack = str(cfg_raw.get("slack_bus", buses[0] if buses else ""))
    network = Network(
        buses=buses,
        lines=tuple(lines),
        slack_bus=slack,
        theta_limit=_num(cfg_raw, "theta_limit", "config.theta_limit", math.pi),
    )

    gens = []
    for k, g in enumerate(_section(raw, "generators", list)):
        p = f"generators[{k}]"
        gens.append(
            GeneratorSpec(
                id=str(_req(g, "id", p)),
                bus=str(_req(g, "bus", p)),
                marginal_cost=_num(g, "lambda", f"{p}.lambda"),
                reserve_cost=_opt(g, "lambda_res", f"{p}.lambda_res"),
                startup_cost=_num(g, "c_su", f"{p}.c_su"),
                shutdown_cost=_opt(g, "c_sd", f"{p}.c_sd"),
                ramp_cost=_num(g, "c_rp", f"{p}.c_rp", 0.0),
                ramp_up=_num(g, "ru", f"{p}.ru"),
                ramp_down=_num(g, "rd", f"{p}.rd"),
                startup_rate=_opt(g, "su", f"{p}.su"),
                shutdown_rate=_opt(g, "sd", f"{p}.sd"),
                gmin=_num(g, "gmin", f"{p}.gmin"),
                gmax=_num(g, "gmax", f"{p}.gmax"),
                min_down=_int(g, "dmin", f"{p}.dmin", 1),
                min_up=_int(g, "umin", f"{p}.umin", 1),
                reserve_capable=_flag(g, "reserve_capable", f"{p}.reserve_capable"),
                initial_on=_int(g, "z0", f"{p}.z0"),
                initial_output=_num(g, "g0", f"{p}.g0"),
                forced_on_hours=_int(g, "t_on", f"{p}.t_on", 0),
                forced_off_hours=_int(g, "t_off", f"{p}.t_off", 0),
            )
        )

    demands = []
    for k, d in enumerate(_section(raw, "demands", list)):
        p = f"demands[{k}]"
        series = _req(d, "series", p)
        if not isinstance(series, list):
            raise ScenarioError(f"{p}.series", "must be a list")
        periods = []
        for j, s in enumerate(series):
            sp = f"{p}.series[{j}]"
            try:
                periods.append(
                    DemandPeriod(
                        qbar=_num(s, "qbar", f"{sp}.qbar"),
                        qmin=_num(s, "qmin", f"{sp}.qmin"),
                        ph=_num(s, "ph", f"{sp}.ph"),
                        pl=_num(s, "pl", f"{sp}.pl"),
                    )
                )
            except DegenerateCurveError as exc:
                raise ScenarioError(sp, str(exc)) from exc
        demands.append(DemandSpec(bus=str(_req(d, "bus", p)), periods=tuple(periods)))

    scenario = Scenario(
        network=network,
        generators=tuple(gens),
        demands=tuple(demands),
        config=config,
        name=name or str(raw.get("name", "scenario")),
    )
    scenario = apply_defaults(scenario)
    validate(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    cfg = scenario.config
    net = scenario.network
    return {
        "name": scenario.name,
        "config": {
            "T": cfg.T,
            "phi": cfg.phi,
            "h": cfg.h,
            "fmax_pct": cfg.fmax_pct,
            "gmax_pct": cfg.gmax_pct,
            "reserve_cost_factor": cfg.reserve_cost_factor,
            "shutdown_cost_factor": cfg.shutdown_cost_factor,
            "theta_limit": net.theta_limit,
            "slack_bus": net.slack_bus,
        },
        "buses": list(net.buses),
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance, "fmax": ln.fmax}
            for ln in net.lines
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "lambda": g.marginal_cost,
                "lambda_res": g.reserve_cost,
                "c_su": g.startup_cost,
                "c_sd": g.shutdown_cost,
                "c_rp": g.ramp_cost,
                "ru": g.ramp_up,
                "rd": g.ramp_down,
                "su": g.startup_rate,
                "sd": g.shutdown_rate,
                "gmin": g.gmin,
                "gmax": g.gmax,
                "dmin": g.min_down,
                "umin": g.min_up,
                "reserve_capable": int(g.reserve_capable),
                "z0": g.initial_on,
                "g0": g.initial_output,
                "t_on": g.forced_on_hours,
                "t_off": g.forced_off_hours,
            }
            for g in scenario.generators
        ],
        "demands": [
            {
                "bus": d.bus,
                "series": [{"qbar": s.qbar, "qmin": s.qmin, "ph": s.ph, "pl": s.pl} for s in d.periods],
            }
            for d in scenario.demands
        ],
    }


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


# --------------------------------------------------------------------------
# validation


def validate(scenario: Scenario) -> None:
    cfg = scenario.config
    net = scenario.network
    if cfg.T < 1:
        raise ScenarioError("config.T", "must be at least 1")
    if not 0 <= cfg.phi < 1:
        raise ScenarioError("config.phi", "must lie in [0, 1)")
    if cfg.h < 0:
        raise ScenarioError("config.h", "must be non-negative")
    for key in ("fmax_pct", "gmax_pct"):
        if getattr(cfg, key) <= 0:
            raise ScenarioError(f"config.{key}", "must be positive")
    if net.theta_limit <= 0:
        raise ScenarioError("config.theta_limit", "must be positive")

    buses = set(net.buses)
    if len(buses) != len(net.buses):
        raise ScenarioError("buses", "duplicate bus id")
    if net.slack_bus not in buses:
        raise ScenarioError("config.slack_bus", f"unknown bus {net.slack_bus!r}")

    seen = set()
    for k, ln in enumerate(net.lines):
        p = f"lines[{k}]"
        if ln.id in seen:
            raise ScenarioError(f"{p}.id", f"duplicate line id {ln.id!r}")
        seen.add(ln.id)
        for attr, key in (("from_bus", "from"), ("to_bus", "to")):
            if getattr(ln, attr) not in buses:
                raise ScenarioError(f"{p}.{key}", f"line {ln.id!r} references unknown bus {getattr(ln, attr)!r}")
        if ln.from_bus == ln.to_bus:
            raise ScenarioError(p, f"line {ln.id!r} connects bus {ln.from_bus!r} to itself")
        if ln.reactance <= 0:
            raise ScenarioError(f"{p}.reactance", "must be positive")
        if ln.fmax <= 0:
            raise ScenarioError(f"{p}.fmax", "must be positive")

    seen = set()
    for k, g in enumerate(scenario.generators):
        p = f"generators[{k}]"
        if g.id in seen:
            raise ScenarioError(f"{p}.id", f"duplicate generator id {g.id!r}")
        seen.add(g.id)
        if g.bus not in buses:
            raise ScenarioError(f"{p}.bus", f"unknown bus {g.bus!r}")
        if not 0 <= g.gmin <= g.gmax:
            raise ScenarioError(f"{p}.gmin", "need 0 <= gmin <= gmax")
        for attr, key in (
            ("ramp_up", "ru"),
            ("ramp_down", "rd"),
            ("startup_rate", "su"),
            ("shutdown_rate", "sd"),
            ("startup_cost", "c_su"),
            ("shutdown_cost", "c_sd"),
            ("ramp_cost", "c_rp"),
            ("reserve_cost", "lambda_res"),
        ):
            val = getattr(g, attr)
            if val is None or val < 0:
                raise ScenarioError(f"{p}.{key}", "must be non-negative")
        if g.min_down < 1 or g.min_up < 1:
            raise ScenarioError(f"{p}.dmin", "minimum up/down times must be >= 1")
        if g.initial_on not in (0, 1):
            raise ScenarioError(f"{p}.z0", "must be 0 or 1")
        if g.forced_on_hours < 0 or g.forced_off_hours < 0:
            raise ScenarioError(f"{p}.t_on", "forced hours must be non-negative")
        if g.forced_on_hours > 0 and g.forced_off_hours > 0:
            raise ScenarioError(f"{p}.t_on", "at most one of t_on and t_off may be positive")
        if g.forced_on_hours > 0 and g.initial_on != 1:
            raise ScenarioError(f"{p}.t_on", "forced-on unit must start committed")
        if g.forced_off_hours > 0 and g.initial_on != 0:
            raise ScenarioError(f"{p}.t_off", "forced-off unit must start uncommitted")
        if g.initial_output < 0:
            raise ScenarioError(f"{p}.g0", "must be non-negative")
        if g.initial_on == 0 and g.initial_output != 0:
            raise ScenarioError(f"{p}.g0", "uncommitted unit must start at zero output")

    seen = set()
    for k, d in enumerate(scenario.demands):
        p = f"demands[{k}]"
        if d.bus not in buses:
            raise ScenarioError(f"{p}.bus", f"unknown bus {d.bus!r}")
        if d.bus in seen:
            raise ScenarioError(f"{p}.bus", f"second demand on bus {d.bus!r}")
        seen.add(d.bus)
        if len(d.periods) != cfg.T:
            raise ScenarioError(f"{p}.series", f"expected {cfg.T} periods, got {len(d.periods)}")
        for j, s in enumerate(d.periods):
            if s.qmin < 0:
                raise ScenarioError(f"{p}.series[{j}].qmin", "must be non-negative")
            if s.pl < 0:
                raise ScenarioError(f"{p}.series[{j}].pl", "must be non-negative")

    if cfg.phi > 0 and not any(g.reserve_capable for g in scenario.generators):
        raise ScenarioError("generators", "reserve requirement needs at least one reserve-capable unit")
    _warn_floor(scenario)


def _warn_floor(scenario: Scenario) -> None:
    h = scenario.config.h
    for d in scenario.demands:
        for t, s in enumerate(d.periods, start=1):
            if h * s.qmin >= s.qbar:
                warnings.warn(
                    f"bus {d.bus} period {t}: floor {h * s.qmin:g} reaches qbar {s.qbar:g}",
                    FloorAboveDemandWarning,
                    stacklevel=3,
                )
                return


def _section(raw: dict, key: str, kind: type) -> Any:
    if key not in raw:
        raise ScenarioError(key, "missing section")
    val = raw[key]
    if not isinstance(val, kind):
        raise ScenarioError(key, f"expected {kind.__name__}")
    return val


def _req(obj: Any, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise ScenarioError(path, "expected an object")
    if key not in obj or obj[key] is None:
        raise ScenarioError(f"{path}.{key}", "missing field")
    return obj[key]


def _num(obj: dict, key: str, path: str, default: float | None = None) -> float:
    if not isinstance(obj, dict):
        raise ScenarioError(path.rsplit(".", 1)[0], "expected an object")
    if key not in obj or obj[key] is None:
        if default is None:
            raise ScenarioError(path, "missing field")
        return float(default)
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(path, f"expected a number, got {val!r}")
    if not math.isfinite(val):
        raise ScenarioError(path, "must be finite")
    return float(val)


def _int(obj: dict, key: str, path: str, default: int | None = None) -> int:
    val = _num(obj, key, path, None if default is None else float(default))
    if val != int(val):
        raise ScenarioError(path, f"expected an integer, got {val!r}")
    return int(val)


def _flag(obj: dict, key: str, path: str) -> bool:
    val = obj.get(key, 1)
    if isinstance(val, bool):
        return val
    if val not in (0, 1):
        raise ScenarioError(path, f"expected 0 or 1, got {val!r}")
    return bool(val)


def _opt(obj: dict, key: str, path: str) -> float | None:
    if key not in obj or obj[key] is None:
        return None
    return _num(obj, key, path)
