from __future__ import annotations

import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from mtoc_market.scenario import Scenario, load_scenario, scenario_from_dict

FIXTURES = Path(__file__).parent / "fixtures"
DATA = resources.files("mtoc_market") / "data"
DESK_PATH = Path(str(DATA / "desk.json"))
RTS_PATH = Path(str(DATA / "rts24.json"))


def random_desk_dict(seed: int, T: int = 4) -> dict:
    """Three-bus, three-unit instance with randomised costs, limits and initial states.

    The cheap unit at bus 1 can serve the whole load on its own and both lines
    leaving bus 1 carry the full peak, so every draw is feasible.
    """
    rng = np.random.default_rng(seed)
    qbar2 = rng.uniform(60, 140, T).round(1)
    qbar3 = rng.uniform(40, 100, T).round(1)
    peak = float((qbar2 + qbar3).max())
    big = math.ceil(peak * 1.3)
    lines = [
        {"id": "L12", "from": "1", "to": "2", "reactance": 0.01, "fmax": big},
        {"id": "L13", "from": "1", "to": "3", "reactance": 0.01, "fmax": big},
        {"id": "L23", "from": "2", "to": "3", "reactance": 0.01, "fmax": float(rng.integers(20, 90))},
    ]

    def unit(uid, bus, lam, gmax, gmin, reserve, z0, g0, ramp):
        return {
            "id": uid, "bus": bus, "lambda": lam, "c_su": float(rng.integers(0, 12) * 100),
            "c_rp": float(rng.integers(0, 3)), "ru": ramp, "rd": ramp, "gmin": gmin, "gmax": gmax,
            "dmin": int(rng.integers(1, 4)), "umin": int(rng.integers(1, 4)),
            "reserve_capable": reserve, "z0": z0, "g0": g0, "t_on": 0, "t_off": 0,
        }

    g1_max = math.ceil(peak * 1.2)
    g1_on = int(rng.integers(0, 2))
    gens = [
        dict(unit("G1", "1", round(float(rng.uniform(8, 14)), 2), g1_max, float(rng.integers(10, 40)),
                  True, g1_on, float(g1_max // 2) if g1_on else 0.0, g1_max), dmin=1, umin=1),
        unit("G2", "2", round(float(rng.uniform(15, 30)), 2), float(rng.integers(60, 120)),
             float(rng.integers(10, 30)), True, 0, 0.0, float(rng.integers(40, 120))),
        unit("G3", "3", round(float(rng.uniform(25, 45)), 2), float(rng.integers(30, 80)),
             float(rng.integers(5, 20)), bool(rng.integers(0, 2)), 0, 0.0, float(rng.integers(30, 80))),
    ]
    ph = round(float(rng.uniform(50, 80)), 1)
    pl = round(float(rng.uniform(15, 30)), 1)

    def series(qbar):
        return [{"qbar": float(q), "qmin": round(0.85 * float(q), 4), "ph": ph, "pl": pl} for q in qbar]

    return {
        "name": f"desk-random-{seed}",
        "config": {"T": T, "phi": 0.05, "h": 1.0, "theta_limit": math.pi, "slack_bus": "1"},
        "buses": ["1", "2", "3"],
        "lines": lines,
        "generators": gens,
        "demands": [{"bus": "2", "series": series(qbar2)}, {"bus": "3", "series": series(qbar3)}],
    }


def random_desk(seed: int, T: int = 4) -> Scenario:
    return scenario_from_dict(random_desk_dict(seed, T))


RANDOM_SEEDS = (11, 23, 37, 41, 59)


@pytest.fixture(scope="session")
def desk() -> Scenario:
    return load_scenario(DESK_PATH)


@pytest.fixture(scope="session")
def desk_sw(desk):
    from mtoc_market.sw import solve_sw

    return solve_sw(desk)


@pytest.fixture(scope="session")
def desk_mtoc(desk):
    from mtoc_market.mtoc import solve_mtoc

    return solve_mtoc(desk)


@pytest.fixture(scope="session")
def random_instances():
    return [random_desk(s) for s in RANDOM_SEEDS]


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
