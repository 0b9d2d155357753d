from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtoc_market.solver import (
    INFEASIBLE,
    BudgetExceeded,
    ModelBuilder,
    SolverError,
    enumerate_binaries,
    model_to_lp,
    pwl_approximate,
    solve_lp_with_duals,
    solve_milp,
    solve_miqp,
    solve_qp,
    write_lp,
)


def test_lp_dual_of_lower_bound_row():
    b = ModelBuilder()
    b.add_var("x", 0.0, cost=1.0)
    b.add_row("c", {"x": 1.0}, ">", 3.0)
    res = solve_lp_with_duals(b.build()).require_optimal()
    assert res.objective == pytest.approx(3.0)
    assert res.dual("c") == pytest.approx(1.0)
    assert res.duality_gap == pytest.approx(0.0, abs=1e-9)


def test_lp_duals_of_equality_and_upper_rows():
    # min 2x + 3y, x + y = 10, x <= 4  ->  x=4, y=6; dual(eq)=3, dual(x<=4)=-1
    b = ModelBuilder()
    b.add_var("x", 0.0, cost=2.0)
    b.add_var("y", 0.0, cost=3.0)
    b.add_row("eq", {"x": 1.0, "y": 1.0}, "=", 10.0)
    b.add_row("cap", {"x": 1.0}, "<", 4.0)
    res = solve_lp_with_duals(b.build()).require_optimal()
    assert res.value("x") == pytest.approx(4.0)
    assert res.dual("eq") == pytest.approx(3.0)
    assert res.dual("cap") == pytest.approx(-1.0)


def test_infeasible_status():
    b = ModelBuilder()
    b.add_var("x", 1.0, 0.0)
    res = solve_lp_with_duals(b.build())
    assert res.status == INFEASIBLE
    with pytest.raises(SolverError):
        res.require_optimal()


def test_qp_duals_are_exact_multipliers():
    # min x^2 - 4x, x <= 1  ->  x=1, multiplier 2 (dual -2 in the d obj / d rhs convention)
    b = ModelBuilder()
    b.add_var("x", -10.0, 10.0, cost=-4.0, quad=1.0)
    b.add_row("cap", {"x": 1.0}, "<", 1.0)
    res = solve_qp(b.build()).require_optimal()
    assert res.value("x") == pytest.approx(1.0, abs=1e-9)
    assert res.dual("cap") == pytest.approx(-2.0, abs=1e-8)


def _toy_miqp():
    # min (x-3)^2 + 3z, x <= 1 + 10z  ->  z=0 costs 4, z=1 costs 3
    b = ModelBuilder("toy")
    b.add_var("x", 0.0, 10.0, cost=-6.0, quad=1.0)
    b.add_var("z", binary=True, cost=3.0)
    b.add_row("link", {"x": 1.0, "z": -10.0}, "<", 1.0)
    b.add_constant(9.0)
    return b.build()


@pytest.mark.parametrize("method", ["oa", "pwl", "auto"])
def test_miqp_methods_agree_with_enumeration(method):
    model = _toy_miqp()
    exact = enumerate_binaries(model).require_optimal()
    res = solve_miqp(model, method=method, segments=64).require_optimal()
    assert exact.objective == pytest.approx(3.0)
    assert res.objective == pytest.approx(exact.objective, abs=1e-6 + res.approx_bound)


def test_native_miqp_unavailable_raises_or_solves():
    model = _toy_miqp()
    try:
        res = solve_miqp(model, method="native")
    except SolverError:
        return
    assert res.objective == pytest.approx(3.0)


def test_milp_rejects_quadratic():
    with pytest.raises(SolverError):
        solve_milp(_toy_miqp())


def test_enumeration_budget():
    b = ModelBuilder()
    for k in range(13):
        b.add_var(f"z{k}", binary=True)
    with pytest.raises(BudgetExceeded):
        enumerate_binaries(b.build(), budget=4096)


@settings(max_examples=80, deadline=None)
@given(
    coef=st.floats(0.01, 20),
    lo=st.floats(-50, 50),
    width=st.floats(0.5, 200),
    segments=st.integers(1, 64),
    frac=st.floats(0, 1),
)
def test_pwl_bound_is_certified(coef, lo, width, segments, frac):
    hi = lo + width
    approx = pwl_approximate(coef, lo, hi, segments)
    x = lo + frac * width
    err = approx(x) - coef * x * x
    assert err >= -1e-7 * max(1.0, coef * x * x)
    assert err <= approx.bound + 1e-7 * max(1.0, coef * x * x)


def test_pwl_bound_is_tight_at_midpoint():
    approx = pwl_approximate(2.0, 0.0, 4.0, 2)
    assert approx.bound == pytest.approx(2.0)
    assert approx(1.0) - 2.0 == pytest.approx(approx.bound)


def test_lp_dump_is_deterministic(tmp_path):
    a, b = model_to_lp(_toy_miqp()), model_to_lp(_toy_miqp())
    assert a == b
    assert "Binaries" in a and "[ 2.0 x ^2 ] / 2" in a
    path = write_lp(_toy_miqp(), tmp_path / "sub" / "toy.lp")
    assert path.read_text() == a


def test_builder_rejects_duplicates():
    b = ModelBuilder()
    b.add_var("x")
    with pytest.raises(ValueError):
        b.add_var("x")
    b.add_row("r", {"x": 1.0}, "<", 1.0)
    with pytest.raises(ValueError):
        b.add_row("r", {"x": 1.0}, "<", 1.0)


def test_fix_binaries_pins_rounded_values():
    model = _toy_miqp()
    x = np.zeros(model.n_vars)
    x[model.var_index["z"]] = 0.9999999
    fixed = model.fix_binaries(x)
    j = model.var_index["z"]
    assert fixed.lb[j] == fixed.ub[j] == 1.0
    assert fixed.n_binaries == 0
