"""Solver gateway: HiGHS for LP/MILP, an interior-point QP solver for convex QP.

Models are built with :class:`ModelBuilder` into an immutable
:class:`ModelInstance` (named columns, sparse rows, linear objective plus a
non-negative diagonal quadratic).  The gateway offers

* :func:`solve_milp` - mixed-binary LP to zero relative gap,
* :func:`solve_lp_with_duals` / :func:`solve_qp` - continuous solves with row duals,
* :func:`solve_miqp` - convex diagonal MIQP, natively when the backend
  accepts it, otherwise by outer approximation or a secant PWL model,
* :func:`enumerate_binaries` - brute-force oracle for tiny models.

Row duals follow the HiGHS convention ``dual = d(objective)/d(rhs)``: a
binding ``<=`` row has a non-positive dual, a binding ``>=`` row a
non-negative one.
"""
from __future__ import annotations

import functools
import itertools
import logging
import math
import time
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Mapping

import clarabel
import highspy
import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

FEAS_TOL = 1e-6
INT_TOL = 1e-6
DEFAULT_PWL_SEGMENTS = 32

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"

_INF = math.inf

_HIGHS_OPTIONS = {
    "output_flag": False,
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
    "mip_feasibility_tolerance": 1e-9,
    "mip_rel_gap": 0.0,
    "mip_abs_gap": 1e-9,
    # The default regularisation perturbs QP optima by ~1e-7.
    "qp_regularization_value": 0.0,
    "random_seed": 0,
}

# (primal, mip) feasibility tolerances tried after a numerical failure
_RETRY_TOLERANCES = ((1e-8, 1e-8), (1e-7, 1e-7))


class SolverError(RuntimeError):
    pass


class BudgetExceeded(SolverError):
    pass


class ApproximationError(SolverError):
    pass


# --------------------------------------------------------------------------
# model containers


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """An assembled mathematical program; the objective is always minimised."""

    name: str
    var_names: tuple[str, ...]
    binary: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    A: sparse.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: tuple[str, ...]
    row_tags: tuple[str, ...]
    c: np.ndarray
    qdiag: np.ndarray
    constant: float = 0.0

    def __post_init__(self) -> None:
        n, m = len(self.var_names), len(self.row_names)
        if self.A.shape != (m, n):
            raise ValueError(f"constraint matrix shape {self.A.shape} != ({m}, {n})")
        if np.any(self.qdiag < 0):
            raise ValueError("quadratic coefficients must be non-negative")

    @cached_property
    def var_index(self) -> dict[str, int]:
        return {name: j for j, name in enumerate(self.var_names)}

    @cached_property
    def row_index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.row_names)}

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @property
    def is_quadratic(self) -> bool:
        return bool(np.any(self.qdiag > 0))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.qdiag @ (x * x) + self.constant)

    def vector(self, values: Mapping[str, float], default: float = 0.0) -> np.ndarray:
        x = np.full(self.n_vars, default)
        for name, val in values.items():
            x[self.var_index[name]] = val
        return x

    def residual(self, x: np.ndarray, integrality: bool = True) -> float:
        """Largest violation of rows, bounds and (optionally) integrality."""
        act = self.A @ x
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.sense == "<", self.sense == ">", self.sense == "="
        viol[le] = act[le] - self.rhs[le]
        viol[ge] = self.rhs[ge] - act[ge]
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        worst = max(viol.max(initial=0.0), (self.lb - x).max(initial=0.0), (x - self.ub).max(initial=0.0))
        if integrality and self.n_binaries:
            xb = x[self.binary]
            worst = max(worst, np.abs(xb - np.round(xb)).max())
        return float(max(worst, 0.0))

    def fix_binaries(self, x: np.ndarray) -> ModelInstance:
        """Copy with every binary pinned to its rounded value in ``x``."""
        lb, ub = self.lb.copy(), self.ub.copy()
        vals = np.round(x[self.binary]) + 0.0
        lb[self.binary] = vals
        ub[self.binary] = vals
        return replace(self, lb=lb, ub=ub, binary=np.zeros(self.n_vars, dtype=bool))

    def relax(self) -> ModelInstance:
        return replace(self, binary=np.zeros(self.n_vars, dtype=bool))


class ModelBuilder:
    """Incremental construction of a :class:`ModelInstance` by variable name."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._index: dict[str, int] = {}
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._bin: list[bool] = []
        self._c: list[float] = []
        self._q: list[float] = []
        self._constant = 0.0
        self._row_names: list[str] = []
        self._row_set: set[str] = set()
        self._row_tags: list[str] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._ri: list[int] = []
        self._rj: list[int] = []
        self._rv: list[float] = []

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def add_var(
        self,
        name: str,
        lb: float = 0.0,
        ub: float = _INF,
        binary: bool = False,
        cost: float = 0.0,
        quad: float = 0.0,
    ) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        j = len(self._names)
        self._index[name] = j
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        self._bin.append(binary)
        self._c.append(cost)
        self._q.append(quad)
        return j

    def add_cost(self, name: str, coef: float) -> None:
        self._c[self._index[name]] += coef

    def add_quad(self, name: str, coef: float) -> None:
        self._q[self._index[name]] += coef

    def add_constant(self, value: float) -> None:
        self._constant += value

    def add_row(self, name: str, coefs: Mapping[str, float], sense: str, rhs: float, tag: str = "plumbing") -> int:
        if sense not in ("<", ">", "="):
            raise ValueError(f"bad sense {sense!r}")
        if name in self._row_set:
            raise ValueError(f"duplicate row {name!r}")
        i = len(self._row_names)
        self._row_set.add(name)
        self._row_names.append(name)
        self._row_tags.append(tag)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        for var, coef in coefs.items():
            if coef != 0.0:
                self._ri.append(i)
                self._rj.append(self._index[var])
                self._rv.append(float(coef))
        return i

    def build(self) -> ModelInstance:
        n, m = len(self._names), len(self._row_names)
        A = sparse.coo_matrix((self._rv, (self._ri, self._rj)), shape=(m, n)).tocsr()
        A.sum_duplicates()
        return ModelInstance(
            name=self.name,
            var_names=tuple(self._names),
            binary=np.array(self._bin, dtype=bool),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            A=A,
            sense=np.array(self._sense, dtype="<U1"),
            rhs=np.array(self._rhs, dtype=float),
            row_names=tuple(self._row_names),
            row_tags=tuple(self._row_tags),
            c=np.array(self._c, dtype=float),
            qdiag=np.array(self._q, dtype=float),
            constant=self._constant,
        )


@dataclass(eq=False)
class SolveResult:
    status: str
    model: ModelInstance
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    wall_time: float = 0.0
    approx_bound: float = 0.0
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    duality_gap: float = math.nan
    iterations: int = 0
    method: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def value(self, name: str) -> float:
        return float(self.x[self.model.var_index[name]])

    def dual(self, row: str) -> float:
        return float(self.duals[self.model.row_index[row]])

    def values(self) -> dict[str, float]:
        return dict(zip(self.model.var_names, map(float, self.x)))

    def require_optimal(self, what: str = "solve") -> SolveResult:
        if not self.ok:
            raise SolverError(f"{what}: status {self.status} ({self.message})")
        return self


# --------------------------------------------------------------------------
# HiGHS plumbing


def _new_highs(time_limit: float | None = None) -> highspy.Highs:
    h = highspy.Highs()
    for key, val in _HIGHS_OPTIONS.items():
        h.setOptionValue(key, val)
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    return h


def _row_bounds(model: ModelInstance) -> tuple[np.ndarray, np.ndarray]:
    lower = np.where(model.sense == "<", -_INF, model.rhs)
    upper = np.where(model.sense == ">", _INF, model.rhs)
    return lower, upper


def _load(h: highspy.Highs, model: ModelInstance, c: np.ndarray | None = None, integer: bool = True) -> None:
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_rows
    lp.col_cost_ = np.asarray(model.c if c is None else c, dtype=float)
    lp.col_lower_ = model.lb
    lp.col_upper_ = model.ub
    lower, upper = _row_bounds(model)
    lp.row_lower_ = lower
    lp.row_upper_ = upper
    csc = model.A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
    lp.a_matrix_.index_ = csc.indices.astype(np.int32)
    lp.a_matrix_.value_ = csc.data.astype(float)
    lp.a_matrix_.num_col_ = model.n_vars
    lp.a_matrix_.num_row_ = model.n_rows
    if integer and model.n_binaries:
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous for b in model.binary
        ]
    h.passModel(lp)


def _pass_hessian(h: highspy.Highs, qdiag: np.ndarray) -> None:
    n = len(qdiag)
    nz = np.flatnonzero(qdiag)
    start = np.zeros(n + 1, dtype=np.int32)
    counts = np.zeros(n, dtype=np.int32)
    counts[nz] = 1
    start[1:] = np.cumsum(counts)
    hess = highspy.HighsHessian()
    hess.dim_ = n
    hess.format_ = highspy.HessianFormat.kTriangular
    hess.start_ = start
    hess.index_ = nz.astype(np.int32)
    # HiGHS minimises c'x + 0.5 x'Qx.
    hess.value_ = 2.0 * qdiag[nz]
    h.passHessian(hess)


_STATUS = {
    highspy.HighsModelStatus.kOptimal: OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: UNBOUNDED,
    highspy.HighsModelStatus.kUnboundedOrInfeasible: UNBOUNDED,
}


def _status(h: highspy.Highs) -> str:
    return _STATUS.get(h.getModelStatus(), LIMIT)


def _run(h: highspy.Highs) -> str:
    h.run()
    status = _status(h)
    if h.getModelStatus() == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # Presolve cannot tell the two apart; ask again without it.
        h.setOptionValue("presolve", "off")
        h.run()
        status = _status(h)
    for primal, mip in _RETRY_TOLERANCES:
        if h.getModelStatus() != highspy.HighsModelStatus.kSolveError:
            break
        # Big-M rows can leave ~1e-9 violations that fail the final check.
        h.setOptionValue("primal_feasibility_tolerance", primal)
        h.setOptionValue("mip_feasibility_tolerance", mip)
        h.run()
        status = _status(h)
    return status


def _lp_dual_check(
    model: ModelInstance, c: np.ndarray, x: np.ndarray, y: np.ndarray, d: np.ndarray
) -> tuple[float, float]:
    """Dual-feasibility residual and primal-minus-dual objective of ``min c'x``."""
    resid = np.abs(c - model.A.T @ y - d).max(initial=0.0)
    resid = max(resid, np.maximum(y[model.sense == "<"], 0).max(initial=0.0))
    resid = max(resid, np.maximum(-y[model.sense == ">"], 0).max(initial=0.0))
    bound_terms = 0.0
    for mask, bound in ((d > 0, model.lb), (d < 0, model.ub)):
        finite = np.isfinite(bound) & mask
        bound_terms += float(d[finite] @ bound[finite])
        resid = max(resid, np.abs(d[mask & ~np.isfinite(bound)]).max(initial=0.0))
    return float(resid), float(c @ x - (y @ model.rhs + bound_terms))


# --------------------------------------------------------------------------
# public solves


def _solve_lp(model: ModelInstance, c: np.ndarray, time_limit: float | None) -> tuple[str, str, highspy.Highs]:
    h = _new_highs(time_limit)
    _load(h, model, c=c, integer=False)
    status = _run(h)
    return status, h.modelStatusToString(h.getModelStatus()), h


# Regularisation / tolerance pairs for the active-set fallback.  It
# occasionally rejects a singular reduced Hessian without regularisation and
# flags 1e-9 residuals as errors under the tightest tolerance.
_QP_ATTEMPTS = ((1e-12, 1e-9), (1e-10, 1e-9), (1e-8, 1e-9), (1e-10, 1e-7), (1e-7, 1e-7))


def _solve_qp_highs(model: ModelInstance, time_limit: float | None) -> tuple[str, str, np.ndarray | None]:
    status, message = LIMIT, ""
    for reg, tol in _QP_ATTEMPTS:
        h = _new_highs(time_limit)
        h.setOptionValue("qp_regularization_value", reg)
        h.setOptionValue("primal_feasibility_tolerance", tol)
        h.setOptionValue("dual_feasibility_tolerance", tol)
        _load(h, model, integer=False)
        _pass_hessian(h, model.qdiag)
        status = _run(h)
        message = h.modelStatusToString(h.getModelStatus())
        if status == OPTIMAL:
            x = np.array(h.getSolution().col_value)
            if model.residual(x) <= FEAS_TOL:
                return status, message, x
        elif status in (INFEASIBLE, UNBOUNDED):
            return status, message, None
    return LIMIT if status == OPTIMAL else status, message, None


_CLARABEL_STATUS = {
    "Solved": OPTIMAL,
    "AlmostSolved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "DualInfeasible": UNBOUNDED,
    "AlmostDualInfeasible": UNBOUNDED,
}


def _solve_qp_clarabel(model: ModelInstance, time_limit: float | None) -> tuple[str, str, np.ndarray | None]:
    n = model.n_vars
    A = model.A.tocsr()
    eq, le, ge = model.sense == "=", model.sense == "<", model.sense == ">"
    eye = sparse.eye(n, format="csr")
    has_lb, has_ub = np.isfinite(model.lb), np.isfinite(model.ub)
    blocks = [A[eq], A[le], -A[ge], -eye[has_lb], eye[has_ub]]
    rhs = [model.rhs[eq], model.rhs[le], -model.rhs[ge], -model.lb[has_lb], model.ub[has_ub]]
    stacked = sparse.vstack(blocks).tocsc()
    n_eq = int(eq.sum())
    cones = [clarabel.ZeroConeT(n_eq), clarabel.NonnegativeConeT(stacked.shape[0] - n_eq)]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = 1e-12
    settings.tol_ktratio = 1e-10
    settings.max_iter = 500
    if time_limit is not None:
        settings.time_limit = float(time_limit)
    hessian = sparse.diags(2.0 * model.qdiag).tocsc()
    sol = clarabel.DefaultSolver(hessian, model.c, stacked, np.concatenate(rhs), cones, settings).solve()
    status = _CLARABEL_STATUS.get(str(sol.status), LIMIT)
    if status != OPTIMAL:
        return status, str(sol.status), None
    x = np.clip(np.array(sol.x), model.lb, model.ub)
    # interior-point iterates stop a hair inside active bounds
    for bound in (model.lb, model.ub):
        near = np.isfinite(bound) & (np.abs(x - bound) <= 1e-10)
        x[near] = bound[near]
    x += 0.0
    if model.residual(x) > FEAS_TOL:
        return LIMIT, "interior-point solution not feasible", None
    return status, str(sol.status), x


def _solve_qp_primal(model: ModelInstance, time_limit: float | None) -> tuple[str, str, np.ndarray | None]:
    """Interior-point primal (accurate on flat optima), active-set solver as fallback."""
    status, message, x = _solve_qp_clarabel(model, time_limit)
    if status == LIMIT:
        status, message, x = _solve_qp_highs(model, time_limit)
    return status, message, x


def _solve_continuous(model: ModelInstance, time_limit: float | None, method: str) -> SolveResult:
    """LP by simplex, or QP by an interior-point solve followed by dual recovery.

    QP duals are read from the LP whose costs are the objective gradient at
    the QP optimum: that LP has the same optimality conditions, so its
    simplex duals are exact multipliers of the QP.
    """
    if model.n_binaries:
        raise SolverError("continuous solve needs all binaries fixed")
    t0 = time.perf_counter()
    res = SolveResult(status=LIMIT, model=model, method=method)
    if model.is_quadratic:
        status, message, x = _solve_qp_primal(model, time_limit)
        if status != OPTIMAL:
            res.status, res.message, res.wall_time = status, message, time.perf_counter() - t0
            return res
        c = model.c + 2.0 * model.qdiag * x
    else:
        c = model.c
    status, message, h = _solve_lp(model, c, time_limit)
    res.status, res.message = status, message
    if status == OPTIMAL:
        sol = h.getSolution()
        if not model.is_quadratic:
            x = np.array(sol.col_value)
        res.x = x
        res.duals = np.array(sol.row_dual)
        res.objective = model.objective(x)
        res.primal_residual = model.residual(x)
        res.dual_residual, res.duality_gap = _lp_dual_check(model, c, x, res.duals, np.array(sol.col_dual))
    res.wall_time = time.perf_counter() - t0
    return res


def solve_lp_with_duals(model: ModelInstance, time_limit: float | None = None) -> SolveResult:
    """LP solve returning one dual per row (binaries must already be fixed)."""
    if model.is_quadratic:
        raise SolverError("model has quadratic terms; use solve_qp")
    return _solve_continuous(model, time_limit, "lp")


def solve_qp(model: ModelInstance, time_limit: float | None = None) -> SolveResult:
    """Convex QP solve with row duals (binaries must already be fixed)."""
    return _solve_continuous(model, time_limit, "qp")


def _polish(model: ModelInstance, x: np.ndarray, time_limit: float | None) -> SolveResult:
    """Re-solve the continuous part with binaries pinned at their values in ``x``."""
    fixed = model.fix_binaries(x)
    res = _solve_continuous(fixed, time_limit, "polish")
    res.model = model
    return res


def solve_milp(model: ModelInstance, time_limit: float | None = None) -> SolveResult:
    """Mixed-binary LP to proven optimality, continuous part polished by simplex."""
    if model.is_quadratic:
        raise SolverError("model has quadratic terms; use solve_miqp")
    if not model.n_binaries:
        return solve_lp_with_duals(model, time_limit)
    t0 = time.perf_counter()
    h = _new_highs(time_limit)
    _load(h, model)
    status = _run(h)
    if status != OPTIMAL:
        return SolveResult(
            status=status,
            model=model,
            wall_time=time.perf_counter() - t0,
            method="milp",
            message=h.modelStatusToString(h.getModelStatus()),
        )
    x = np.array(h.getSolution().col_value)
    res = _polish(model, x, time_limit)
    if not res.ok:
        res = SolveResult(status=OPTIMAL, model=model, x=x, objective=model.objective(x))
        res.primal_residual = model.residual(x)
    res.duals = None
    res.method = "milp"
    res.wall_time = time.perf_counter() - t0
    return res


# --------------------------------------------------------------------------
# convex MIQP


@dataclass(frozen=True)
class PwlApproximation:
    """Chords of ``coef * x**2`` over ``[lo, hi]``; the epigraph is ``eta >= slope*x + intercept``."""

    breakpoints: np.ndarray
    slopes: np.ndarray
    intercepts: np.ndarray
    bound: float

    @property
    def n_rows(self) -> int:
        return len(self.slopes)

    def __call__(self, x: float) -> float:
        if not self.n_rows:
            return 0.0
        return float(np.max(self.slopes * x + self.intercepts))


def pwl_approximate(coef: float, lo: float, hi: float, segments: int = DEFAULT_PWL_SEGMENTS) -> PwlApproximation:
    """Secant over-estimator of a convex square term with its worst-case gap."""
    if coef < 0:
        raise ValueError("coefficient must be non-negative")
    if not hi > lo:
        raise ValueError("need hi > lo")
    if segments < 1:
        raise ValueError("need at least one segment")
    if coef == 0:
        empty = np.zeros(0)
        return PwlApproximation(np.array([lo, hi], dtype=float), empty, empty, 0.0)
    xs = np.linspace(lo, hi, segments + 1)
    slopes = coef * (xs[:-1] + xs[1:])
    intercepts = -coef * xs[:-1] * xs[1:]
    delta = (hi - lo) / segments
    return PwlApproximation(xs, slopes, intercepts, coef * delta * delta / 4.0)


@functools.lru_cache(maxsize=1)
def native_miqp_available() -> bool:
    """Probe the backend with a one-binary convex MIQP."""
    h = _new_highs()
    h.addVars(2, np.array([0.0, 0.0]), np.array([10.0, 1.0]))
    h.changeColsIntegrality(1, np.array([1], dtype=np.int32), np.array([highspy.HighsVarType.kInteger]))
    h.changeColCost(1, 1.0)
    h.addRow(3.0, _INF, 2, np.array([0, 1], dtype=np.int32), np.array([1.0, 1.0]))
    _pass_hessian(h, np.array([1.0, 0.0]))
    try:
        h.run()
    except Exception:  # pragma: no cover - backend specific
        return False
    return h.getModelStatus() == highspy.HighsModelStatus.kOptimal


def _quad_domain(model: ModelInstance, j: int) -> tuple[float, float]:
    lo, hi = model.lb[j], model.ub[j]
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise SolverError(f"quadratic variable {model.var_names[j]!r} needs finite bounds for linearisation")
    if hi <= lo:
        hi = lo + 1.0
    return lo, hi


class _EpigraphMaster:
    """MILP with one epigraph column per quadratic variable, grown by cuts."""

    def __init__(self, model: ModelInstance, time_limit: float | None):
        self.model = model
        self.quad = np.flatnonzero(model.qdiag > 0)
        n = model.n_vars
        self.h = _new_highs(time_limit)
        c = model.c.copy()
        c[self.quad] = model.c[self.quad]
        _load(self.h, model, c=c)
        k = len(self.quad)
        self.eta = np.arange(n, n + k)
        self.h.addVars(k, np.full(k, -_INF), np.full(k, _INF))
        self.h.changeColsCost(k, self.eta.astype(np.int32), np.ones(k))

    def add_cut(self, pos: int, slope: float, intercept: float) -> None:
        # eta - slope * x >= intercept
        j = self.quad[pos]
        self.h.addRow(
            intercept, _INF, 2, np.array([j, self.eta[pos]], dtype=np.int32), np.array([-slope, 1.0])
        )

    def add_tangents(self, x: np.ndarray) -> None:
        for pos, j in enumerate(self.quad):
            coef, xh = self.model.qdiag[j], x[j]
            self.add_cut(pos, 2.0 * coef * xh, -coef * xh * xh)

    def solve(self) -> tuple[str, np.ndarray | None, float]:
        status = _run(self.h)
        if status != OPTIMAL:
            return status, None, math.nan
        sol = np.array(self.h.getSolution().col_value)
        lower = self.h.getInfo().mip_dual_bound if self.model.n_binaries else self.h.getInfo().objective_function_value
        return status, sol[: self.model.n_vars], float(lower) + self.model.constant


def _solve_oa(model: ModelInstance, segments: int, time_limit: float | None, max_iter: int = 200) -> SolveResult:
    """Outer approximation: tangent-cut MILP master, exact QP at each commitment."""
    t0 = time.perf_counter()
    master = _EpigraphMaster(model, time_limit)
    for pos, j in enumerate(master.quad):
        lo, hi = _quad_domain(model, j)
        for xh in np.linspace(lo, hi, segments + 1):
            coef = model.qdiag[j]
            master.add_cut(pos, 2.0 * coef * xh, -coef * xh * xh)

    best: SolveResult | None = None
    seen: set[bytes] = set()
    lower = -_INF
    it = 0
    for it in range(1, max_iter + 1):
        status, x, lower = master.solve()
        if status != OPTIMAL:
            if best is None:
                return SolveResult(status=status, model=model, wall_time=time.perf_counter() - t0, method="oa", iterations=it)
            break
        key = np.round(x[model.binary]).astype(np.int8).tobytes()
        if key in seen:
            break
        seen.add(key)
        cand = _polish(model, x, time_limit)
        if cand.ok and (best is None or cand.objective < best.objective):
            best = cand
        if best is not None and best.objective - lower <= 1e-9 * max(1.0, abs(best.objective)):
            break
        master.add_tangents(x)
        if cand.ok:
            master.add_tangents(cand.x)
    else:
        if best is not None:
            best.status = LIMIT
            best.message = "outer approximation iteration limit"

    if best is None:
        return SolveResult(status=LIMIT, model=model, wall_time=time.perf_counter() - t0, method="oa", iterations=it)
    best.approx_bound = max(0.0, best.objective - lower) if math.isfinite(lower) else 0.0
    best.iterations = it
    best.method = "oa"
    best.duals = None
    best.wall_time = time.perf_counter() - t0
    return best


def _solve_pwl(model: ModelInstance, segments: int, time_limit: float | None, max_bound: float | None) -> SolveResult:
    t0 = time.perf_counter()
    master = _EpigraphMaster(model, time_limit)
    total_bound = 0.0
    for pos, j in enumerate(master.quad):
        lo, hi = _quad_domain(model, j)
        approx = pwl_approximate(model.qdiag[j], lo, hi, segments)
        total_bound += approx.bound
        for slope, icpt in zip(approx.slopes, approx.intercepts):
            master.add_cut(pos, slope, icpt)
    if max_bound is not None and total_bound > max_bound:
        raise ApproximationError(f"PWL bound {total_bound:g} exceeds tolerance {max_bound:g}; raise segments")
    status, x, _ = master.solve()
    if status != OPTIMAL:
        return SolveResult(status=status, model=model, wall_time=time.perf_counter() - t0, method="pwl")
    res = _polish(model, x, time_limit)
    res.approx_bound = total_bound
    res.method = "pwl"
    res.duals = None
    res.wall_time = time.perf_counter() - t0
    return res


def solve_miqp(
    model: ModelInstance,
    method: str = "auto",
    segments: int = DEFAULT_PWL_SEGMENTS,
    max_bound: float | None = None,
    time_limit: float | None = None,
) -> SolveResult:
    """Convex MIQP with a diagonal quadratic objective.

    ``method`` is ``"native"``, ``"oa"`` (outer approximation, exact to
    1e-9 relative), ``"pwl"`` (one secant-PWL MILP; ``approx_bound`` carries
    the certified worst-case excess) or ``"auto"`` (native when the backend
    supports it, otherwise ``"oa"``).
    """
    if not model.is_quadratic:
        return solve_milp(model, time_limit)
    if not model.n_binaries:
        return solve_qp(model, time_limit)
    if method == "auto":
        method = "native" if native_miqp_available() else "oa"
    if method == "native":
        if not native_miqp_available():
            raise SolverError("backend does not solve MIQP natively")
        t0 = time.perf_counter()
        h = _new_highs(time_limit)
        _load(h, model)
        _pass_hessian(h, model.qdiag)
        status = _run(h)
        if status != OPTIMAL:
            return SolveResult(status=status, model=model, method="native", wall_time=time.perf_counter() - t0)
        res = _polish(model, np.array(h.getSolution().col_value), time_limit)
        res.method, res.duals, res.wall_time = "native", None, time.perf_counter() - t0
        return res
    if method == "oa":
        return _solve_oa(model, segments, time_limit)
    if method == "pwl":
        return _solve_pwl(model, segments, time_limit, max_bound)
    raise ValueError(f"unknown MIQP method {method!r}")


# --------------------------------------------------------------------------
# brute-force oracle


def enumerate_binaries(model: ModelInstance, budget: int = 4096) -> SolveResult:
    """Exact optimum by solving the continuous restriction for every binary assignment."""
    k = model.n_binaries
    if 2**k > budget:
        raise BudgetExceeded(f"{k} binaries need {2**k} solves, budget is {budget}")
    t0 = time.perf_counter()
    bidx = np.flatnonzero(model.binary)
    best: SolveResult | None = None
    count = 0
    x = np.zeros(model.n_vars)
    for bits in itertools.product((0.0, 1.0), repeat=k):
        x[bidx] = bits
        if np.any(x[bidx] < model.lb[bidx]) or np.any(x[bidx] > model.ub[bidx]):
            continue
        res = _solve_continuous(model.fix_binaries(x), None, "enumerate")
        count += 1
        if res.ok and (best is None or res.objective < best.objective):
            best = res
    elapsed = time.perf_counter() - t0
    if best is None:
        return SolveResult(status=INFEASIBLE, model=model, wall_time=elapsed, iterations=count, method="enumerate")
    best.model = model
    best.duals = None
    best.iterations = count
    best.wall_time = elapsed
    best.method = "enumerate"
    return best


# --------------------------------------------------------------------------
# LP-format dump


def _fmt(v: float) -> str:
    return repr(float(v))


def _terms(pairs: list[tuple[float, str]]) -> list[str]:
    out = []
    for k, (coef, name) in enumerate(pairs):
        sign = "-" if coef < 0 else "+"
        mag = _fmt(abs(coef))
        if k == 0:
            out.append(f"{'-' if coef < 0 else ''}{mag} {name}")
        else:
            out.append(f"{sign} {mag} {name}")
    return out


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for term in terms:
        if len(cur) + len(term) > 240:
            lines.append(cur)
            cur = "   "
        cur += " " + term
    if tail:
        cur += " " + tail
    lines.append(cur)
    return lines


def model_to_lp(model: ModelInstance) -> str:
    """Serialise in CPLEX LP text format (the objective constant goes in a comment)."""
    names = model.var_names
    out = [f"\\ {model.name}", f"\\ objective constant {_fmt(model.constant)}", "Minimize"]
    obj = [(float(c), names[j]) for j, c in enumerate(model.c) if c != 0]
    terms = _terms(obj)
    quad = [(2.0 * float(q), names[j]) for j, q in enumerate(model.qdiag) if q > 0]
    if quad:
        qterms = [f"{_fmt(v)} {n} ^2" for v, n in quad]
        lead = "+ [" if terms else "["
        terms = terms + [lead + " " + " + ".join(qterms) + " ] / 2"]
    if not terms:
        terms = [f"0 {names[0]}"] if names else []
    out += _wrap(" obj:", terms)
    out.append("Subject To")
    A = model.A.tocsr()
    symbol = {"<": "<=", ">": ">=", "=": "="}
    for i, rname in enumerate(model.row_names):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        pairs = [(float(v), names[j]) for j, v in zip(A.indices[lo:hi], A.data[lo:hi])]
        terms = _terms(pairs) if pairs else [f"0 {names[0]}"]
        out += _wrap(f" {rname}:", terms, f"{symbol[model.sense[i]]} {_fmt(model.rhs[i])}")
    out.append("Bounds")
    for j, n in enumerate(names):
        lo, hi = model.lb[j], model.ub[j]
        if lo == -_INF and hi == _INF:
            out.append(f" {n} free")
        elif lo == hi:
            out.append(f" {n} = {_fmt(lo)}")
        else:
            lo_s = "-inf" if lo == -_INF else _fmt(lo)
            hi_s = "+inf" if hi == _INF else _fmt(hi)
            out.append(f" {lo_s} <= {n} <= {hi_s}")
    bins = [n for j, n in enumerate(names) if model.binary[j]]
    if bins:
        out.append("Binaries")
        out += [f" {n}" for n in bins]
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(model: ModelInstance, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_lp(model))
    return path
