"""Price-responsive consumers with a non-responsive floor.

Each bus/period carries a linear marginal-value curve ``a - b*q``.  Consumers
pay ``p + phi*pR`` per MWh (energy plus their share of the reserve
requirement) and cannot go below a floor quantity.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping

if TYPE_CHECKING:
    from .scenario import DemandPeriod


class DegenerateCurveError(ValueError):
    """Two calibration points do not define a downward-sloping line."""


class BigMError(ValueError):
    """A big-M constant is below the bound certified by the price box."""


@dataclass(frozen=True)
class ConsumerResponse:
    q: float
    beta: float
    u: int


@dataclass(frozen=True)
class LinearRow:
    """One linear constraint over named variables: ``sum(coefs * x) <sense> rhs``."""

    name: str
    coefs: Mapping[str, float]
    sense: str
    rhs: float
    tag: str

    def slack(self, values: Mapping[str, float]) -> float:
        """Signed satisfaction margin; negative means violated."""
        lhs = sum(c * values[k] for k, c in self.coefs.items())
        if self.sense == "<":
            return self.rhs - lhs
        if self.sense == ">":
            return lhs - self.rhs
        return -abs(lhs - self.rhs)


def calibrate(q_min: float, q_bar: float, p_high: float, p_low: float) -> tuple[float, float]:
    """Fit ``a - b*q`` through ``(q_min, p_high)`` and ``(q_bar, p_low)``."""
    if not q_bar > q_min:
        raise DegenerateCurveError(f"qbar ({q_bar}) must exceed qmin ({q_min})")
    if not p_high > p_low:
        raise DegenerateCurveError(f"ph ({p_high}) must exceed pl ({p_low})")
    b = (p_high - p_low) / (q_bar - q_min)
    a = p_high + b * q_min
    return a, b


def marginal_value(curve: DemandPeriod, q: float) -> float:
    return curve.a - curve.b * q


def benefit(curve: DemandPeriod, q: float) -> float:
    """Area under the marginal-value curve from 0 to ``q``."""
    return curve.a * q - 0.5 * curve.b * q * q


def consumer_surplus(curve: DemandPeriod, q: float, p: float, p_res: float, phi: float) -> float:
    return benefit(curve, q) - (p + phi * p_res) * q


def optimal_demand(curve: DemandPeriod, p: float, p_res: float, phi: float, floor: float) -> ConsumerResponse:
    """Closed-form surplus-maximising purchase at the given prices.

    ``beta`` is the multiplier on the floor; ``u`` is 1 only when the floor
    binds with a strictly positive multiplier (a touching-but-slack floor
    keeps ``u = 0``).
    """
    price = p + phi * p_res
    interior = (curve.a - price) / curve.b
    q = max(floor, interior)
    beta = max(0.0, price - curve.a + curve.b * floor)
    u = 1 if (q == floor and beta > 0.0) else 0
    return ConsumerResponse(q=q, beta=beta, u=u)


def required_big_m(curve: DemandPeriod, floor: float, phi: float, price_cap: float) -> tuple[float, float, float]:
    """Smallest certified big-M pair for a price box ``|p|, |pR| <= price_cap``.

    Returns ``(m_price, m_quantity, q_upper)`` where ``q_upper`` bounds any
    quantity the stationarity branch can produce.
    """
    q_upper = (curve.a + price_cap * (1.0 + phi)) / curve.b
    m_quantity = max(1.0, q_upper - floor)
    m_price = price_cap * (1.0 + phi) + curve.b * q_upper
    return m_price, m_quantity, q_upper


def fam_constraints(
    curve: DemandPeriod,
    floor: float,
    big_m_price: float,
    big_m_quantity: float,
    *,
    phi: float,
    q: str,
    p: str,
    p_res: str,
    u: str,
    price_cap: float | None = None,
) -> list[LinearRow]:
    """Big-M encoding of the consumer's optimality conditions at one bus/period.

    Variable names are supplied by the caller so the rows can be dropped
    straight into an assembled model.  When ``price_cap`` is given the Ms are
    checked against :func:`required_big_m`.
    """
    if big_m_price <= 0 or big_m_quantity <= 0:
        raise BigMError("big-M values must be positive")
    if price_cap is not None:
        need_price, need_qty, _ = required_big_m(curve, floor, phi, price_cap)
        if big_m_price < need_price or big_m_quantity < need_qty:
            raise BigMError(
                f"big-M ({big_m_price:g}, {big_m_quantity:g}) below certified bound "
                f"({need_price:g}, {need_qty:g}) for price cap {price_cap:g}"
            )
    stationarity = {p: 1.0, p_res: phi, q: curve.b}
    return [
        LinearRow(f"floor.{q}", {q: 1.0}, ">", floor, "demand_floor"),
        LinearRow(f"stat_lo.{q}", stationarity, ">", curve.a, "consumer_stationarity_lower"),
        LinearRow(f"stat_hi.{q}", {**stationarity, u: -big_m_price}, "<", curve.a, "consumer_stationarity_upper"),
        LinearRow(f"floor_hi.{q}", {q: 1.0, u: big_m_quantity}, "<", floor + big_m_quantity, "demand_floor_indicator"),
    ]
