"""Second-order barrier constraints on the ego acceleration.

The barrier between the ego and one obstacle is the squared center distance
minus the squared safe distance::

    h = (x - x_o)^2 + (y - y_o)^2 - d_safe^2

With linear class-K functions of slopes ``beta1`` and ``beta2`` the
second-order condition ``h'' + (beta1 + beta2) h' + beta1 beta2 h >= 0`` is
affine in the control and is returned as a half-plane ``a . u <= b``.

Two drift terms are supported for the moving-obstacle constraint:

``exact_relative``
    ``2 |v - v_obs|^2``, the true second derivative of ``h`` when the
    obstacle does not accelerate.
``paper_literal``
    ``2 |v|^2 + 2 |v_obs|^2``, which drops the cross term ``-4 v . v_obs``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from dhocbf.dynamics import ControlInput, EgoState, ObstacleState
from dhocbf.errors import ValidationError

VARIANTS = ("exact_relative", "paper_literal")
MODES = ("hocbf", "dhocbf")
ADMISSIBLE_TOL = 1e-9


@dataclass(frozen=True)
class BarrierParams:
    beta1: float = 1.0
    beta2: float = 1.0
    variant: str = "exact_relative"
    beta1_dot: float = 0.0

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValidationError("beta1 and beta2 must be positive")
        if self.beta1_dot != 0.0:
            raise ValidationError("beta1_dot is fixed at 0")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown barrier variant {self.variant!r}")


@dataclass(frozen=True)
class BarrierEval:
    h: float
    lf_h: float
    lfobs_h: float
    lglf_h: Tuple[float, float]
    second_order_drift: float
    # 2|v|^2, used by the static constraint
    static_drift: float


@dataclass(frozen=True)
class LinearConstraintRow:
    """Half-plane ``a[0]*ux + a[1]*uy <= b``."""

    a: Tuple[float, float]
    b: float
    source: str = ""

    def residual(self, u) -> float:
        ux, uy = u
        return self.a[0] * ux + self.a[1] * uy - self.b


def barrier_value(ego: EgoState, obs: ObstacleState, d_safe: float) -> float:
    if d_safe < 0:
        raise ValidationError("d_safe must be non-negative")
    dx = ego.x - obs.position[0]
    dy = ego.y - obs.position[1]
    return dx * dx + dy * dy - d_safe * d_safe


def lie_derivatives(ego: EgoState, obs: ObstacleState, d_safe: float, p: BarrierParams = BarrierParams()) -> BarrierEval:
    """Lie derivatives of the barrier, with ``d_safe`` held constant."""
    h = barrier_value(ego, obs, d_safe)
    dx = ego.x - obs.position[0]
    dy = ego.y - obs.position[1]
    ovx, ovy = obs.velocity
    lf_h = 2 * dx * ego.vx + 2 * dy * ego.vy
    lfobs_h = -2 * dx * ovx - 2 * dy * ovy
    static_drift = 2 * (ego.vx * ego.vx + ego.vy * ego.vy)
    if p.variant == "exact_relative":
        rvx = ego.vx - ovx
        rvy = ego.vy - ovy
        drift = 2 * (rvx * rvx + rvy * rvy)
    else:
        drift = static_drift + 2 * (ovx * ovx + ovy * ovy)
    return BarrierEval(h, lf_h, lfobs_h, (2 * dx, 2 * dy), drift, static_drift)


def dhocbf_row(ev: BarrierEval, p: BarrierParams, source: str = "dhocbf") -> LinearConstraintRow:
    b = (
        ev.second_order_drift
        + (p.beta1 + p.beta2) * (ev.lf_h + ev.lfobs_h)
        + (p.beta1_dot + p.beta1 * p.beta2) * ev.h
    )
    return LinearConstraintRow((-ev.lglf_h[0], -ev.lglf_h[1]), b, source)


def hocbf_row(ev: BarrierEval, p: BarrierParams, source: str = "hocbf") -> LinearConstraintRow:
    """Constraint that treats the obstacle as momentarily static."""
    b = ev.static_drift + (p.beta1 + p.beta2) * ev.lf_h + (p.beta1_dot + p.beta1 * p.beta2) * ev.h
    return LinearConstraintRow((-ev.lglf_h[0], -ev.lglf_h[1]), b, source)


def constraint_row(ev: BarrierEval, p: BarrierParams, mode: str, source: str = "") -> LinearConstraintRow:
    if mode == "dhocbf":
        return dhocbf_row(ev, p, source or "dhocbf")
    if mode == "hocbf":
        return hocbf_row(ev, p, source or "hocbf")
    raise ValidationError(f"unknown barrier mode {mode!r}")


def cbf_admissible(ev: BarrierEval, u: ControlInput, p: BarrierParams, mode: str = "dhocbf") -> bool:
    return constraint_row(ev, p, mode).residual(u) <= ADMISSIBLE_TOL
