"""Hybrid dynamics of planar spring-mass hoppers.

Two leg models are supported: a linear prismatic spring (SLIP) and a
two-segment leg with a linear torsional knee spring (NSLIP).  The public
entry point is :func:`simulate_step`, which integrates one apex-to-apex
hop with event-localized touchdown, liftoff and apex detection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from . import _integrator as _ker


class ModelKind(enum.Enum):
    SLIP = "slip"
    NSLIP = "nslip"


class Phase(enum.Enum):
    FLIGHT = "flight"
    STANCE = "stance"


class FailureReason(enum.Enum):
    BODY_GROUND = "body_ground"
    DIRECTION_REVERSAL = "direction_reversal"
    TIMEOUT = "timeout"


class OutcomeKind(enum.Enum):
    APEX = "apex"
    FAILURE = "failure"
    INFEASIBLE = "infeasible"


class IntegrationError(RuntimeError):
    """Step size underflowed before an event could be localized."""


class LegGeometryError(ValueError):
    """Leg length outside the domain of the requested spring law."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of one leg model.

    ``k`` is only meaningful for SLIP; ``beta0`` and ``c`` only for NSLIP.
    Unused coefficients may be left as ``None``.
    """

    kind: ModelKind
    m: float = 80.0
    g: float = 9.81
    l0: float = 1.0
    k: float | None = None
    beta0: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.m <= 0 or self.g <= 0 or self.l0 <= 0:
            raise ValueError("m, g and l0 must be positive")
        if self.kind is ModelKind.SLIP:
            if self.k is None or self.k <= 0:
                raise ValueError("SLIP requires a positive spring coefficient k")
        else:
            if self.c is None or self.c <= 0:
                raise ValueError("NSLIP requires a positive torsional coefficient c")
            if self.beta0 is None or not 0.0 < self.beta0 < math.pi:
                raise ValueError("NSLIP requires a resting knee angle in (0, pi)")

    @classmethod
    def slip(cls, m: float = 80.0, g: float = 9.81, l0: float = 1.0,
             k: float = 8200.0) -> "ModelParams":
        return cls(kind=ModelKind.SLIP, m=m, g=g, l0=l0, k=k)

    @classmethod
    def nslip(cls, m: float = 80.0, g: float = 9.81, l0: float = 1.0,
              beta0: float = math.radians(170.0), c: float = 704.0) -> "ModelParams":
        return cls(kind=ModelKind.NSLIP, m=m, g=g, l0=l0, beta0=beta0, c=c)

    @property
    def l_rest(self) -> float:
        """Leg length at which the spring is unloaded.

        Touchdown and liftoff are defined at this length: the prismatic
        resting length for SLIP, and the segmented-leg length at the
        resting knee angle for NSLIP (which avoids the straight-knee
        singularity of the torsional force law).
        """
        if self.kind is ModelKind.SLIP:
            return self.l0
        return self.l0 * math.sin(0.5 * self.beta0)

    def _kernel_args(self) -> tuple:
        kind = _ker.KIND_SLIP if self.kind is ModelKind.SLIP else _ker.KIND_NSLIP
        return (kind, self.m, self.g, self.l0,
                self.k if self.k is not None else 0.0,
                self.beta0 if self.beta0 is not None else 0.0,
                self.c if self.c is not None else 0.0)


@dataclass(frozen=True)
class ContinuousState:
    """Planar body state; stance coordinates are relative to the foot."""

    x: float
    y: float
    vx: float
    vy: float
    phase: Phase = Phase.FLIGHT
    t: float = 0.0


@dataclass(frozen=True)
class StepOutcome:
    kind: OutcomeKind
    state: ContinuousState | None = None
    reason: FailureReason | None = None

    @property
    def is_apex(self) -> bool:
        return self.kind is OutcomeKind.APEX

    @property
    def is_failure(self) -> bool:
        return self.kind is OutcomeKind.FAILURE

    @property
    def is_infeasible(self) -> bool:
        return self.kind is OutcomeKind.INFEASIBLE


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    event_tol: float = 1e-10
    max_step_time: float = 5.0

    def __post_init__(self):
        if min(self.rel_tol, self.abs_tol, self.event_tol, self.max_step_time) <= 0:
            raise ValueError("integrator tolerances must be positive")


DEFAULT_INTEGRATOR = IntegratorConfig()

_SIN_BETA_EPS = 1e-9


def flight_accel(state: ContinuousState, p: ModelParams) -> tuple[float, float]:
    """Ballistic acceleration; independent of the state itself."""
    return 0.0, -p.g


def leg_length(state: ContinuousState) -> float:
    return math.hypot(state.x, state.y)


def leg_force_slip(l: float, p: ModelParams) -> float:
    """Axial force of the prismatic spring, positive in compression."""
    return p.k * (p.l0 - l)


def knee_angle(l: float, p: ModelParams) -> float:
    """Knee angle of the two-segment leg at length ``l``."""
    arg = 1.0 - 2.0 * l * l / (p.l0 * p.l0)
    if arg < -1.0:
        raise LegGeometryError(f"leg length {l} exceeds the segment span {p.l0}")
    if arg > 1.0:
        arg = 1.0
    return math.acos(arg)


def leg_force_nslip(l: float, p: ModelParams, sin_eps: float = _SIN_BETA_EPS) -> float:
    """Axial force produced by the torsional knee spring.

    Diverges as the knee straightens (l -> l0); a ``LegGeometryError`` is
    raised once sin(beta) drops below ``sin_eps``.
    """
    beta = knee_angle(l, p)
    sb = math.sin(beta)
    if sb < sin_eps:
        raise LegGeometryError(f"torsional force law singular at leg length {l}")
    return 4.0 * l * p.c * (p.beta0 - beta) / (p.l0 * p.l0 * sb)


def leg_force(l: float, p: ModelParams) -> float:
    if p.kind is ModelKind.SLIP:
        return leg_force_slip(l, p)
    return leg_force_nslip(l, p)


def stance_accel(state: ContinuousState, p: ModelParams) -> tuple[float, float]:
    """Spring force along the foot-to-body axis plus gravity."""
    l = leg_length(state)
    if l <= 0.0:
        raise LegGeometryError("leg length is zero")
    f = leg_force(l, p)
    return f / p.m * state.x / l, f / p.m * state.y / l - p.g


def simulate_step(apex: ContinuousState, alpha: float, p: ModelParams,
                  cfg: IntegratorConfig = DEFAULT_INTEGRATOR) -> StepOutcome:
    """Integrate one hop from a flight apex to the next apex or a failure.

    ``alpha`` is the landing angle of attack measured from vertical,
    positive when the foot lands ahead of the body.  The outcome is
    ``Infeasible`` when the foot would start underground at the initial
    apex, an ``Apex`` state in world coordinates on success, and a
    ``Failure`` with the first triggered reason otherwise.
    """
    if apex.phase is not Phase.FLIGHT:
        raise ValueError("apex state must be in flight phase")
    if abs(apex.vy) > 1e-9:
        raise ValueError("apex state must have zero vertical velocity")
    if apex.vx < 0:
        raise ValueError("apex state must have non-negative forward velocity")
    code, x, y, vx, vy, t = _ker.sim_step_kernel(
        apex.x, apex.y, apex.vx, alpha, *p._kernel_args(),
        cfg.rel_tol, cfg.abs_tol, cfg.event_tol, cfg.max_step_time)
    return _wrap_outcome(code, x, y, vx, vy, apex.t + t)


def _wrap_outcome(code: int, x: float, y: float, vx: float, vy: float,
                  t: float) -> StepOutcome:
    if code == _ker.OUT_DIVERGED:
        raise IntegrationError("integrator step size underflow")
    if code == _ker.OUT_INFEASIBLE:
        return StepOutcome(OutcomeKind.INFEASIBLE)
    state = ContinuousState(x=x, y=y, vx=vx, vy=vy, phase=Phase.FLIGHT, t=t)
    if code == _ker.OUT_APEX:
        return StepOutcome(OutcomeKind.APEX, state=state)
    reason = {
        _ker.OUT_FAIL_GROUND: FailureReason.BODY_GROUND,
        _ker.OUT_FAIL_REVERSAL: FailureReason.DIRECTION_REVERSAL,
        _ker.OUT_FAIL_TIMEOUT: FailureReason.TIMEOUT,
    }[code]
    return StepOutcome(OutcomeKind.FAILURE, state=state, reason=reason)
