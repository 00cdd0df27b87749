"""Viable and robust sets in state-action space for spring-mass runners."""

__version__ = "0.1.0"

from .dynamics import (  # noqa: F401
    ContinuousState,
    FailureReason,
    IntegratorConfig,
    ModelKind,
    ModelParams,
    OutcomeKind,
    Phase,
    StepOutcome,
    simulate_step,
)
