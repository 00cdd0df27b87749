"""Viable and robust sets over a transition grid.

The viable set Q_V keeps the state-action pairs from which failure can be
avoided forever; the robust set Q_R additionally survives bounded action
noise.  Both are computed by synchronous trimming sweeps against the
frozen previous iterate until nothing changes, so the results are
deterministic, order-independent and genuine fixed points of their sweep
operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import io as _io
from .poincare import (
    GridSpec,
    TransitionGrid,
    _spec_from_meta,
    _spec_meta,
    is_next,
)

MASK_FORMAT = "viarun-mask"


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric bounded action noise, half-width ``eta`` in radians."""

    eta: float

    def __post_init__(self):
        if self.eta < 0.0:
            raise ValueError("noise half-width must be non-negative")

    def cells(self, spec: GridSpec) -> int:
        """Half-width in whole action cells; the ceiling over-approximates
        the noise so the resulting sets are conservative."""
        if self.eta == 0.0:
            return 0
        return int(math.ceil(self.eta / spec.dalpha - 1e-12))


@dataclass(eq=False)
class SetMask:
    """Boolean membership over state-action cells (Q_N, Q_V or Q_R)."""

    spec: GridSpec
    member: np.ndarray  # (n_s, n_alpha) bool
    kind: str  # "QN" | "QV" | "QR"
    eta: float = 0.0


@dataclass(eq=False)
class StateMask:
    """Boolean membership over state cells (projection of a SetMask)."""

    spec: GridSpec
    member: np.ndarray  # (n_s,) bool
    kind: str
    eta: float = 0.0


def non_failing_set(grid: TransitionGrid) -> SetMask:
    """Q_N: the pairs whose one-step outcome is a next apex state."""
    return SetMask(spec=grid.spec, member=is_next(grid.values), kind="QN")


def project(mask: SetMask) -> StateMask:
    """Orthogonal projection onto the state axis: a state belongs iff any
    of its actions does."""
    return StateMask(spec=mask.spec, member=mask.member.any(axis=1),
                     kind="S" + mask.kind[1:], eta=mask.eta)


def measure(mask: SetMask | StateMask) -> float:
    """Normalized hypervolume: member cells over total cells, in [0, 1]."""
    return float(np.count_nonzero(mask.member)) / mask.member.size


def _next_cells(grid: TransitionGrid) -> np.ndarray:
    """Containing state cell of each pair's next state; -1 where the
    outcome is a failure, infeasible, or lands outside the state bounds."""
    idx = np.full(grid.values.shape, -1, dtype=np.int64)
    nxt = is_next(grid.values)
    idx[nxt] = grid.spec.s_cell(grid.values[nxt])
    return idx


def viable_sets(grid: TransitionGrid) -> tuple[SetMask, StateMask]:
    """Viable set Q_V and viability kernel S_V by iterative trimming.

    Starting from Q_N, every sweep removes the pairs whose next state lies
    outside the current projection; the loop stops once a sweep removes
    nothing.
    """
    member = is_next(grid.values)
    next_idx = _next_cells(grid)
    has_next = next_idx >= 0
    gather = np.where(has_next, next_idx, 0)
    while True:
        s_v = member.any(axis=1)
        new = member & has_next & s_v[gather]
        if np.array_equal(new, member):
            break
        member = new
    qv = SetMask(spec=grid.spec, member=member, kind="QV")
    return qv, project(qv)


def robust_sets(grid: TransitionGrid, q_v: SetMask,
                noise: NoiseModel) -> tuple[SetMask, StateMask]:
    """Robust set Q_R and robust kernel S_R under bounded action noise.

    A pair is robust iff every action within ``noise`` of it (rounded up
    to whole cells) lands on a member of the viable set, i.e. every noise
    realization of the commanded action still transitions back into the
    viability kernel.  Noisy actions leaving the action bounds or hitting
    failing/infeasible cells remove the pair: off-grid cells are never
    members.  The trimming test depends only on the fixed viable set, so
    one sweep reaches the fixed point and re-sweeping removes nothing.
    """
    if q_v.spec != grid.spec:
        raise ValueError("Q_V was computed for a different grid spec")
    m = noise.cells(grid.spec)
    member = q_v.member
    if m > 0:
        n_alpha = grid.spec.n_alpha
        col = np.arange(n_alpha)
        in_bounds = (col - m >= 0) & (col + m <= n_alpha - 1)
        # windowed all-viable test via cumulative counts of non-members
        bad = (~member).astype(np.int64)
        csum = np.zeros((bad.shape[0], n_alpha + 1), dtype=np.int64)
        np.cumsum(bad, axis=1, out=csum[:, 1:])
        lo = np.maximum(col - m, 0)
        hi = np.minimum(col + m, n_alpha - 1)
        bad_in_window = csum[:, hi + 1] - csum[:, lo]
        member = member & in_bounds & (bad_in_window == 0)
    qr = SetMask(spec=grid.spec, member=member.copy(), kind="QR", eta=noise.eta)
    return qr, project(qr)


def save_mask(mask: SetMask | StateMask, path) -> None:
    meta = {
        "kind": mask.kind,
        "eta": mask.eta,
        "spec": _spec_meta(mask.spec),
        "axes": "state" if mask.member.ndim == 1 else "state-action",
    }
    _io.write_matrix(path, MASK_FORMAT, meta, mask.member.astype(np.int8),
                     value_format="%d")


def load_mask(path) -> SetMask | StateMask:
    meta, values = _io.read_matrix(path, MASK_FORMAT)
    spec = _spec_from_meta(meta["spec"])
    member = values.astype(bool)
    if meta["axes"] == "state":
        return StateMask(spec=spec, member=member[0], kind=meta["kind"],
                         eta=meta["eta"])
    return SetMask(spec=spec, member=member, kind=meta["kind"], eta=meta["eta"])
