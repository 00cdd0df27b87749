"""Apex Poincaré section: state normalization and transition-map grids.

At a flight apex the state reduces to the normalized height
``s = g*y / (g*y + vx**2/2)``, the fraction of total energy stored as
potential energy.  For a fixed energy level the apex-to-apex return map
``s' = P(s, alpha)`` is tabulated on a dense cell-centered grid over
state-action space; failures and infeasible cells carry sentinel codes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _integrator as _ker
from . import io as _io
from .dynamics import DEFAULT_INTEGRATOR, IntegratorConfig, ModelKind, ModelParams

logger = logging.getLogger(__name__)

GRID_FORMAT = "viarun-grid"

# cell encoding in TransitionGrid.values and in grid files
FAILURE_CODE = -1.0
INFEASIBLE_CODE = -2.0

WORKERS_ENV = "VIARUN_WORKERS"


@dataclass(frozen=True)
class ApexState:
    """Normalized apex height plus the total-energy context."""

    s: float
    E: float

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise ValueError(f"normalized apex height {self.s} outside [0, 1]")
        if self.E <= 0.0:
            raise ValueError("total energy must be positive")


def normalize_apex(y: float, vx: float, p: ModelParams) -> ApexState:
    """Reduce an apex (height, forward velocity) to the normalized state."""
    if y == 0.0 and vx == 0.0:
        raise ValueError("degenerate apex: no potential or kinetic energy")
    e_pot = p.g * y
    e_kin = 0.5 * vx * vx
    return ApexState(s=e_pot / (e_pot + e_kin), E=p.m * (e_pot + e_kin))


def denormalize_apex(a: ApexState, p: ModelParams) -> tuple[float, float]:
    """Recover (height, forward velocity) from the normalized state."""
    y = a.s * a.E / (p.m * p.g)
    vx = math.sqrt(2.0 * a.E * (1.0 - a.s) / p.m)
    return y, vx


@dataclass(frozen=True)
class GridSpec:
    """Cell-centered discretization of (s, alpha) space at one energy.

    Cell (i, j) represents the state-action pair at the cell center
    ``(s_lo + (i + 1/2) ds, alpha_lo + (j + 1/2) dalpha)``.
    """

    n_s: int
    n_alpha: int
    energy: float
    s_bounds: tuple[float, float] = (0.0, 1.0)
    alpha_bounds: tuple[float, float] = (0.0, math.pi / 2.0)

    def __post_init__(self):
        if self.n_s < 2 or self.n_alpha < 2:
            raise ValueError("grid needs at least 2 cells per axis")
        if self.energy <= 0.0:
            raise ValueError("energy level must be positive")
        s_lo, s_hi = self.s_bounds
        if not (0.0 <= s_lo < s_hi <= 1.0):
            raise ValueError("s bounds must satisfy 0 <= lo < hi <= 1")
        a_lo, a_hi = self.alpha_bounds
        if not a_lo < a_hi:
            raise ValueError("alpha bounds must be increasing")

    @property
    def ds(self) -> float:
        return (self.s_bounds[1] - self.s_bounds[0]) / self.n_s

    @property
    def dalpha(self) -> float:
        return (self.alpha_bounds[1] - self.alpha_bounds[0]) / self.n_alpha

    def s_centers(self) -> np.ndarray:
        return self.s_bounds[0] + (np.arange(self.n_s) + 0.5) * self.ds

    def alpha_centers(self) -> np.ndarray:
        return self.alpha_bounds[0] + (np.arange(self.n_alpha) + 0.5) * self.dalpha

    def s_cell(self, s) -> np.ndarray:
        """Containing cell index of s, vectorized; -1 when outside bounds.

        The upper bound itself belongs to the top cell, so the maximum
        normalized height s = 1 maps onto a valid cell.
        """
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_bounds
        idx = np.floor((s - lo) / self.ds).astype(np.int64)
        idx = np.where(s == hi, self.n_s - 1, idx)
        idx = np.where((s < lo) | (s > hi), -1, idx)
        return np.minimum(idx, self.n_s - 1)

    def alpha_cell(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        lo, hi = self.alpha_bounds
        idx = np.floor((alpha - lo) / self.dalpha).astype(np.int64)
        idx = np.where(alpha == hi, self.n_alpha - 1, idx)
        idx = np.where((alpha < lo) | (alpha > hi), -1, idx)
        return np.minimum(idx, self.n_alpha - 1)


@dataclass(eq=False)
class TransitionGrid:
    """Dense lookup table of the apex return map over (s, alpha) cells."""

    spec: GridSpec
    params: ModelParams
    integrator: IntegratorConfig
    values: np.ndarray  # (n_s, n_alpha) float; >= 0 next state, else code


def is_next(values) -> np.ndarray:
    return np.asarray(values) >= 0.0


def is_failure(values) -> np.ndarray:
    return np.asarray(values) == FAILURE_CODE


def is_infeasible(values) -> np.ndarray:
    return np.asarray(values) == INFEASIBLE_CODE


def transition(s: float, alpha: float, E: float, p: ModelParams,
               cfg: IntegratorConfig = DEFAULT_INTEGRATOR) -> float:
    """Apex return map at one state-action pair.

    Returns the next normalized height in [0, 1], ``FAILURE_CODE`` or
    ``INFEASIBLE_CODE``.
    """
    y = s * E / (p.m * p.g)
    vx = math.sqrt(2.0 * E * max(1.0 - s, 0.0) / p.m)
    code, _, y1, vx1, _, _ = _ker.sim_step_kernel(
        0.0, y, vx, alpha, *p._kernel_args(),
        cfg.rel_tol, cfg.abs_tol, cfg.event_tol, cfg.max_step_time)
    if code == _ker.OUT_APEX:
        e_pot = p.g * y1
        return e_pot / (e_pot + 0.5 * vx1 * vx1)
    if code == _ker.OUT_INFEASIBLE:
        return INFEASIBLE_CODE
    if code == _ker.OUT_DIVERGED:
        raise ArithmeticError("integrator diverged")
    return FAILURE_CODE


# worker-process state for build_grid
_POOL_JOB: tuple[GridSpec, ModelParams, IntegratorConfig] | None = None


def _pool_init(spec, params, cfg):
    global _POOL_JOB
    _POOL_JOB = (spec, params, cfg)


def _pool_rows(rows: tuple[int, int]) -> tuple[int, np.ndarray, int]:
    spec, params, cfg = _POOL_JOB
    lo, hi = rows
    block, diverged = _compute_rows(spec, params, cfg, lo, hi)
    return lo, block, diverged


def _compute_rows(spec: GridSpec, params: ModelParams, cfg: IntegratorConfig,
                  row_lo: int, row_hi: int) -> tuple[np.ndarray, int]:
    """Transition values for s-rows [row_lo, row_hi); returns the block and
    the number of diverged cells (coded as failures)."""
    kind, m, g, l0, k, beta0, c = params._kernel_args()
    alphas = spec.alpha_centers()
    s_centers = spec.s_centers()
    block = np.empty((row_hi - row_lo, spec.n_alpha))
    diverged = 0
    E = spec.energy
    for i in range(row_lo, row_hi):
        s = s_centers[i]
        y = s * E / (m * g)
        vx = math.sqrt(2.0 * E * max(1.0 - s, 0.0) / m)
        for j in range(spec.n_alpha):
            code, _, y1, vx1, _, _ = _ker.sim_step_kernel(
                0.0, y, vx, alphas[j], kind, m, g, l0, k, beta0, c,
                cfg.rel_tol, cfg.abs_tol, cfg.event_tol, cfg.max_step_time)
            if code == _ker.OUT_APEX:
                e_pot = g * y1
                block[i - row_lo, j] = e_pot / (e_pot + 0.5 * vx1 * vx1)
            elif code == _ker.OUT_INFEASIBLE:
                block[i - row_lo, j] = INFEASIBLE_CODE
            else:
                block[i - row_lo, j] = FAILURE_CODE
                if code == _ker.OUT_DIVERGED:
                    diverged += 1
    return block, diverged


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def build_grid(spec: GridSpec, p: ModelParams,
               cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
               workers: int | None = None) -> TransitionGrid:
    """Evaluate the transition map at every cell center.

    Rows are distributed over ``workers`` processes (default: the
    ``VIARUN_WORKERS`` environment variable, falling back to the CPU
    count); the result is identical for any worker count.
    """
    workers = resolve_workers(workers)
    values = np.empty((spec.n_s, spec.n_alpha))
    diverged = 0
    if workers == 1:
        values[:], diverged = _compute_rows(spec, p, cfg, 0, spec.n_s)
    else:
        chunk = max(1, math.ceil(spec.n_s / (workers * 4)))
        ranges = [(lo, min(lo + chunk, spec.n_s))
                  for lo in range(0, spec.n_s, chunk)]
        with ProcessPoolExecutor(max_workers=workers, initializer=_pool_init,
                                 initargs=(spec, p, cfg)) as pool:
            for lo, block, d in pool.map(_pool_rows, ranges):
                values[lo:lo + block.shape[0]] = block
                diverged += d
    if diverged > 0:
        logger.warning("build_grid: %d cells did not converge; coded as failures",
                       diverged)
    return TransitionGrid(spec=spec, params=p, integrator=cfg, values=values)


def _params_meta(p: ModelParams) -> dict:
    return {"kind": p.kind.value, "m": p.m, "g": p.g, "l0": p.l0,
            "k": p.k, "beta0": p.beta0, "c": p.c}


def _params_from_meta(meta: dict) -> ModelParams:
    return ModelParams(kind=ModelKind(meta["kind"]), m=meta["m"], g=meta["g"],
                       l0=meta["l0"], k=meta["k"], beta0=meta["beta0"],
                       c=meta["c"])


def _spec_meta(spec: GridSpec) -> dict:
    return {"n_s": spec.n_s, "n_alpha": spec.n_alpha, "energy": spec.energy,
            "s_bounds": list(spec.s_bounds),
            "alpha_bounds": list(spec.alpha_bounds)}


def _spec_from_meta(meta: dict) -> GridSpec:
    return GridSpec(n_s=meta["n_s"], n_alpha=meta["n_alpha"],
                    energy=meta["energy"], s_bounds=tuple(meta["s_bounds"]),
                    alpha_bounds=tuple(meta["alpha_bounds"]))


def _integrator_meta(cfg: IntegratorConfig) -> dict:
    return {"rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol,
            "event_tol": cfg.event_tol, "max_step_time": cfg.max_step_time}


def save_grid(grid: TransitionGrid, path) -> None:
    meta = {
        "params": _params_meta(grid.params),
        "spec": _spec_meta(grid.spec),
        "integrator": _integrator_meta(grid.integrator),
        "encoding": {"failure": FAILURE_CODE, "infeasible": INFEASIBLE_CODE},
    }
    _io.write_matrix(path, GRID_FORMAT, meta, grid.values)


def load_grid(path) -> TransitionGrid:
    meta, values = _io.read_matrix(path, GRID_FORMAT)
    return TransitionGrid(
        spec=_spec_from_meta(meta["spec"]),
        params=_params_from_meta(meta["params"]),
        integrator=IntegratorConfig(**meta["integrator"]),
        values=values,
    )
