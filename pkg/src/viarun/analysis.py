"""Return-map analysis: fixed points, basins, and noise/energy sweeps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import DEFAULT_INTEGRATOR, IntegratorConfig, ModelParams
from .poincare import GridSpec, TransitionGrid, build_grid, is_next, transition
from .viability import NoiseModel, SetMask, StateMask, measure, robust_sets, viable_sets

# A return map: (s, alpha) -> next s, or None on failure/infeasibility.
ReturnMap = Callable[[float, float], "float | None"]


def apex_return_map(p: ModelParams, energy: float,
                    cfg: IntegratorConfig = DEFAULT_INTEGRATOR) -> ReturnMap:
    """Continuous apex return map backed by the hybrid simulator."""

    def P(s: float, alpha: float) -> float | None:
        v = transition(s, alpha, energy, p, cfg)
        return float(v) if v >= 0.0 else None

    return P


def grid_return_map(grid: TransitionGrid) -> ReturnMap:
    """Return map realized by containing-cell lookup on a built grid."""
    spec = grid.spec

    def P(s: float, alpha: float) -> float | None:
        i = int(spec.s_cell(s))
        j = int(spec.alpha_cell(alpha))
        if i < 0 or j < 0:
            return None
        v = grid.values[i, j]
        return float(v) if v >= 0.0 else None

    return P


@dataclass(frozen=True)
class FixedPoint:
    """Period-1 orbit of the return map at one angle of attack."""

    alpha: float
    s_star: float
    derivative: float
    stable: bool


def _refine_root(P: ReturnMap, alpha: float, a: float, fa: float, b: float,
                 fb: float, tol: float) -> float | None:
    """Bisect P(s) - s = 0 inside a sign-change bracket until the residual
    drops below tol.  Returns None if the map becomes undefined inside the
    bracket (the bracket straddled a viability boundary)."""
    for _ in range(200):
        mid = 0.5 * (a + b)
        pm = P(mid, alpha)
        if pm is None:
            return None
        fm = pm - mid
        if abs(fm) <= tol:
            return mid
        if (fm > 0.0) == (fa > 0.0):
            a, fa = mid, fm
        else:
            b, fb = mid, fm
        if b - a <= 1e-15:
            break
    return 0.5 * (a + b)


def _map_derivative(P: ReturnMap, alpha: float, s: float, h: float,
                    s_bounds: tuple[float, float]) -> float:
    lo, hi = s_bounds
    s_m, s_p = max(s - h, lo), min(s + h, hi)
    p_m, p_p = P(s_m, alpha), P(s_p, alpha)
    if p_m is not None and p_p is not None and s_p > s_m:
        return (p_p - p_m) / (s_p - s_m)
    p_0 = P(s, alpha)
    if p_0 is None:
        return math.inf
    if p_p is not None and s_p > s:
        return (p_p - p_0) / (s_p - s)
    if p_m is not None and s > s_m:
        return (p_0 - p_m) / (s - s_m)
    return math.inf


def find_fixed_points(P: ReturnMap, alpha: float,
                      s_bounds: tuple[float, float] = (0.0, 1.0),
                      n_scan: int = 200, tol: float = 1e-8,
                      deriv_step: float | None = None,
                      samples: "tuple[np.ndarray, np.ndarray] | None" = None,
                      ) -> list[FixedPoint]:
    """Period-1 fixed points of ``P`` at one angle of attack.

    Roots of P(s) - s are bracketed by sign changes on an ``n_scan``-cell
    scan of the state interval and refined by bisection on the continuous
    map until |P(s) - s| <= tol.  Stability follows the central-difference
    slope with step ``deriv_step`` (default: one scan cell).
    ``samples`` may carry a precomputed scan as (s values, P values with
    NaN where undefined) to avoid re-sampling.
    """
    lo, hi = s_bounds
    if samples is None:
        d = (hi - lo) / n_scan
        s_vals = lo + (np.arange(n_scan) + 0.5) * d
        p_vals = np.array([v if (v := P(float(s), alpha)) is not None else np.nan
                           for s in s_vals])
    else:
        s_vals, p_vals = samples
        d = s_vals[1] - s_vals[0] if len(s_vals) > 1 else (hi - lo)
    h = deriv_step if deriv_step is not None else d
    f = p_vals - s_vals
    roots: list[float] = []
    for i in range(len(s_vals) - 1):
        fa, fb = f[i], f[i + 1]
        if np.isnan(fa) or np.isnan(fb):
            continue
        if fa == 0.0:
            roots.append(float(s_vals[i]))
            continue
        if fa * fb < 0.0:
            r = _refine_root(P, alpha, float(s_vals[i]), float(fa),
                             float(s_vals[i + 1]), float(fb), tol)
            if r is not None:
                roots.append(r)
    if len(f) and f[-1] == 0.0:
        roots.append(float(s_vals[-1]))
    out: list[FixedPoint] = []
    for r in roots:
        if out and abs(r - out[-1].s_star) < 0.5 * d:
            continue
        dp = _map_derivative(P, alpha, r, h, s_bounds)
        out.append(FixedPoint(alpha=alpha, s_star=r, derivative=dp,
                              stable=abs(dp) < 1.0))
    return out


@dataclass
class BifurcationDiagram:
    """Fixed points and basins of attraction across an angle-of-attack sweep."""

    alphas: np.ndarray
    fixed_points: list[list[FixedPoint]]
    basins: list[list[tuple[float, float]]]  # per-alpha intervals in s
    n_s: int
    s_bounds: tuple[float, float]


def _basin_cells(next_cell: np.ndarray, stable_cells: np.ndarray,
                 conv_cells: int, max_iter: int) -> np.ndarray:
    """Forward-iterate the cell-lookup dynamics and mark cells that come
    within ``conv_cells`` of a stable fixed point inside ``max_iter`` steps."""
    n = next_cell.size
    state = np.zeros(n, dtype=np.int8)  # 0 unknown, 1 converged, 2 lost
    if stable_cells.size == 0:
        return np.zeros(n, dtype=bool)
    near = np.zeros(n, dtype=bool)
    for c in stable_cells:
        lo, hi = max(0, c - conv_cells), min(n, c + conv_cells + 1)
        near[lo:hi] = True
    for start in range(n):
        if state[start]:
            continue
        path = []
        cur = start
        verdict = 2
        for _ in range(max_iter):
            if near[cur]:
                verdict = 1
                break
            if state[cur]:
                verdict = state[cur]
                break
            path.append(cur)
            cur = next_cell[cur]
            if cur < 0:
                verdict = 2
                break
        for c in path:
            state[c] = verdict
        state[start] = verdict
    return state == 1


def bifurcation_sweep(p: ModelParams, energy: float, alphas: Sequence[float],
                      cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
                      n_s: int = 200, s_bounds: tuple[float, float] = (0.0, 1.0),
                      tol: float = 1e-8, max_iter: int = 200,
                      conv_cells: int = 2) -> BifurcationDiagram:
    """Fixed points and basins of attraction per angle of attack.

    Basins are estimated on the discretized map: each state cell is
    forward-iterated by containing-cell lookup for up to ``max_iter``
    steps and counts as attracted once it lands within ``conv_cells``
    cells of a stable fixed point.
    """
    P = apex_return_map(p, energy, cfg)
    lo, hi = s_bounds
    d = (hi - lo) / n_s
    s_vals = lo + (np.arange(n_s) + 0.5) * d
    spec_like = GridSpec(n_s=n_s, n_alpha=2, energy=energy, s_bounds=s_bounds)
    all_fps: list[list[FixedPoint]] = []
    all_basins: list[list[tuple[float, float]]] = []
    for alpha in alphas:
        p_vals = np.array([v if (v := P(float(s), alpha)) is not None else np.nan
                           for s in s_vals])
        fps = find_fixed_points(P, float(alpha), s_bounds=s_bounds, tol=tol,
                                samples=(s_vals, p_vals))
        all_fps.append(fps)
        stable = np.array([fp.s_star for fp in fps if fp.stable])
        next_cell = np.where(np.isnan(p_vals), -1,
                             spec_like.s_cell(np.nan_to_num(p_vals, nan=-1.0)))
        stable_cells = spec_like.s_cell(stable).astype(np.int64) if stable.size \
            else np.empty(0, dtype=np.int64)
        basin = _basin_cells(next_cell.astype(np.int64), stable_cells,
                             conv_cells, max_iter)
        intervals: list[tuple[float, float]] = []
        i = 0
        while i < n_s:
            if basin[i]:
                j = i
                while j + 1 < n_s and basin[j + 1]:
                    j += 1
                intervals.append((lo + i * d, lo + (j + 1) * d))
                i = j + 1
            else:
                i += 1
        all_basins.append(intervals)
    return BifurcationDiagram(alphas=np.asarray(alphas, dtype=float),
                              fixed_points=all_fps, basins=all_basins,
                              n_s=n_s, s_bounds=s_bounds)


@dataclass(frozen=True)
class NoiseThreshold:
    """Bracket around the noise level at which the robust set vanishes."""

    eta_nonempty: float  # largest tested noise with a non-empty robust set
    eta_empty: float  # smallest tested noise with an empty robust set


def noise_threshold(grid: TransitionGrid, q_v: SetMask, eta_lo: float,
                    eta_hi: float, tol: float | None = None) -> NoiseThreshold:
    """Bisect the critical noise level between a non-empty and an empty
    robust set.  Default tolerance: one action cell."""
    if tol is None:
        tol = grid.spec.dalpha
    if not robust_sets(grid, q_v, NoiseModel(eta_lo))[0].member.any():
        raise ValueError(f"robust set already empty at eta={eta_lo}")
    if robust_sets(grid, q_v, NoiseModel(eta_hi))[0].member.any():
        raise ValueError(f"robust set still non-empty at eta={eta_hi}")
    while eta_hi - eta_lo > tol:
        mid = 0.5 * (eta_lo + eta_hi)
        if robust_sets(grid, q_v, NoiseModel(mid))[0].member.any():
            eta_lo = mid
        else:
            eta_hi = mid
    return NoiseThreshold(eta_nonempty=eta_lo, eta_empty=eta_hi)


@dataclass(eq=False)
class SweepEntry:
    """Robust sets and their measures at one sweep value."""

    value: float
    q_mask: SetMask
    s_mask: StateMask
    q_measure: float
    s_measure: float
    y_coords: np.ndarray | None = None  # apex heights of the state cells
    vx_coords: np.ndarray | None = None  # forward velocities of the state cells


@dataclass(eq=False)
class SweepResult:
    axis: str  # "eta" | "energy"
    entries: list[SweepEntry] = field(default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])


def noise_sweep(grid: TransitionGrid, q_v: SetMask,
                etas: Sequence[float]) -> SweepResult:
    """Robust sets at each noise level, in the given order."""
    result = SweepResult(axis="eta")
    for eta in etas:
        qr, sr = robust_sets(grid, q_v, NoiseModel(float(eta)))
        result.entries.append(SweepEntry(
            value=float(eta), q_mask=qr, s_mask=sr,
            q_measure=measure(qr), s_measure=measure(sr)))
    return result


@dataclass(frozen=True)
class Isoline:
    """Samples of one constant forward-velocity line across energy levels."""

    vx: float
    points: tuple[tuple[float, float, float], ...]  # (energy, s, y)


def velocity_isolines(p: ModelParams, energies: Sequence[float],
                      velocities: Sequence[float]) -> list[Isoline]:
    """Where each constant-vx line intersects each energy level.

    A ground-height change moves an apex state along one of these lines:
    the forward velocity is preserved while height (and hence total
    energy) changes.
    """
    out = []
    for vx in velocities:
        pts = []
        for E in energies:
            s = 1.0 - p.m * vx * vx / (2.0 * E)
            if 0.0 <= s <= 1.0:
                pts.append((float(E), float(s), float(s * E / (p.m * p.g))))
        out.append(Isoline(vx=float(vx), points=tuple(pts)))
    return out


def shift_ground_height(y: float, vx: float, dh: float) -> tuple[float, float]:
    """Apex state after the ground drops by ``dh``: same forward velocity,
    effective height increased by ``dh``."""
    return y + dh, vx


def energy_sweep(p: ModelParams, energies: Sequence[float], eta: float,
                 spec: GridSpec, cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
                 workers: int | None = None,
                 isoline_velocities: Sequence[float] = ()) -> tuple[SweepResult, list[Isoline]]:
    """Robust kernels across total-energy levels at fixed noise.

    For each energy a fresh grid is built with the same discretization and
    the full pipeline (viable then robust sets) is run; state masks are
    annotated with their apex-space (y, vx) coordinates.
    """
    result = SweepResult(axis="energy")
    noise = NoiseModel(eta)
    for E in energies:
        spec_e = replace(spec, energy=float(E))
        grid = build_grid(spec_e, p, cfg, workers=workers)
        qv, _ = viable_sets(grid)
        qr, sr = robust_sets(grid, qv, noise)
        s_centers = spec_e.s_centers()
        result.entries.append(SweepEntry(
            value=float(E), q_mask=qr, s_mask=sr,
            q_measure=measure(qr), s_measure=measure(sr),
            y_coords=s_centers * E / (p.m * p.g),
            vx_coords=np.sqrt(2.0 * E * (1.0 - s_centers) / p.m)))
    return result, velocity_isolines(p, energies, isoline_velocities)
