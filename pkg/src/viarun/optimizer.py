"""Constriction-coefficient particle swarm over model parameters.

Fitness is the normalized hypervolume of the viable set on a (usually
low-resolution) grid, so the optimizer searches for leg parameters whose
natural dynamics leave the most room for control policies.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import DEFAULT_INTEGRATOR, IntegratorConfig, ModelParams
from .poincare import GridSpec, build_grid
from .viability import measure, viable_sets

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParamSpace:
    """Box-bounded parameter vector with a mapping to model constants."""

    names: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    to_params: Callable[[Sequence[float]], ModelParams]

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ValueError("names and bounds must have equal length")
        for lo, hi in zip(self.lower, self.upper):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError("bounds must be finite with lower < upper")

    @property
    def dim(self) -> int:
        return len(self.names)


def _nslip_from_vector(vec, m: float, g: float, l0: float) -> ModelParams:
    c, beta0 = float(vec[0]), float(vec[1])
    return ModelParams.nslip(m=m, g=g, l0=l0, beta0=beta0, c=c)


def nslip_space(c_bounds: tuple[float, float] = (100.0, 5000.0),
                beta0_bounds: tuple[float, float] = (math.radians(100.0),
                                                     math.radians(179.0)),
                m: float = 80.0, g: float = 9.81, l0: float = 1.0) -> ParamSpace:
    """Torsional-spring search space (c, beta0) around the default leg."""
    import functools
    return ParamSpace(
        names=("c", "beta0"),
        lower=(c_bounds[0], beta0_bounds[0]),
        upper=(c_bounds[1], beta0_bounds[1]),
        to_params=functools.partial(_nslip_from_vector, m=m, g=g, l0=l0),
    )


@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 25
    chi: float = 0.7298  # Clerc-Kennedy constriction factor
    c1: float = 2.05
    c2: float = 2.05
    var_tol: float = 1e-5  # stop once the swarm fitness variance drops below
    max_iters: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("need at least 2 particles")
        if not 0.0 < self.chi < 1.0:
            raise ValueError("constriction factor must lie in (0, 1)")
        if self.var_tol < 0.0:
            raise ValueError("variance tolerance must be non-negative")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")


@dataclass(frozen=True)
class PsoIteration:
    best_fitness: float
    best_position: tuple[float, ...]
    variance: float


@dataclass
class PsoTrace:
    config: PsoConfig
    iterations: list[PsoIteration] = field(default_factory=list)
    converged: bool = False

    @property
    def best_fitness(self) -> float:
        return self.iterations[-1].best_fitness

    @property
    def best_position(self) -> tuple[float, ...]:
        return self.iterations[-1].best_position


def fitness_qv(vec: Sequence[float], space: ParamSpace, spec: GridSpec,
               cfg: IntegratorConfig = DEFAULT_INTEGRATOR,
               workers: int = 1) -> float:
    """Normalized hypervolume of Q_V for the model at ``vec``.

    Parameter vectors that map to invalid model constants score 0 (with a
    logged warning) rather than aborting the swarm.
    """
    try:
        params = space.to_params(vec)
    except ValueError as exc:
        logger.warning("fitness undefined at %s: %s", np.asarray(vec), exc)
        return 0.0
    grid = build_grid(spec, params, cfg, workers=workers)
    qv, _ = viable_sets(grid)
    return measure(qv)


def pso_optimize(space: ParamSpace, cfg: PsoConfig,
                 fitness: Callable[[np.ndarray], float],
                 workers: int = 1) -> PsoTrace:
    """Maximize ``fitness`` over the box with constriction-factor PSO.

    Velocity update: v <- chi * (v + c1 r1 (pbest - x) + c2 r2 (gbest - x))
    with fresh per-dimension uniforms each iteration.  Positions are
    clamped to the bounds with the offending velocity component zeroed.
    Runs until the swarm fitness variance drops below ``var_tol`` or
    ``max_iters`` evaluation rounds complete; fully reproducible from the
    seed (fitness evaluations are pure, and the RNG stream is consumed in
    a fixed order regardless of ``workers``).
    """
    rng = np.random.default_rng(cfg.seed)
    lower = np.asarray(space.lower)
    upper = np.asarray(space.upper)
    n, d = cfg.n_particles, space.dim
    x = lower + rng.uniform(size=(n, d)) * (upper - lower)
    v = np.zeros((n, d))
    pbest_x = x.copy()
    pbest_f = np.full(n, -np.inf)
    trace = PsoTrace(config=cfg)

    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers)
        evaluate = lambda xs: np.array(list(pool.map(fitness, xs)))  # noqa: E731
    else:
        pool = None
        evaluate = lambda xs: np.array([fitness(xi) for xi in xs])  # noqa: E731
    try:
        for _ in range(cfg.max_iters):
            f = evaluate(list(x))
            improved = f > pbest_f
            pbest_f = np.where(improved, f, pbest_f)
            pbest_x[improved] = x[improved]
            g_idx = int(np.argmax(pbest_f))
            gbest_x = pbest_x[g_idx].copy()
            variance = float(np.var(f))
            trace.iterations.append(PsoIteration(
                best_fitness=float(pbest_f[g_idx]),
                best_position=tuple(float(c) for c in gbest_x),
                variance=variance))
            if variance < cfg.var_tol:
                trace.converged = True
                break
            r1 = rng.uniform(size=(n, d))
            r2 = rng.uniform(size=(n, d))
            v = cfg.chi * (v + cfg.c1 * r1 * (pbest_x - x)
                           + cfg.c2 * r2 * (gbest_x - x))
            x = x + v
            low = x < lower
            high = x > upper
            x = np.clip(x, lower, upper)
            v[low | high] = 0.0
    finally:
        if pool is not None:
            pool.shutdown()
    return trace
