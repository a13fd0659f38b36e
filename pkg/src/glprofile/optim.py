"""Bounded derivative-free minimisation used for MGLEs and profile inner solves.

Nelder-Mead simplex search with box constraints enforced by coordinate-wise
reflection at the faces: any trial point is folded back into the box before
the objective sees it, so every evaluation happens at a feasible point.
Restarts jitter the incumbent and rerun, keeping the best value found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .space import ParameterSpace

# Standard simplex coefficients: reflection, expansion, contraction, shrink.
_ALPHA, _GAMMA, _RHO, _SIGMA = 1.0, 2.0, 0.5, 0.5

_JITTER_ENTROPY = 0x9E3779B97F4A7C15  # fixed salt for restart jitter streams


@dataclass(frozen=True)
class OptimizerConfig:
    """Budget and tolerance settings for :func:`minimize_loss`.

    ``max_evals=None`` resolves to ``2000 * dim`` at call time.  The budget is
    a total across the initial run and all restarts.
    """

    max_evals: int | None = None
    f_tol: float = 1e-8
    x_tol: float = 1e-8
    restarts: int = 2
    initial_simplex_scale: float = 0.05

    def __post_init__(self):
        if self.max_evals is not None and int(self.max_evals) < 2:
            raise ValueError("max_evals must allow at least a simplex of evaluations")
        if not (self.f_tol > 0 and self.x_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.restarts) < 0:
            raise ValueError("restarts must be non-negative")
        if not (0 < self.initial_simplex_scale <= 0.5):
            raise ValueError("initial_simplex_scale must lie in (0, 0.5]")

    def resolved_max_evals(self, dim: int) -> int:
        n = 2000 * dim if self.max_evals is None else int(self.max_evals)
        if n < dim + 1:
            raise ValueError(f"max_evals={n} cannot even evaluate a {dim}-d simplex")
        return n


@dataclass(frozen=True)
class OptimResult:
    point: np.ndarray
    value: float
    evals: int
    converged: bool


def reflect_into_box(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Fold a point into [lower, upper] by reflecting at the box faces."""
    width = upper - lower
    t = np.mod(x - lower, 2.0 * width)
    folded = np.where(t <= width, t, 2.0 * width - t)
    # guard against mod returning the period itself under rounding
    return np.clip(lower + folded, lower, upper)


def _jitter_generator(point: np.ndarray, restart: int) -> np.random.Generator:
    # Deterministic restart jitter: key the stream on the incumbent's bits and
    # the restart index so results never depend on call order or wall clock.
    words = np.frombuffer(
        np.ascontiguousarray(point, dtype=np.float64).tobytes(), dtype=np.uint32
    )
    key = (int(restart),) + tuple(int(w) for w in words)
    seq = np.random.SeedSequence(_JITTER_ENTROPY, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


class _Tracker:
    """Wraps the objective: folds points into the box, maps NaN to +inf,
    counts evaluations, and remembers the best point ever seen."""

    def __init__(self, objective, lower, upper, budget):
        self.objective = objective
        self.lower = lower
        self.upper = upper
        self.budget = budget
        self.evals = 0
        self.best_x = None
        self.best_f = math.inf

    @property
    def exhausted(self) -> bool:
        return self.evals >= self.budget

    def __call__(self, x: np.ndarray) -> float:
        x = reflect_into_box(np.asarray(x, dtype=float), self.lower, self.upper)
        self.evals += 1
        f = float(self.objective(x))
        if math.isnan(f):
            f = math.inf
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        return f


def _simplex_run(tracker, x0, f0, scale, f_tol, x_tol, stop_at):
    """One Nelder-Mead descent from x0. Returns True if tolerances were met.

    The run stops once the tracker's evaluation count reaches stop_at, so a
    stalled descent cannot starve later restarts of their budget share.
    """
    lower, upper = tracker.lower, tracker.upper
    d = x0.size
    pts = [reflect_into_box(x0, lower, upper)]
    for i in range(d):
        v = pts[0].copy()
        v[i] += scale * (upper[i] - lower[i])
        pts.append(reflect_into_box(v, lower, upper))
    first = tracker(pts[0]) if f0 is None else f0
    fs = [first] + [tracker(p) for p in pts[1:]]
    if not any(math.isfinite(f) for f in fs):
        # nothing to order a descent by; let a restart reseed elsewhere
        return False

    while True:
        order = np.argsort(fs, kind="stable")
        pts = [pts[i] for i in order]
        fs = [fs[i] for i in order]
        f_spread = max(abs(f - fs[0]) for f in fs[1:]) if math.isfinite(fs[0]) else math.inf
        x_spread = max(np.max(np.abs(p - pts[0])) for p in pts[1:])
        if f_spread <= f_tol and x_spread <= x_tol:
            return True
        if tracker.evals >= stop_at:
            return False

        centroid = np.mean(pts[:-1], axis=0)
        xr = centroid + _ALPHA * (centroid - pts[-1])
        fr = tracker(xr)
        if fs[0] <= fr < fs[-2]:
            pts[-1], fs[-1] = xr, fr
        elif fr < fs[0]:
            if tracker.evals >= stop_at:
                pts[-1], fs[-1] = xr, fr
                continue
            xe = centroid + _GAMMA * (xr - centroid)
            fe = tracker(xe)
            if fe < fr:
                pts[-1], fs[-1] = xe, fe
            else:
                pts[-1], fs[-1] = xr, fr
        else:
            if tracker.evals >= stop_at:
                return False
            if fr < fs[-1]:
                xc = centroid + _RHO * (xr - centroid)
            else:
                xc = centroid + _RHO * (pts[-1] - centroid)
            fc = tracker(xc)
            if fc < min(fr, fs[-1]):
                pts[-1], fs[-1] = xc, fc
            else:
                # shrink toward the best vertex
                for i in range(1, len(pts)):
                    if tracker.evals >= stop_at:
                        return False
                    pts[i] = reflect_into_box(
                        pts[0] + _SIGMA * (pts[i] - pts[0]), lower, upper
                    )
                    fs[i] = tracker(pts[i])


def minimize_loss(
    objective: Callable[[np.ndarray], float],
    space: ParameterSpace,
    start: np.ndarray,
    config: OptimizerConfig = OptimizerConfig(),
) -> OptimResult:
    """Minimise ``objective`` over the box ``space`` starting at ``start``.

    Parameters
    ----------
    objective : callable
        Maps a parameter vector inside the box to a float.  NaN at the start
        point is an input error; NaN anywhere later is treated as +inf.
    space : ParameterSpace
        Box constraints.  Every point the objective sees lies inside.
    start : array-like
        Initial point, required to lie inside the box.
    config : OptimizerConfig
        Budget, tolerances, restart count, and initial simplex scale.

    Returns
    -------
    OptimResult
        Best point found, its value, total evaluations, and a convergence
        flag for the run that produced the best point.  The reported value is
        the minimum over every evaluation made, so it never increases as the
        budget grows.
    """
    start = np.atleast_1d(np.asarray(start, dtype=float))
    if start.shape != space.lower.shape:
        raise ValueError("start must have one value per space coordinate")
    if not space.contains(start):
        raise ValueError("start point must lie inside the parameter box")
    budget = config.resolved_max_evals(space.dim)

    f_start_raw = float(objective(start.copy()))
    if math.isnan(f_start_raw):
        raise ValueError("objective is NaN at the start point")

    tracker = _Tracker(objective, space.lower, space.upper, budget)
    tracker.evals = 1
    tracker.best_f = f_start_raw
    tracker.best_x = start.copy()

    best = (math.inf, None, False)
    incumbent = start
    f0 = f_start_raw
    total_runs = config.restarts + 1
    for run in range(total_runs):
        if run == 0:
            x0 = incumbent
        else:
            if tracker.exhausted:
                break
            gen = _jitter_generator(incumbent, run)
            # restarts jitter around the incumbent to polish it; keeping the
            # search local also keeps the minimiser reproducible on flat
            # ridges, where estimates from resampled datasets should cluster
            # instead of landing at arbitrary ridge points.  A run with no
            # finite value yet reseeds uniformly in the box.
            if math.isfinite(tracker.best_f):
                jitter = (gen.random(space.dim) - 0.5) * 0.2 * space.width
                x0 = reflect_into_box(incumbent + jitter, space.lower, space.upper)
            else:
                x0 = space.lower + gen.random(space.dim) * space.width
            f0 = None
        # evenly share what is left of the budget among the remaining runs
        stop_at = tracker.evals + max(1, (budget - tracker.evals) // (total_runs - run))
        converged = _simplex_run(
            tracker, x0, f0, config.initial_simplex_scale, config.f_tol,
            config.x_tol, stop_at,
        )
        if best[1] is None or tracker.best_f < best[0]:
            best = (tracker.best_f, tracker.best_x, converged)
        incumbent = tracker.best_x
    return OptimResult(
        point=best[1], value=best[0], evals=tracker.evals, converged=best[2]
    )
