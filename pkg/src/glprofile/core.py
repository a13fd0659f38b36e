"""Profile evaluation engine for generalised likelihoods.

A model supplies a loss ``l_y(theta)`` (negative log-likelihood or any other
data-discrepancy), and the generalised likelihood is ``exp(-delta * l)`` for
a tuning exponent ``delta > 0``.  Because delta only rescales the log scale,
profiles are computed once at delta = 1 and rescaled as needed.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .optim import OptimResult, OptimizerConfig, minimize_loss
from .space import InterestPartition, ParameterSpace, ProfileGrid

__all__ = [
    "LossModel",
    "ProfileCurve",
    "generalised_log_likelihood",
    "fit_mgle",
    "evaluate_profile",
    "profile_loss_at",
    "write_profile_csv",
    "read_profile_csv",
]


@dataclass(frozen=True)
class LossModel:
    """A stochastic model reduced to the pieces profiling needs.

    Parameters
    ----------
    space : ParameterSpace
        Admissible parameter box.
    loss : callable ``(dataset, theta) -> float``
        Data-discrepancy evaluated at a full parameter vector.
    simulate : callable ``(theta, size, stream) -> dataset``
        Draws a synthetic dataset of the given size specification.
    size_of : callable ``(dataset) -> size``
        Extracts the size specification so bootstrap replicates match the
        observed design.
    name : str
        Identifier used in serialized outputs.
    """

    space: ParameterSpace
    loss: Callable[[Any, np.ndarray], float]
    simulate: Callable[[np.ndarray, Any, Any], Any]
    size_of: Callable[[Any], Any]
    name: str = "model"
    default_size: Any = None
    default_start: Callable[[Any], np.ndarray] | None = None


@dataclass(frozen=True)
class ProfileCurve:
    """Profile loss along a grid of interest-parameter values.

    ``profile_loss[j]`` is the minimum of the loss over nuisance parameters
    at ``phi_grid[j]``; the log generalised profile at delta is then
    ``-delta * profile_loss[j]``.
    """

    phi_grid: np.ndarray
    profile_loss: np.ndarray
    converged: np.ndarray
    mgle_loss: float | None = None
    mgle_point: np.ndarray | None = None
    nuisance_argmins: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi_grid, dtype=float)
        loss = np.asarray(self.profile_loss, dtype=float)
        conv = np.asarray(self.converged, dtype=bool)
        if not (phi.shape == loss.shape == conv.shape) or phi.ndim != 1:
            raise ValueError("grid, losses, and flags must be 1-d with equal length")
        for name, arr in (("phi_grid", phi), ("profile_loss", loss), ("converged", conv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def log_gl(self, delta: float) -> np.ndarray:
        """Log generalised profile likelihood at exponent ``delta``."""
        if not delta > 0:
            raise ValueError("delta must be positive")
        return -delta * self.profile_loss


def generalised_log_likelihood(loss_value: float, delta: float) -> float:
    """Log of the generalised likelihood ``exp(-delta * loss)``.

    Exact to one floating-point multiplication, so the identity
    ``g(l, delta) == delta * g(l, 1)`` holds bitwise.
    """
    loss_value = float(loss_value)
    if not math.isfinite(loss_value):
        raise ValueError("loss value must be finite")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return -delta * loss_value


def fit_mgle(
    model: LossModel,
    dataset: Any,
    optimizer_config: OptimizerConfig = OptimizerConfig(),
    start: np.ndarray | None = None,
) -> OptimResult:
    """Maximum generalised likelihood estimate: the loss minimiser.

    The MGLE does not depend on delta, so it is computed once per dataset.
    Starts from the model's data-informed initializer when it has one,
    else the box midpoint, unless a start point is supplied.
    """
    if start is None:
        if model.default_start is not None:
            start = np.asarray(model.default_start(dataset), dtype=float)
            start = np.clip(start, model.space.lower, model.space.upper)
        else:
            start = model.space.midpoint
    return minimize_loss(
        lambda theta: model.loss(dataset, theta), model.space, start, optimizer_config
    )


def _inner_profile(model, dataset, partition, phi, optimizer_config, start):
    """Minimise the loss over the nuisance block at fixed interest values.

    Returns (value, nuisance_argmin, converged).
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if not partition.nuisance:
        value = float(model.loss(dataset, partition.assemble(phi, np.empty(0))))
        return value, np.empty(0), True
    sub = model.space.subspace(partition.nuisance)
    if start is None:
        start = sub.midpoint
    start = np.asarray(start, dtype=float)

    def objective(psi):
        return model.loss(dataset, partition.assemble(phi, psi))

    res = minimize_loss(objective, sub, start, optimizer_config)
    if not (res.converged and math.isfinite(res.value)):
        # a misleading warm start (e.g. one pointing into a diverging loss
        # region) can strand the descent; the box midpoint is a neutral
        # second anchor, and the better of the two results wins
        mid = sub.midpoint
        if np.max(np.abs(mid - start)) > 0.0:
            retry = minimize_loss(objective, sub, mid, optimizer_config)
            if retry.value < res.value:
                res = retry
    return res.value, res.point, res.converged


def profile_loss_at(
    model: LossModel,
    dataset: Any,
    partition: InterestPartition,
    phi: np.ndarray,
    optimizer_config: OptimizerConfig = OptimizerConfig(),
    start: np.ndarray | None = None,
) -> float:
    """Profile loss at a single interest-parameter value.

    Runs one constrained minimisation over the nuisance block (none needed in
    one dimension).  ``start`` seeds the inner solve, e.g. with the nuisance
    components of an already-computed MGLE.
    """
    partition.validate_for(model.space)
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if len(phi) != len(partition.interest):
        raise ValueError("phi must carry one value per interest coordinate")
    ibox = model.space.subspace(partition.interest)
    if not ibox.contains(phi, atol=1e-9 * float(np.max(ibox.width))):
        raise ValueError("phi lies outside the interest-parameter bounds")
    phi = np.clip(phi, ibox.lower, ibox.upper)
    value, _, _ = _inner_profile(model, dataset, partition, phi, optimizer_config, start)
    return value


def evaluate_profile(
    model: LossModel,
    dataset: Any,
    partition: InterestPartition,
    grid: ProfileGrid,
    optimizer_config: OptimizerConfig = OptimizerConfig(),
    mgle: OptimResult | None = None,
    warm_start: bool = True,
    n_workers: int = 1,
) -> ProfileCurve:
    """Profile loss along a grid for a scalar interest parameter.

    With warm starts (the default) the grid is swept outward in both
    directions from the node nearest the MGLE, seeding each inner solve with
    the neighbouring node's nuisance minimiser.  The sweep is sequential by
    construction; passing ``warm_start=False`` makes the grid points
    independent so they may be evaluated concurrently.

    Failed inner solves keep their best-found value and are flagged in
    ``converged``; they do not abort the curve.
    """
    partition.validate_for(model.space)
    if len(partition.interest) != 1:
        raise ValueError("grid profiling handles a single interest coordinate")
    ibox = model.space.subspace(partition.interest)
    tol = 1e-9 * float(ibox.width[0])
    if grid.values[0] < ibox.lower[0] - tol or grid.values[-1] > ibox.upper[0] + tol:
        raise ValueError("grid extends beyond the interest-parameter bounds")
    phi_grid = np.clip(grid.values, ibox.lower[0], ibox.upper[0])

    if mgle is None:
        mgle = fit_mgle(model, dataset, optimizer_config)
    theta_hat = np.asarray(mgle.point, dtype=float)
    psi_hat = theta_hat[list(partition.nuisance)] if partition.nuisance else None

    m = grid.size
    values = np.empty(m)
    conv = np.zeros(m, dtype=bool)
    argmins = np.empty((m, len(partition.nuisance)))

    def solve(j, start):
        v, psi, ok = _inner_profile(
            model, dataset, partition, phi_grid[j : j + 1], optimizer_config, start
        )
        values[j] = v
        conv[j] = ok
        argmins[j] = psi
        return psi

    if not partition.nuisance:
        for j in range(m):
            solve(j, None)
    elif warm_start:
        j0 = int(np.argmin(np.abs(phi_grid - theta_hat[partition.interest[0]])))
        psi = solve(j0, psi_hat)
        for j in range(j0 + 1, m):
            psi = solve(j, psi)
        psi = argmins[j0]
        for j in range(j0 - 1, -1, -1):
            psi = solve(j, psi)
    elif n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(lambda j: solve(j, psi_hat), range(m)))
    else:
        for j in range(m):
            solve(j, psi_hat)

    return ProfileCurve(
        phi_grid=phi_grid.copy(),
        profile_loss=values,
        converged=conv,
        mgle_loss=mgle.value,
        mgle_point=theta_hat,
        nuisance_argmins=argmins,
    )


def write_profile_csv(curve: ProfileCurve, path) -> None:
    """Persist a profile curve as CSV with a fixed four-column header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phi", "profile_loss", "log_gl_delta1", "converged"])
        for phi, loss, ok in zip(curve.phi_grid, curve.profile_loss, curve.converged):
            w.writerow([f"{phi:.17g}", f"{loss:.17g}", f"{-loss:.17g}", int(ok)])


def read_profile_csv(path) -> ProfileCurve:
    """Read a profile curve written by :func:`write_profile_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["phi", "profile_loss", "log_gl_delta1", "converged"]:
        raise ValueError(f"{path}: not a profile curve file")
    body = np.array([[float(c) for c in row] for row in rows[1:]])
    if body.size == 0:
        raise ValueError(f"{path}: profile curve has no rows")
    return ProfileCurve(
        phi_grid=body[:, 0],
        profile_loss=body[:, 1],
        converged=body[:, 3] != 0,
    )
