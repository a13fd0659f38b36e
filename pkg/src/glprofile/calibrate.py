"""Bootstrap calibration of the generalised-likelihood exponent delta.

The workflow mirrors classical profile-likelihood intervals with one twist:
the loss is not a negative log-likelihood, so the Wilks chi-square threshold
only applies after the loss is rescaled by a calibrated exponent delta*.
Calibration simulates bootstrap datasets at the MGLE, measures how far each
bootstrap profile at the observed interest estimate sits above its own
minimum, and picks the delta whose empirical coverage best matches 1 - alpha.
A separate validator estimates proper coverage at a known true parameter.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .core import LossModel, ProfileCurve, evaluate_profile, fit_mgle, profile_loss_at
from .optim import OptimizerConfig
from .space import InterestPartition, ProfileGrid
from .stats import RngStream, chi2_quantile

__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "CalibrationError",
    "ConfidenceSet",
    "CoverageReport",
    "wilks_threshold",
    "empirical_coverage_at",
    "calibrate_delta",
    "confidence_set",
    "validate_coverage",
    "quantile_bootstrap_ci",
    "write_calibration_csv",
    "write_calibration_json",
    "write_coverage_csv",
]

_GRID_CAP = 1_000_000
_GRID_BLOCK = 16_384
# stream namespaces so calibration and validation never share draws
_NS_BOOTSTRAP = 0
_NS_COVERAGE = 1


class CalibrationError(RuntimeError):
    """Raised when too many replicates fail to produce a usable estimate."""


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for :func:`calibrate_delta`.

    ``delta_grid_size`` pins the number of grid points M; leaving it None
    grows the grid until the coverage curve drops 0.1 below the target
    (capped at one million points).
    """

    K: int = 100
    alpha: float = 0.05
    delta_step: float = 0.01
    delta_grid_size: int | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be a positive integer")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly in (0, 1)")
        if not self.delta_step > 0:
            raise ValueError("delta_step must be positive")
        if self.delta_grid_size is not None and int(self.delta_grid_size) < 1:
            raise ValueError("delta_grid_size must be a positive integer")


@dataclass(frozen=True)
class CalibrationResult:
    delta_star: float
    achieved_coverage: float
    tau_alpha: float
    deltas: np.ndarray
    coverages: np.ndarray
    bootstrap_mgles: np.ndarray
    bootstrap_mgle_losses: np.ndarray
    bootstrap_profile_at_phi_hat: np.ndarray
    k_requested: int
    k_effective: int
    alpha: float
    mgle_point: np.ndarray
    mgle_loss: float
    phi_hat: np.ndarray
    observed_profile: ProfileCurve

    @property
    def coverage_curve(self) -> list[tuple[float, float]]:
        """The calibration curve as (delta, coverage) pairs."""
        return list(zip(self.deltas.tolist(), self.coverages.tolist()))


@dataclass(frozen=True)
class ConfidenceSet:
    """Interest-parameter confidence set cut from a scaled profile."""

    grid_members: np.ndarray
    interval: tuple[float, float]
    hit_lower_bound: bool
    hit_upper_bound: bool
    delta_star: float
    tau_alpha: float


@dataclass(frozen=True)
class CoverageReport:
    theta_true: np.ndarray
    B: int
    alphas: tuple[float, ...]
    observed: np.ndarray
    per_replicate_flags: np.ndarray
    b_effective: int


def wilks_threshold(alpha: float, interest_dim: int) -> float:
    """Half the (1-alpha) chi-square quantile with interest_dim degrees of freedom.

    This is the asymptotic drop in log-likelihood separating a (1-alpha)
    confidence region from the maximum.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly in (0, 1)")
    return 0.5 * chi2_quantile(1.0 - alpha, interest_dim)


def empirical_coverage_at(
    delta: float,
    tau_alpha: float,
    phi_hat_profile_losses: np.ndarray,
    mgle_losses: np.ndarray,
) -> float:
    """Fraction of bootstrap replicates whose scaled profile drop passes tau.

    Replicate k passes when ``delta * (profile_k - mgle_k) <= tau_alpha``,
    i.e. the observed interest estimate would fall inside replicate k's
    confidence set at exponent delta.
    """
    prof = np.asarray(phi_hat_profile_losses, dtype=float)
    mgle = np.asarray(mgle_losses, dtype=float)
    if prof.shape != mgle.shape or prof.ndim != 1 or prof.size == 0:
        raise ValueError("profile and MGLE loss arrays must be equal-length and nonempty")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not tau_alpha > 0:
        raise ValueError("tau_alpha must be positive")
    return float(np.mean(delta * (prof - mgle) <= tau_alpha))


def _coverage_for_deltas(deltas: np.ndarray, diffs: np.ndarray, tau: float) -> np.ndarray:
    """Vectorised coverage curve over a batch of delta values."""
    return (deltas[:, None] * diffs[None, :] <= tau).mean(axis=1)


def _delta_grid_search(diffs, tau, target, step, grid_size):
    """Coverage curve over the delta grid and the index of the calibrated delta.

    Scans delta in {step, 2 step, ...}.  The smallest delta attaining the
    minimum of |C(delta) - target| wins; if the whole curve is flat there is
    nothing to discriminate, so the end pushing coverage toward the target is
    returned (the largest delta when coverage sits above target).
    """
    adaptive = grid_size is None
    limit = _GRID_CAP if adaptive else int(grid_size)
    deltas_parts, cov_parts = [], []
    lo = 1
    while True:
        hi = min(lo + _GRID_BLOCK - 1, limit)
        block = np.arange(lo, hi + 1, dtype=float) * step
        cov = _coverage_for_deltas(block, diffs, tau)
        deltas_parts.append(block)
        cov_parts.append(cov)
        if hi >= limit or (adaptive and cov[-1] < target - 0.1):
            break
        lo = hi + 1
    deltas = np.concatenate(deltas_parts)
    coverages = np.concatenate(cov_parts)
    assert np.all(np.diff(coverages) <= 0.0), "coverage curve must be non-increasing"

    gaps = np.abs(coverages - target)
    if np.all(coverages == coverages[0]):
        j = deltas.size - 1 if coverages[0] > target else 0
    else:
        j = int(np.argmin(gaps))
    return deltas, coverages, j


def calibrate_delta(
    model: LossModel,
    dataset: Any,
    partition: InterestPartition,
    grid: ProfileGrid,
    config: CalibrationConfig,
    optimizer_config: OptimizerConfig = OptimizerConfig(),
    mgle=None,
    observed_profile: ProfileCurve | None = None,
    n_workers: int = 1,
) -> CalibrationResult:
    """Calibrate the generalised-likelihood exponent by parametric bootstrap.

    Fits the MGLE and the observed profile over ``grid``, simulates K
    bootstrap datasets at the MGLE, refits each, evaluates each bootstrap
    profile at the observed interest estimate, and grid-searches the delta
    whose empirical coverage is closest to 1 - alpha.

    Parameters
    ----------
    mgle, observed_profile : optional
        Precomputed observed-data fit and profile curve (e.g. loaded from a
        previous run's files); both are recomputed when omitted.
    n_workers : int
        Worker threads for the bootstrap replicates.  Replicates own
        pre-split RNG streams, so results do not depend on this value.

    Raises
    ------
    CalibrationError
        If more than 20% of bootstrap replicates fail to converge.
    """
    partition.validate_for(model.space)
    if mgle is None:
        mgle = fit_mgle(model, dataset, optimizer_config)
    if observed_profile is None:
        observed_profile = evaluate_profile(
            model, dataset, partition, grid, optimizer_config, mgle=mgle
        )
    theta_hat = np.asarray(mgle.point, dtype=float)
    phi_hat = theta_hat[list(partition.interest)]
    size = model.size_of(dataset)
    root = RngStream(config.seed).split(_NS_BOOTSTRAP)

    def replicate(k: int):
        y_k = model.simulate(theta_hat, size, root.split(k))
        fit = fit_mgle(model, y_k, optimizer_config)
        if not fit.converged:
            return None
        psi_k = fit.point[list(partition.nuisance)] if partition.nuisance else None
        prof_k = profile_loss_at(
            model, y_k, partition, phi_hat, optimizer_config, start=psi_k
        )
        return fit.point, fit.value, prof_k

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(replicate, range(config.K)))
    else:
        results = [replicate(k) for k in range(config.K)]

    kept = [r for r in results if r is not None]
    excluded = config.K - len(kept)
    if excluded > 0.2 * config.K:
        raise CalibrationError(
            f"{excluded} of {config.K} bootstrap replicates failed to converge"
        )
    boot_points = np.array([r[0] for r in kept])
    boot_losses = np.array([r[1] for r in kept])
    boot_profiles = np.array([r[2] for r in kept])

    tau = wilks_threshold(config.alpha, len(partition.interest))
    target = 1.0 - config.alpha
    diffs = boot_profiles - boot_losses
    deltas, coverages, j = _delta_grid_search(
        diffs, tau, target, config.delta_step, config.delta_grid_size
    )
    return CalibrationResult(
        delta_star=float(deltas[j]),
        achieved_coverage=float(coverages[j]),
        tau_alpha=tau,
        deltas=deltas,
        coverages=coverages,
        bootstrap_mgles=boot_points,
        bootstrap_mgle_losses=boot_losses,
        bootstrap_profile_at_phi_hat=boot_profiles,
        k_requested=config.K,
        k_effective=len(kept),
        alpha=config.alpha,
        mgle_point=theta_hat,
        mgle_loss=float(mgle.value),
        phi_hat=phi_hat,
        observed_profile=observed_profile,
    )


def confidence_set(
    profile: ProfileCurve, delta_star: float, tau_alpha: float
) -> ConfidenceSet:
    """Cut a confidence set from a profile at a calibrated exponent.

    A grid point belongs to the set when its scaled profile drop
    ``delta_star * (profile_loss - mgle_loss)`` stays strictly below
    ``tau_alpha``.  Interval endpoints interpolate the drop linearly between
    the last member and the first non-member; when the drop never crosses the
    threshold on one side the endpoint clamps to the grid edge and the
    corresponding boundary flag is set, which is the practical signal of a
    non-identifiable direction.
    """
    if profile.mgle_loss is None:
        raise ValueError("profile must carry its MGLE loss")
    if not delta_star > 0:
        raise ValueError("delta_star must be positive")
    if not tau_alpha > 0:
        raise ValueError("tau_alpha must be positive")
    phi = profile.phi_grid
    drop = delta_star * (profile.profile_loss - profile.mgle_loss)
    member = drop < tau_alpha
    if not member.any():
        raise ValueError("no grid point passes the threshold; grid cannot bracket the set")
    j0 = int(np.argmin(drop))

    def crossing(j_out, j_in):
        d_out, d_in = drop[j_out], drop[j_in]
        if not math.isfinite(d_out):
            return float(phi[j_in])
        t = (d_out - tau_alpha) / (d_out - d_in)
        return float(phi[j_out] + t * (phi[j_in] - phi[j_out]))

    j = j0
    while j > 0 and member[j - 1]:
        j -= 1
    lo = float(phi[0]) if j == 0 else crossing(j - 1, j)
    j = j0
    while j < phi.size - 1 and member[j + 1]:
        j += 1
    hi = float(phi[-1]) if j == phi.size - 1 else crossing(j + 1, j)

    return ConfidenceSet(
        grid_members=np.nonzero(member)[0],
        interval=(lo, hi),
        hit_lower_bound=bool(member[0]),
        hit_upper_bound=bool(member[-1]),
        delta_star=float(delta_star),
        tau_alpha=float(tau_alpha),
    )


def validate_coverage(
    model: LossModel,
    theta_true: np.ndarray,
    partition: InterestPartition,
    delta_star: float,
    alphas: Sequence[float],
    B: int,
    optimizer_config: OptimizerConfig = OptimizerConfig(),
    seed: int = 0,
    size: Any = None,
    n_workers: int = 1,
) -> CoverageReport:
    """Proper coverage of calibrated profile sets at a known true parameter.

    Simulates B independent datasets at ``theta_true``; each replicate passes
    at level alpha when the scaled profile drop at the true interest value
    stays within the Wilks threshold.  The same B replicates are reused
    across all requested levels.
    """
    partition.validate_for(model.space)
    theta_true = np.asarray(theta_true, dtype=float)
    if not model.space.contains(theta_true):
        raise ValueError("theta_true lies outside the parameter box")
    if not delta_star > 0:
        raise ValueError("delta_star must be positive")
    alphas = tuple(float(a) for a in alphas)
    if not alphas or not all(0.0 < a < 1.0 for a in alphas):
        raise ValueError("alphas must be a nonempty list of levels in (0, 1)")
    if int(B) < 1:
        raise ValueError("B must be a positive integer")
    if size is None:
        size = model.default_size
    if size is None:
        raise ValueError("model has no default size; pass size explicitly")

    phi_true = theta_true[list(partition.interest)]
    taus = np.array([wilks_threshold(a, len(partition.interest)) for a in alphas])
    root = RngStream(seed).split(_NS_COVERAGE)

    def replicate(b: int):
        y_b = model.simulate(theta_true, size, root.split(b))
        fit = fit_mgle(model, y_b, optimizer_config)
        if not fit.converged:
            return None
        psi_b = fit.point[list(partition.nuisance)] if partition.nuisance else None
        prof_b = profile_loss_at(
            model, y_b, partition, phi_true, optimizer_config, start=psi_b
        )
        return delta_star * (prof_b - fit.value) <= taus

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(replicate, range(int(B))))
    else:
        results = [replicate(b) for b in range(int(B))]

    kept = [r for r in results if r is not None]
    excluded = int(B) - len(kept)
    if excluded > 0.2 * int(B):
        raise CalibrationError(
            f"{excluded} of {B} validation replicates failed to converge"
        )
    flags = np.array(kept, dtype=bool)
    return CoverageReport(
        theta_true=theta_true,
        B=int(B),
        alphas=alphas,
        observed=flags.mean(axis=0),
        per_replicate_flags=flags,
        b_effective=len(kept),
    )


def quantile_bootstrap_ci(
    mgle_samples: np.ndarray, alpha: float, component: int
) -> tuple[float, float]:
    """Empirical alpha/2 and 1-alpha/2 quantiles of one MGLE component.

    Quantiles interpolate linearly between order statistics (position
    ``q (K-1) + 1`` in 1-based indexing).
    """
    samples = np.asarray(mgle_samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty MGLE sample")
    if samples.ndim == 1:
        values = samples
        if component != 0:
            raise IndexError("component out of range for 1-d samples")
    else:
        values = samples[:, component]
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    lo, hi = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def write_calibration_csv(result: CalibrationResult, path) -> None:
    """Coverage curve as CSV rows (delta, coverage)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "coverage"])
        for d, c in zip(result.deltas, result.coverages):
            w.writerow([f"{d:.17g}", f"{c:.17g}"])


def write_calibration_json(result: CalibrationResult, path) -> None:
    """Headline calibration numbers as a JSON sidecar."""
    payload = {
        "delta_star": result.delta_star,
        "achieved_coverage": result.achieved_coverage,
        "tau_alpha": result.tau_alpha,
        "K_effective": result.k_effective,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_coverage_csv(report: CoverageReport, path) -> None:
    """Observed coverage as CSV rows (alpha, observed_coverage, B_effective)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "observed_coverage", "B_effective"])
        for a, c in zip(report.alphas, report.observed):
            w.writerow([f"{a:.17g}", f"{c:.17g}", report.b_effective])
