"""Shared statistical utilities: splittable RNG streams and chi-square quantiles.

Every stochastic routine in this package draws from an :class:`RngStream`, a
stateless handle identified by a master seed plus a path of split labels.
Identical (seed, path) pairs replay identically, and streams with distinct
paths are statistically independent, so replicates can be farmed out to any
number of workers without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc


@dataclass(frozen=True)
class RngStream:
    """Deterministic, splittable random stream handle.

    Parameters
    ----------
    master_seed : int
        Non-negative 64-bit seed shared by every stream in one run.
    path : tuple of int
        Split labels leading from the root stream to this one.
    """

    master_seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master_seed must be a non-negative 64-bit integer")
        if any(int(k) < 0 for k in self.path):
            raise ValueError("split labels must be non-negative integers")
        object.__setattr__(self, "path", tuple(int(k) for k in self.path))

    def split(self, label: int) -> "RngStream":
        """Child stream for a non-negative integer label."""
        if int(label) < 0:
            raise ValueError("split label must be non-negative")
        return RngStream(self.master_seed, self.path + (int(label),))

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream.

        Calling this twice returns generators that produce identical draws;
        hold on to the generator when consuming a stream incrementally.
        """
        seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def split_stream(stream: RngStream, label: int) -> RngStream:
    """Functional alias for :meth:`RngStream.split`."""
    return stream.split(label)


def chi2_quantile(p: float, df: int) -> float:
    """Quantile of the chi-square distribution with ``df`` degrees of freedom.

    Inverts the regularized lower incomplete gamma CDF by bracketed bisection,
    run to an absolute tolerance of 1e-10 on the quantile.

    Parameters
    ----------
    p : float
        Probability level, strictly inside (0, 1).
    df : int
        Positive integer degrees of freedom.
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie strictly in (0, 1), got {p}")
    if int(df) < 1 or int(df) != df:
        raise ValueError(f"df must be a positive integer, got {df}")
    df = int(df)

    def cdf(x):
        # chi2 CDF = P(df/2, x/2), the regularized lower incomplete gamma
        return gammainc(df / 2.0, x / 2.0)

    # bracket the root: expand the upper end until the CDF exceeds p
    lo, hi = 0.0, max(4.0 * df, 8.0)
    while cdf(hi) < p:
        hi *= 2.0
        if hi > 1e300:
            raise RuntimeError("failed to bracket chi-square quantile")
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def resample_with_replacement(values: np.ndarray, stream: RngStream) -> np.ndarray:
    """Bootstrap resample of the leading axis of ``values``.

    Returns an array of the same shape whose rows are drawn uniformly with
    replacement from the input rows, using ``stream`` for the index draws.
    """
    values = np.asarray(values)
    m = values.shape[0] if values.ndim else 0
    if m == 0:
        raise ValueError("cannot resample an empty collection")
    idx = stream.generator().integers(0, m, size=m)
    return values[idx]
