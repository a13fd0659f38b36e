"""Parameter boxes, interest/nuisance partitions, and profile grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned box of admissible parameter vectors.

    Parameters
    ----------
    lower, upper : array-like of float
        Finite bounds with ``lower[i] < upper[i]`` for every coordinate.
    names : tuple of str, optional
        Component names, one per coordinate.
    """

    lower: np.ndarray
    upper: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("need lower[i] < upper[i] for every coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        names = tuple(self.names)
        if names and len(names) != lo.size:
            raise ValueError("names must match the number of coordinates")
        if not names:
            names = tuple(f"theta{i}" for i in range(lo.size))
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, theta: np.ndarray, atol: float = 0.0) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(
            theta.shape == self.lower.shape
            and np.all(theta >= self.lower - atol)
            and np.all(theta <= self.upper + atol)
        )

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter name {name!r}") from None

    def subspace(self, indices) -> "ParameterSpace":
        idx = list(indices)
        return ParameterSpace(
            self.lower[idx], self.upper[idx], tuple(self.names[i] for i in idx)
        )


@dataclass(frozen=True)
class InterestPartition:
    """Split of parameter coordinates into interest and nuisance blocks.

    The two index tuples must be disjoint and together cover every coordinate
    of the space they are used with.  The nuisance block may be empty only in
    one dimension.
    """

    interest: tuple[int, ...]
    nuisance: tuple[int, ...]

    def __post_init__(self):
        interest = tuple(int(i) for i in self.interest)
        nuisance = tuple(int(i) for i in self.nuisance)
        if not interest:
            raise ValueError("interest block must be nonempty")
        both = interest + nuisance
        if len(set(both)) != len(both):
            raise ValueError("interest and nuisance indices must be disjoint")
        object.__setattr__(self, "interest", interest)
        object.__setattr__(self, "nuisance", nuisance)

    def validate_for(self, space: ParameterSpace) -> None:
        covered = sorted(self.interest + self.nuisance)
        if covered != list(range(space.dim)):
            raise ValueError(
                "partition must cover every coordinate of the space exactly once"
            )
        if space.dim > 1 and not self.nuisance:
            raise ValueError("nuisance block may be empty only when dim == 1")

    def assemble(self, phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
        """Full parameter vector from interest values ``phi`` and nuisance ``psi``."""
        theta = np.empty(len(self.interest) + len(self.nuisance), dtype=float)
        theta[list(self.interest)] = phi
        if self.nuisance:
            theta[list(self.nuisance)] = psi
        return theta


@dataclass(frozen=True)
class ProfileGrid:
    """Regular one-dimensional grid of interest-parameter values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        if not np.all(np.diff(v) > 0):
            raise ValueError("grid values must be strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def regular(cls, lower: float, upper: float, points: int) -> "ProfileGrid":
        """Evenly spaced grid ``lower + j*(upper-lower)/(points-1)``."""
        if points < 2:
            raise ValueError("need at least two grid points")
        if not upper > lower:
            raise ValueError("need upper > lower")
        # linspace pins both endpoints exactly, so grids that span a
        # parameter's full range stay inside its bounds
        return cls(np.linspace(float(lower), float(upper), int(points)))

    @property
    def size(self) -> int:
        return self.values.size
