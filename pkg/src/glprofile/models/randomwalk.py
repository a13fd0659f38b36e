"""Lattice random-walk lifetime model with a moment-matching loss.

A particle walks on sites 1..N (site i at position x = i - 1). Site 1
absorbs: the first movement event there removes the particle. Site N
reflects: a right move is aborted and the particle stays put. Each step
the particle dies with probability p_d, otherwise moves with probability
p_m (right with probability p_r, left otherwise), and rests with any
remaining probability. The observable is the particle lifetime: the
number of steps taken up to and including the removing event.

The fitting loss compares empirical lifetime moments against moments of
the continuum approximation, a boundary value problem solved here by
finite differences, weighted by bootstrap variance estimates.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from ..core import LossModel
from ..space import ParameterSpace
from ..stats import RngStream

__all__ = [
    "TruncationError",
    "WalkParams",
    "Lattice",
    "LifetimeDataset",
    "MomentTable",
    "simulate_lifetime",
    "simulate_dataset",
    "solve_moment_bvp",
    "empirical_moments",
    "bootstrap_moment_variance",
    "cached_moment_variance",
    "moment_loss",
    "make_randomwalk_model",
    "write_lifetime_csv",
    "read_lifetime_csv",
    "write_moment_csv",
    "read_moment_csv",
]

VARIANCE_FLOOR = 1e-12

# walkers draw uniforms in blocks of this many steps at a time
_WALK_BLOCK = 1024


class TruncationError(RuntimeError):
    """A walker outlived the step budget.

    Signals a parameter regime with effectively infinite lifetimes. The
    ``steps`` attribute holds the number of steps taken so far.
    """

    def __init__(self, steps: int):
        super().__init__(
            f"walker still alive after {int(steps)} steps; "
            "lifetimes may be effectively infinite for these parameters"
        )
        self.steps = int(steps)


@dataclass(frozen=True)
class WalkParams:
    """Per-step event probabilities for the lattice walk.

    Death is resolved before movement, so ``p_d`` is the exact per-step
    death probability even when ``p_m + p_d`` exceeds one; in that regime
    the rest probability is zero and a movement event occurs with
    probability ``1 - p_d``, still split ``p_r : 1 - p_r`` between right
    and left. When ``p_m + p_d <= 1`` the marginal event probabilities
    are exactly ``p_d``, ``p_m`` and ``1 - p_m - p_d``.
    """

    p_m: float
    p_d: float
    p_r: float

    def __post_init__(self):
        for name in ("p_m", "p_d", "p_r"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
            object.__setattr__(self, name, value)
        # either death or leftward escape must be possible, else walks never end
        if self.p_d <= 0.0 and self.p_r >= 1.0:
            raise ValueError("need p_d > 0 or p_r < 1 so lifetimes are finite")


@dataclass(frozen=True)
class Lattice:
    """Sites 1..N at unit spacing; site 1 absorbs, site N reflects."""

    N: int

    def __post_init__(self):
        n = int(self.N)
        if n != self.N or n < 3:
            raise ValueError("N must be an integer >= 3")
        object.__setattr__(self, "N", n)

    @property
    def L(self) -> float:
        """Domain length: site i sits at x = i - 1, so x spans [0, N - 1]."""
        return float(self.N - 1)

    def site_position(self, site: int) -> float:
        return float(int(site) - 1)


class LifetimeDataset:
    """Observed lifetimes: m replicates for each of n release sites.

    ``positions`` is the n-vector of release sites and ``lifetimes`` the
    n x m matrix of step counts, one row per site. Both arrays are frozen
    after construction. Instances carry a private cache so that the
    bootstrap variance table, which depends on the data but not on the
    walk parameters, is computed once per dataset.
    """

    __slots__ = ("positions", "lifetimes", "_variance_cache")

    def __init__(self, positions, lifetimes):
        pos = np.asarray(positions, dtype=np.int64).copy()
        life = np.asarray(lifetimes, dtype=np.int64).copy()
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("positions must be a non-empty 1-d array of sites")
        if np.unique(pos).size != pos.size:
            raise ValueError("release sites must be unique")
        if np.any(pos < 2):
            raise ValueError("release sites must be >= 2 (site 1 absorbs)")
        if life.ndim != 2 or life.shape[0] != pos.size:
            raise ValueError("lifetimes must be an n x m matrix, one row per site")
        if life.shape[1] < 1:
            raise ValueError("need at least one replicate per site")
        if np.any(life < 1):
            raise ValueError("lifetimes must be positive integers")
        pos.setflags(write=False)
        life.setflags(write=False)
        self.positions = pos
        self.lifetimes = life
        self._variance_cache = {}

    @property
    def n(self) -> int:
        return int(self.positions.size)

    @property
    def m(self) -> int:
        return int(self.lifetimes.shape[1])

    def __eq__(self, other):
        if not isinstance(other, LifetimeDataset):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.lifetimes, other.lifetimes
        )

    def __repr__(self):
        return f"LifetimeDataset(n={self.n}, m={self.m})"


def _event_thresholds(params: WalkParams) -> tuple[float, float, float]:
    # one uniform per step: [0, t_die) death, [t_die, t_right) right move,
    # [t_right, t_left) left move, [t_left, 1) rest
    movement = min(params.p_m, 1.0 - params.p_d)
    t_die = params.p_d
    t_right = t_die + movement * params.p_r
    t_left = t_die + movement
    return t_die, t_right, t_left


def _walk_batch(params, lattice, start_site, generators, max_steps):
    """Walk one particle per generator until removal; returns lifetimes.

    Each particle consumes exactly one uniform per step from its own
    generator, in step order, so the results are identical to running the
    particles one at a time with the same streams. Draws are made in
    blocks purely for speed; the surplus draws of a particle removed
    mid-block are never used for anything.
    """
    t_die, t_right, t_left = _event_thresholds(params)
    n_sites = lattice.N
    count = len(generators)
    pos = np.full(count, int(start_site), dtype=np.int64)
    steps = np.zeros(count, dtype=np.int64)
    alive = np.ones(count, dtype=bool)
    consumed = 0
    while True:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            return steps
        if consumed >= max_steps:
            raise TruncationError(consumed)
        block = int(min(_WALK_BLOCK, max_steps - consumed))
        draws = np.empty((idx.size, block))
        for row, i in enumerate(idx):
            draws[row] = generators[i].random(block)
        sub_pos = pos[idx]
        sub_steps = steps[idx]
        sub_alive = np.ones(idx.size, dtype=bool)
        for col in range(block):
            act = np.flatnonzero(sub_alive)
            if act.size == 0:
                break
            u = draws[act, col]
            here = sub_pos[act]
            die = u < t_die
            right = (u >= t_die) & (u < t_right)
            left = (u >= t_right) & (u < t_left)
            at_absorber = here == 1
            removed = die | ((right | left) & at_absorber)
            shift = np.zeros(act.size, dtype=np.int64)
            shift[right & (here < n_sites)] = 1  # right move at site N is aborted
            shift[left] = -1
            shift[removed] = 0
            sub_pos[act] = here + shift
            sub_steps[act] += 1
            if removed.any():
                sub_alive[act[removed]] = False
        pos[idx] = sub_pos
        steps[idx] = sub_steps
        alive[idx] = sub_alive
        consumed += block


def simulate_lifetime(params, lattice, start_site, stream, max_steps=10**8):
    """Number of steps until the particle is removed (dies or absorbs)."""
    site = int(start_site)
    if not 2 <= site <= lattice.N:
        raise ValueError(f"start_site must lie in [2, {lattice.N}]")
    if int(max_steps) < 1:
        raise ValueError("max_steps must be >= 1")
    steps = _walk_batch(params, lattice, site, [stream.generator()], int(max_steps))
    return int(steps[0])


def simulate_dataset(params, lattice, positions, m, stream, max_steps=10**8):
    """m independent lifetimes per release site.

    The stream is split per (site, replicate), so any given lifetime is
    reproducible independently of the order and number of sites requested.
    """
    sites = [int(p) for p in positions]
    if len(sites) == 0:
        raise ValueError("positions must be non-empty")
    if len(set(sites)) != len(sites):
        raise ValueError("release sites must be unique")
    for site in sites:
        if not 2 <= site <= lattice.N:
            raise ValueError(f"release site {site} outside [2, {lattice.N}]")
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if int(max_steps) < 1:
        raise ValueError("max_steps must be >= 1")
    lifetimes = np.empty((len(sites), m), dtype=np.int64)
    for row, site in enumerate(sites):
        site_stream = stream.split(site)
        generators = [site_stream.split(j).generator() for j in range(m)]
        lifetimes[row] = _walk_batch(params, lattice, site, generators, int(max_steps))
    return LifetimeDataset(np.asarray(sites, dtype=np.int64), lifetimes)


@dataclass(frozen=True)
class MomentTable:
    """Lifetime moments of the continuum model on a position grid.

    ``values[k - 1, j]`` approximates the k-th moment at position
    ``x[j]``; the zeroth moment is identically one and not stored. D, v
    and d are the continuum diffusivity, drift and decay rate implied by
    the walk parameters.
    """

    order: int
    x: np.ndarray
    values: np.ndarray
    D: float
    v: float
    d: float

    def at_sites(self, sites) -> np.ndarray:
        """Moment columns for lattice sites (site i sits at x = i - 1)."""
        target = np.asarray(sites, dtype=np.int64) - 1
        idx = np.searchsorted(self.x, target.astype(float))
        idx = np.clip(idx, 0, self.x.size - 1)
        if not np.allclose(self.x[idx], target, rtol=0.0, atol=1e-9):
            raise ValueError("requested sites are not on the solved grid")
        return self.values[:, idx]


def continuum_coefficients(params: WalkParams) -> tuple[float, float, float]:
    """Diffusivity, drift and decay rate of the continuum limit."""
    D = params.p_m / 2.0
    v = params.p_m * (1.0 - 2.0 * params.p_r)
    d = params.p_d
    return D, v, d


def solve_moment_bvp(order, params, lattice, refine=1):
    """Moments of the continuum lifetime model by finite differences.

    Solves D M_k'' - v M_k' - d M_k = -k M_{k-1} recursively for
    k = 1..order with M_k(0) = 0 and M_k'(L) = 0, starting from M_0 = 1.
    Second-order central differences on the lattice grid; one tridiagonal
    solve per k. The absorbing end contributes a Dirichlet row and the
    reflecting end a one-sided second-order derivative row, folded into
    the last interior row to keep the system tridiagonal. ``refine``
    subdivides each unit cell for convergence studies; the returned grid
    has (N - 1) * refine + 1 points either way.
    """
    order = int(order)
    if order < 1:
        raise ValueError("order must be >= 1")
    if params.p_m <= 0.0:
        raise ValueError("p_m must be positive: the continuum model needs D > 0")
    refine = int(refine)
    if refine < 1:
        raise ValueError("refine must be >= 1")
    D, v, d = continuum_coefficients(params)
    n = (lattice.N - 1) * refine + 1
    h = lattice.L / (n - 1)
    if abs(v) * h / (2.0 * D) >= 1.0:
        warnings.warn(
            "grid Peclet number |v|h/(2D) >= 1; the discrete moments may be "
            "inaccurate or oscillatory",
            RuntimeWarning,
            stacklevel=2,
        )
    a = D / h**2 + v / (2.0 * h)
    b = -2.0 * D / h**2 - d
    c = D / h**2 - v / (2.0 * h)
    if a == 0.0:
        raise RuntimeError("reflecting-row elimination degenerate: D/h^2 + v/(2h) = 0")
    # banded layout for solve_banded: row 0 super-, 1 main, 2 sub-diagonal
    ab = np.zeros((3, n))
    ab[1, 0] = 1.0  # M_k(0) = 0
    ab[0, 1] = 0.0
    ab[1, 1:-1] = b
    ab[0, 2:] = c
    ab[2, : n - 2] = a
    # one-sided second-order M'(L) = 0 is M[n-3] - 4 M[n-2] + 3 M[n-1] = 0;
    # subtracting (1/a) times the last interior row removes M[n-3]
    ab[2, n - 2] = -4.0 - b / a
    ab[1, n - 1] = 3.0 - c / a
    x = np.linspace(0.0, lattice.L, n)
    values = np.empty((order, n))
    prev = np.ones(n)
    for k in range(1, order + 1):
        rhs = np.empty(n)
        rhs[0] = 0.0
        rhs[1 : n - 1] = -float(k) * prev[1 : n - 1]
        rhs[n - 1] = float(k) * prev[n - 2] / a
        try:
            sol = solve_banded((1, 1), ab, rhs)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded above
            raise RuntimeError("internal error: singular moment system") from exc
        values[k - 1] = sol
        prev = sol
    return MomentTable(order=order, x=x, values=values, D=D, v=v, d=d)


def empirical_moments(data: LifetimeDataset, order: int) -> np.ndarray:
    """Raw sample moments per release site: out[k - 1, i] = mean of t^k."""
    order = int(order)
    if order < 1:
        raise ValueError("order must be >= 1")
    t = data.lifetimes.astype(float)
    out = np.empty((order, data.n))
    power = np.ones_like(t)
    for k in range(order):
        power = power * t
        out[k] = power.mean(axis=1)
    return out


def bootstrap_moment_variance(data, order, resamples, stream):
    """Bootstrap variance of each sample moment, per release site.

    Resamples the m lifetimes of each site with replacement ``resamples``
    times, recomputes the moments, and returns their sample variance.
    Zero variances (degenerate data) are floored at VARIANCE_FLOOR with a
    warning so downstream weights stay finite.
    """
    order = int(order)
    resamples = int(resamples)
    if order < 1:
        raise ValueError("order must be >= 1")
    if data.m < 2:
        raise ValueError("need at least two replicates per site for a variance")
    if resamples < 2:
        raise ValueError("need at least two resamples for a variance")
    out = np.empty((order, data.n))
    for i in range(data.n):
        gen = stream.split(int(data.positions[i])).generator()
        idx = gen.integers(0, data.m, size=(resamples, data.m))
        res = data.lifetimes[i, idx].astype(float)
        power = np.ones_like(res)
        for k in range(order):
            power = power * res
            out[k, i] = power.mean(axis=1).var(ddof=1)
    degenerate = out <= 0.0
    if degenerate.any():
        warnings.warn(
            f"{int(degenerate.sum())} zero bootstrap variance(s) floored at "
            f"{VARIANCE_FLOOR:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        out[degenerate] = VARIANCE_FLOOR
    return out


def _dataset_fingerprint(data: LifetimeDataset) -> tuple[int, int]:
    digest = hashlib.sha256()
    digest.update(data.positions.tobytes())
    digest.update(data.lifetimes.tobytes())
    words = np.frombuffer(digest.digest()[:8], dtype=np.uint32)
    return int(words[0]), int(words[1])


def cached_moment_variance(data, order, resamples, seed):
    """Per-dataset variance table, computed once and cached on the dataset.

    The bootstrap stream is derived from the seed and a content hash of
    the data, so the table is bit-reproducible across runs and does not
    depend on object identity or call order.
    """
    key = (int(order), int(resamples), int(seed))
    table = data._variance_cache.get(key)
    if table is None:
        stream = RngStream(int(seed), _dataset_fingerprint(data))
        table = bootstrap_moment_variance(data, order, resamples, stream)
        table.setflags(write=False)
        data._variance_cache[key] = table
    return table


def moment_loss(data, params, lattice, order, variance_table):
    """Variance-weighted squared distance between model and sample moments.

    Sum over sites and moment orders of (M_k(x_i) - Mhat_k(x_i))^2 / Vhat_k(x_i).
    Terms are accumulated in ascending-site order so the value does not
    depend on how the dataset rows happen to be ordered.
    """
    order = int(order)
    weights = np.asarray(variance_table, dtype=float)
    if weights.shape != (order, data.n):
        raise ValueError(
            f"variance table shape {weights.shape} != ({order}, {data.n})"
        )
    if not np.all(weights > 0.0):
        raise ValueError("variance table must be strictly positive")
    if np.any(data.positions > lattice.N):
        raise ValueError("dataset has release sites beyond the lattice")
    table = solve_moment_bvp(order, params, lattice)
    model_vals = table.at_sites(data.positions)
    sample_vals = empirical_moments(data, order)
    terms = (model_vals - sample_vals) ** 2 / weights
    by_site = np.argsort(data.positions, kind="stable")
    return float(terms[:, by_site].T.sum())


def _default_space() -> ParameterSpace:
    return ParameterSpace(
        lower=np.array([0.0, 0.3]),
        upper=np.array([0.01, 0.9]),
        names=("p_d", "p_r"),
    )


def make_randomwalk_model(
    p_m=1.0,
    lattice=None,
    positions=None,
    m=1000,
    order=2,
    variance_resamples=200,
    variance_seed=0,
    space=None,
    max_steps=10**8,
) -> LossModel:
    """Two-parameter (p_d, p_r) walk model with the moment-matching loss.

    p_m is treated as fixed and known. Defaults: a 101-site lattice with a
    single release at the middle site, m = 1000 replicates, second-order
    moments, and 200 bootstrap resamples for the variance weights.
    """
    if lattice is None:
        lattice = Lattice(101)
    if positions is None:
        positions = ((lattice.N + 1) // 2,)
    positions = tuple(int(p) for p in positions)
    m = int(m)
    if space is None:
        space = _default_space()
    if space.dim != 2:
        raise ValueError("parameter space must be 2-d: (p_d, p_r)")
    p_m = float(p_m)

    def _params(theta):
        return WalkParams(p_m=p_m, p_d=float(theta[0]), p_r=float(theta[1]))

    def loss(dataset, theta):
        weights = cached_moment_variance(dataset, order, variance_resamples, variance_seed)
        try:
            return moment_loss(dataset, _params(theta), lattice, order, weights)
        except RuntimeError:
            # p_d ~ 0 with strong rightward drift makes the moments overflow
            # the factorization; such parameters are an arbitrarily bad fit
            return float("inf")

    def simulate(theta, size, stream):
        sites, replicates = size
        return simulate_dataset(
            _params(theta), lattice, sites, replicates, stream, max_steps
        )

    def size_of(dataset):
        return (tuple(int(s) for s in dataset.positions), dataset.m)

    def start(dataset):
        # seed the descent at neutral drift with the death rate that matches
        # the observed mean lifetime; starting on the first-moment valley
        # keeps the optimizer off the flat high-p_r ridge where the loss
        # ignores p_r entirely
        pr0 = float(np.clip(0.5, space.lower[1], space.upper[1]))
        lo, hi = float(space.lower[0]), float(space.upper[0])
        target = float(dataset.lifetimes.mean())
        sites = [int(s) for s in dataset.positions]

        def mean_life(pd):
            table = solve_moment_bvp(1, WalkParams(p_m=p_m, p_d=pd, p_r=pr0), lattice)
            return float(table.at_sites(sites)[0].mean())

        try:
            if target >= mean_life(lo):
                pd0 = lo
            elif target <= mean_life(hi):
                pd0 = hi
            else:
                pd0 = brentq(lambda pd: mean_life(pd) - target, lo, hi, xtol=1e-12)
        except RuntimeError:
            pd0 = min(max(1.0 / target, lo), hi)
        return np.array([pd0, pr0])

    return LossModel(
        space=space,
        loss=loss,
        simulate=simulate,
        size_of=size_of,
        name="randomwalk",
        default_size=(positions, m),
        default_start=start,
    )


def write_lifetime_csv(path, data: LifetimeDataset) -> None:
    """Write one (position, replicate, lifetime) row per observation."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["position", "replicate", "lifetime"])
        for i in range(data.n):
            site = int(data.positions[i])
            for j in range(data.m):
                writer.writerow([site, j, int(data.lifetimes[i, j])])


def read_lifetime_csv(path) -> LifetimeDataset:
    """Inverse of write_lifetime_csv; requires a rectangular layout."""
    groups: dict[int, list[int]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [col.strip() for col in header] != [
            "position",
            "replicate",
            "lifetime",
        ]:
            raise ValueError(f"{path}: expected header position,replicate,lifetime")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{line}: expected 3 columns")
            site, _, lifetime = (int(field) for field in row)
            groups.setdefault(site, []).append(lifetime)
    if not groups:
        raise ValueError(f"{path}: no data rows")
    counts = {len(values) for values in groups.values()}
    if len(counts) != 1:
        raise ValueError(f"{path}: unequal replicate counts across positions")
    positions = np.array(list(groups), dtype=np.int64)
    lifetimes = np.array([groups[int(site)] for site in positions], dtype=np.int64)
    return LifetimeDataset(positions, lifetimes)


def write_moment_csv(path, table: MomentTable) -> None:
    """Write one (x, k, M_k) row per grid point and moment order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "k", "M_k"])
        for k in range(1, table.order + 1):
            for j in range(table.x.size):
                writer.writerow(
                    ["%.17g" % table.x[j], k, "%.17g" % table.values[k - 1, j]]
                )


def read_moment_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a moment table back as (x, values); metadata is not stored."""
    rows: dict[int, dict[float, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [col.strip() for col in header] != ["x", "k", "M_k"]:
            raise ValueError(f"{path}: expected header x,k,M_k")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{line}: expected 3 columns")
            rows.setdefault(int(row[1]), {})[float(row[0])] = float(row[2])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    orders = sorted(rows)
    if orders != list(range(1, len(orders) + 1)):
        raise ValueError(f"{path}: moment orders must be 1..r")
    x = np.array(sorted(rows[1]))
    values = np.empty((len(orders), x.size))
    for k in orders:
        if sorted(rows[k]) != list(x):
            raise ValueError(f"{path}: grids differ across moment orders")
        values[k - 1] = [rows[k][xi] for xi in x]
    return x, values
