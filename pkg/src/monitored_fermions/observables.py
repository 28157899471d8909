"""Steady-state observables computed from coordinate-basis Green functions.

All per-trajectory functions take ``G[x, y] = <psi_x^dagger psi_y>`` and
site index arrays; regions are built with :class:`RegionSpec`.
Trajectory averages are plain sample means with standard errors from the
trajectory-to-trajectory scatter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import lgamma

import numpy as np
from scipy.special import xlogy, zeta

from .gaussian_state import NumericalDegradationError
from .lattice import LatticeSpec

EIGEN_TOL = 1e-8
MI_FACTOR = 2 * np.pi**2 / 3


# ------------------------------------------------------------------ statistics
class RunningStats:
    """Mergeable (count, mean, M2) accumulator for arrays of fixed shape."""

    def __init__(self, shape=()):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        out = RunningStats(np.shape(self.mean))
        n = self.count + other.count
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.count = n
        out.mean = self.mean + delta * (other.count / n)
        out.m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return out

    @property
    def std_err(self):
        """Standard error of the mean; ``None`` with fewer than two samples."""
        if self.count < 2:
            return None
        return np.sqrt(self.m2 / (self.count - 1) / self.count)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": np.asarray(self.mean).tolist(),
                "m2": np.asarray(self.m2).tolist()}

    @classmethod
    def from_dict(cls, data) -> "RunningStats":
        out = cls()
        out.count = int(data["count"])
        out.mean = np.asarray(data["mean"], dtype=float)
        out.m2 = np.asarray(data["m2"], dtype=float)
        return out


def mean_and_error(samples):
    """Mean over axis 0 and its standard error (``None`` for a single sample)."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    if n < 2:
        return mean, None
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(n)


# --------------------------------------------------------------------- regions
@dataclass(frozen=True)
class RegionSpec:
    """Box of sites given by one half-open interval ``[start, stop)`` per axis.

    Intervals may run past ``L`` and wrap periodically; ``None`` means the
    full axis.
    """

    intervals: tuple

    def sites(self, lattice: LatticeSpec) -> np.ndarray:
        if len(self.intervals) != lattice.d:
            raise ValueError(f"region has {len(self.intervals)} intervals for d={lattice.d}")
        axes = []
        for iv in self.intervals:
            if iv is None:
                axes.append(np.arange(lattice.L))
                continue
            start, stop = iv
            if not 0 < stop - start <= lattice.L:
                raise ValueError(f"interval {iv} is empty or longer than L={lattice.L}")
            axes.append(np.arange(start, stop) % lattice.L)
        mesh = np.meshgrid(*axes, indexing="ij")
        idx = np.ravel_multi_index(tuple(m.ravel() for m in mesh), lattice.shape)
        return np.sort(idx)


def strip(lattice: LatticeSpec, start: int, width: int, axis: int = 0) -> RegionSpec:
    """Slab of ``width`` layers along ``axis``, spanning all other axes."""
    intervals = [None] * lattice.d
    intervals[axis] = (start, start + width)
    return RegionSpec(tuple(intervals))


def covariance_regions(lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Two slabs of width L/4 separated by L/4 on both sides of the torus."""
    if lattice.L % 4:
        raise ValueError("covariance geometry needs L divisible by 4")
    q = lattice.L // 4
    return strip(lattice, 0, q).sites(lattice), strip(lattice, 2 * q, q).sites(lattice)


def _as_sites(region, lattice=None) -> np.ndarray:
    if isinstance(region, RegionSpec):
        return region.sites(lattice)
    sites = np.unique(np.asarray(region, dtype=int))
    if sites.size == 0:
        raise ValueError("region is empty")
    return sites


# ---------------------------------------------------------- density correlator
def density_correlator(green) -> np.ndarray:
    """Connected density-density correlator ``<n_x n_y> - <n_x><n_y>``."""
    g = np.asarray(green)
    c = -(np.abs(g) ** 2)
    c[np.diag_indices_from(c)] += g.diagonal().real
    return c


@lru_cache(maxsize=8)
def _partner_table(lattice: LatticeSpec) -> np.ndarray:
    xs = lattice.coords()
    # partner[x, r] = site x + r
    summed = (xs[:, None, :] + xs[None, :, :]) % lattice.L
    return np.ravel_multi_index(tuple(np.moveaxis(summed, -1, 0)), lattice.shape)


def displacement_profile(corr, lattice: LatticeSpec) -> np.ndarray:
    """``c(r) = (1/N) sum_x C[x, x + r]`` with periodic wrapping, shape ``lattice.shape``."""
    corr = np.asarray(corr)
    table = _partner_table(lattice)
    rows = np.arange(lattice.n_sites)[:, None]
    return corr[rows, table].mean(axis=0).reshape(lattice.shape)


@dataclass
class CorrelatorEstimate:
    """Trajectory- and translation-averaged ``C(x - x')``.

    ``mean`` and ``std_err`` are indexed by the displacement tuple.
    ``samples`` keeps one displacement profile per trajectory.
    """

    lattice: LatticeSpec
    mean: np.ndarray
    std_err: np.ndarray | None
    n_trajectories: int
    samples: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def value(self, displacement) -> tuple[float, float | None]:
        r = tuple(np.mod(displacement, self.lattice.L))
        err = None if self.std_err is None else float(self.std_err[r])
        return float(self.mean[r]), err


def translation_average(correlators, lattice: LatticeSpec, metadata=None) -> CorrelatorEstimate:
    """Average per-trajectory correlator matrices over translations and trajectories."""
    samples = np.array([displacement_profile(c, lattice) for c in correlators])
    return estimate_from_profiles(samples, lattice, metadata)


def estimate_from_profiles(samples, lattice: LatticeSpec, metadata=None) -> CorrelatorEstimate:
    samples = np.asarray(samples, dtype=float).reshape((-1,) + lattice.shape)
    mean, err = mean_and_error(samples)
    return CorrelatorEstimate(lattice, mean, err, samples.shape[0], samples, dict(metadata or {}))


def q_tilde(q):
    return 2 * np.sin(np.asarray(q) / 2)


@dataclass
class MomentumCorrelator:
    """``C(q) = sum_r c(r) exp(-i q.r)`` on the full grid plus the axis cut.

    The cut has one row per ``m = 0..L//2`` (``q = 2 pi m / L``), averaged over
    the ``d`` axes and over ``+-q``.
    """

    lattice: LatticeSpec
    grid_mean: np.ndarray
    grid_err: np.ndarray | None
    m: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    mean: np.ndarray
    std_err: np.ndarray | None
    n_trajectories: int


def _grid_transform(profiles, lattice):
    axes = tuple(range(1, lattice.d + 1))
    return np.fft.fftn(profiles, axes=axes).real


def _axis_cut(grids, lattice):
    L, d = lattice.L, lattice.d
    ms = np.arange(L // 2 + 1)
    cut = np.zeros((grids.shape[0], ms.size))
    for axis in range(d):
        for sign in (1, -1):
            index = [slice(None)] + [0] * d
            index[axis + 1] = (sign * ms) % L
            cut += grids[tuple(index)]
    return ms, cut / (2 * d)


def momentum_correlator(estimate: CorrelatorEstimate) -> MomentumCorrelator:
    lattice = estimate.lattice
    profiles = estimate.samples if estimate.samples is not None else estimate.mean[None]
    grids = _grid_transform(profiles, lattice)
    ms, cut = _axis_cut(grids, lattice)
    grid_mean, grid_err = mean_and_error(grids)
    cut_mean, cut_err = mean_and_error(cut)
    if estimate.samples is None:
        grid_err = cut_err = None
    q = 2 * np.pi * ms / lattice.L
    return MomentumCorrelator(lattice, grid_mean, grid_err, ms, q, q_tilde(q),
                              cut_mean, cut_err, estimate.n_trajectories)


# ------------------------------------------------------ cumulants and entropies
def _restricted_eigenvalues(green, sites) -> np.ndarray:
    g = np.asarray(green)
    block = g[np.ix_(sites, sites)]
    return np.linalg.eigvalsh(0.5 * (block + block.conj().T))


def cumulant2(green, region, lattice=None) -> float:
    """Particle-number variance ``Tr[G_A (1 - G_A)]``."""
    sites = _as_sites(region, lattice)
    block = np.asarray(green)[np.ix_(sites, sites)]
    return float(np.trace(block).real - np.sum(np.abs(block) ** 2))


def entanglement_entropy(green, region, lattice=None) -> float:
    """Von Neumann entropy (nats) of region ``A`` from the eigenvalues of ``G_A``."""
    lam = _restricted_eigenvalues(green, _as_sites(region, lattice))
    return _binary_entropy_sum(lam)


def _binary_entropy_sum(lam) -> float:
    if lam.size and (lam.min() < -EIGEN_TOL or lam.max() > 1 + EIGEN_TOL):
        raise NumericalDegradationError(
            f"correlation eigenvalues outside [0, 1]: [{lam.min():.3e}, {lam.max():.3e}]")
    lam = np.clip(lam, 0.0, 1.0)
    return float(-np.sum(xlogy(lam, lam) + xlogy(1 - lam, 1 - lam)))


def covariance(green, region_a, region_b, lattice=None) -> float:
    """``G_AB = -<<N_A N_B>> = sum_{x in A, y in B} |G_xy|^2`` for disjoint regions."""
    a = _as_sites(region_a, lattice)
    b = _as_sites(region_b, lattice)
    if np.intersect1d(a, b).size:
        raise ValueError("regions A and B overlap")
    return float(np.sum(np.abs(np.asarray(green)[np.ix_(a, b)]) ** 2))


def mutual_information(green, region_a, region_b, lattice=None) -> tuple[float, float]:
    """``I(A:B)`` and its ratio to ``(2 pi^2 / 3) G_AB`` (``nan`` when ``G_AB = 0``)."""
    a = _as_sites(region_a, lattice)
    b = _as_sites(region_b, lattice)
    g_ab = covariance(green, a, b)
    info = (entanglement_entropy(green, a) + entanglement_entropy(green, b)
            - entanglement_entropy(green, np.concatenate([a, b])))
    ratio = info / (MI_FACTOR * g_ab) if g_ab > 0 else float("nan")
    return info, ratio


def bernoulli_cumulants(probabilities, max_order: int) -> np.ndarray:
    """Cumulants 1..max_order of a sum of independent Bernoulli variables.

    Works on the Taylor coefficients ``b_n = kappa_n / n!`` of
    ``log(1 - p + p e^s)``, which stay of order ``pi^-n``; the factorial is
    applied at the end through ``lgamma``.
    """
    if not 1 <= max_order <= 40:
        raise ValueError("max_order must lie in 1..40")
    p = np.asarray(probabilities, dtype=float).ravel()
    n = max_order
    a = np.zeros((p.size, n + 1))
    for k in range(1, n + 1):
        a[:, k] = p * np.exp(-lgamma(k + 1))
    b = np.zeros_like(a)
    for order in range(1, n + 1):
        acc = np.zeros(p.size)
        for k in range(1, order):
            acc += k * b[:, k] * a[:, order - k]
        b[:, order] = a[:, order] - acc / order
    fact = np.exp([lgamma(k + 1) for k in range(1, n + 1)])
    return b[:, 1:].sum(axis=0) * fact


def fcs_cumulants(green, region, max_order: int, lattice=None) -> np.ndarray:
    """Full-counting-statistics cumulants ``C_A^(1..max_order)`` of ``N_A``."""
    lam = _restricted_eigenvalues(green, _as_sites(region, lattice))
    if lam.size and (lam.min() < -EIGEN_TOL or lam.max() > 1 + EIGEN_TOL):
        raise NumericalDegradationError("correlation eigenvalues outside [0, 1]")
    return bernoulli_cumulants(np.clip(lam, 0.0, 1.0), max_order)


def klich_levitov_partial_sums(cumulants) -> np.ndarray:
    """Partial sums ``sum_{q<=Q} 2 zeta(2q) C^(2q)`` for ``Q = 1, 2, ...``.

    ``cumulants[k]`` is the cumulant of order ``k + 1``.
    """
    cumulants = np.asarray(cumulants)
    even = cumulants[1::2]
    orders = 2 * np.arange(1, even.size + 1)
    return np.cumsum(2 * zeta(orders) * even)


# ----------------------------------------------------------- sample recorders
def chord_length(ell, L):
    return (L / np.pi) * np.sin(np.pi * np.asarray(ell) / L)


def entropy_profile_sample(green, lattice: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Entropy and second cumulant of slabs of width ``1..L//2`` starting at 0."""
    widths = np.arange(1, lattice.L // 2 + 1)
    ent = np.empty(widths.size)
    c2 = np.empty(widths.size)
    for i, w in enumerate(widths):
        sites = strip(lattice, 0, w).sites(lattice)
        lam = _restricted_eigenvalues(green, sites)
        ent[i] = _binary_entropy_sum(lam)
        c2[i] = float(np.sum(lam * (1 - lam)))
    return ent, c2


@dataclass
class EntropyProfile:
    ell: np.ndarray
    ell_tilde: np.ndarray
    entropy: np.ndarray
    entropy_err: np.ndarray | None
    c2: np.ndarray
    c2_err: np.ndarray | None
    ratio: np.ndarray
    ratio_err: np.ndarray | None
    n_trajectories: int


def ratio_with_error(num_samples, den_samples):
    """Ratio of sample means with a delta-method standard error."""
    num = np.asarray(num_samples, dtype=float)
    den = np.asarray(den_samples, dtype=float)
    n = num.shape[0]
    mn, md = num.mean(axis=0), den.mean(axis=0)
    ratio = mn / md
    if n < 2:
        return ratio, None
    vn = num.var(axis=0, ddof=1)
    vd = den.var(axis=0, ddof=1)
    cov = ((num - mn) * (den - md)).sum(axis=0) / (n - 1)
    var = (vn / md**2 - 2 * mn * cov / md**3 + mn**2 * vd / md**4) / n
    return ratio, np.sqrt(np.maximum(var, 0.0))


def profile_from_samples(entropy_samples, c2_samples, L: int) -> EntropyProfile:
    entropy_samples = np.atleast_2d(entropy_samples)
    c2_samples = np.atleast_2d(c2_samples)
    ell = np.arange(1, entropy_samples.shape[1] + 1)
    s, s_err = mean_and_error(entropy_samples)
    c2, c2_err = mean_and_error(c2_samples)
    ratio, ratio_err = ratio_with_error(entropy_samples, c2_samples)
    return EntropyProfile(ell, chord_length(ell, L), s, s_err, c2, c2_err, ratio, ratio_err,
                          entropy_samples.shape[0])


def entropy_cumulant_ratio_profile(greens, lattice: LatticeSpec) -> EntropyProfile:
    """Slab entropy, second cumulant and their ratio versus width, trajectory-averaged."""
    ent, c2 = zip(*(entropy_profile_sample(g, lattice) for g in greens))
    return profile_from_samples(ent, c2, lattice.L)


def trajectory_samples(green, lattice: LatticeSpec, observables) -> dict:
    """Per-trajectory records stored by the run driver."""
    out = {}
    if "correlator" in observables:
        out["profile"] = displacement_profile(density_correlator(green), lattice)
    if "covariance" in observables:
        a, b = covariance_regions(lattice)
        g_ab = covariance(green, a, b)
        info, _ = mutual_information(green, a, b)
        out["covariance"] = np.array([g_ab, info])
    if "entropy" in observables:
        ent, c2 = entropy_profile_sample(green, lattice)
        out["entropy"] = ent
        out["c2"] = c2
    out["density"] = np.array([np.mean(np.asarray(green).diagonal().real)])
    return out
