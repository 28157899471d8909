"""Finite-size-scaling collapse and related fits.

The collapse quality follows the local-master-curve method: every point
``(L, gamma)`` is rescaled to ``x = L^(1/nu) (gamma - gamma_c)``,
``y = value / L^zeta``, and compared with a weighted straight line through
the neighbouring points of the *other* system sizes.  The reduced chi^2 of
these comparisons is minimized with Nelder-Mead; error bars come from the
curvature of the quality at the minimum (``cov = 2 H^-1``, i.e. the
parameter shift that raises the quality by one).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

DEFAULT_WINDOW = (2.4, 3.4)


@dataclass
class ScalingDataset:
    L: np.ndarray
    gamma: np.ndarray
    value: np.ndarray
    err: np.ndarray

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        self.err = np.asarray(self.err, dtype=float)
        n = self.L.size
        if not (self.gamma.size == self.value.size == self.err.size == n):
            raise ValueError("dataset columns differ in length")
        if np.any(~(self.err > 0)):
            raise ValueError("all standard errors must be positive")

    def __len__(self):
        return self.L.size

    @property
    def sizes(self) -> np.ndarray:
        return np.unique(self.L)

    def window(self, lo: float, hi: float) -> "ScalingDataset":
        keep = (self.gamma >= lo) & (self.gamma <= hi)
        return ScalingDataset(self.L[keep], self.gamma[keep], self.value[keep], self.err[keep])

    def permuted(self, order) -> "ScalingDataset":
        return ScalingDataset(self.L[order], self.gamma[order], self.value[order], self.err[order])

    @classmethod
    def from_rows(cls, rows):
        L, g, v, e = (np.array(c, dtype=float) for c in zip(*rows))
        return cls(L, g, v, e)


@dataclass
class MasterCurve:
    x: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    Y: np.ndarray
    dY: np.ndarray
    used: np.ndarray  # False where fewer than two neighbours were available

    @property
    def n_excluded(self) -> int:
        return int((~self.used).sum())


def _check_sizes(dataset: ScalingDataset):
    if dataset.sizes.size < 2:
        raise ValueError("collapse needs at least two distinct system sizes")


def master_curve(dataset: ScalingDataset, nu: float, gamma_c: float,
                 zeta: float = 0.0) -> MasterCurve:
    """Rescale the data and estimate the master curve at every point.

    For each point, each other system size contributes the two points whose
    rescaled abscissas bracket it (none if the point lies outside that
    size's range); a weighted linear fit through them gives ``Y`` and ``dY``.
    """
    _check_sizes(dataset)
    x = dataset.L ** (1.0 / nu) * (dataset.gamma - gamma_c)
    scale = dataset.L**zeta
    y = dataset.value / scale
    dy = dataset.err / scale
    n = x.size

    groups = {}
    for size in dataset.sizes:
        idx = np.flatnonzero(dataset.L == size)
        groups[size] = idx[np.argsort(x[idx], kind="stable")]

    # weighted sums over the bracketing neighbours of every point
    sums = np.zeros((6, n))  # count, K, Kx, Ky, Kxx, Kxy
    for size, own in groups.items():
        xi = x[own]
        for other, idx in groups.items():
            if other == size or idx.size < 2:
                continue
            xs = x[idx]
            k = np.searchsorted(xs, xi, side="right")
            k[(k == xs.size) & (xs[-1] == xi)] -= 1  # right end of the range counts
            ok = (k > 0) & (k < xs.size)
            pair = np.stack([idx[k[ok] - 1], idx[k[ok]]])
            w = 1.0 / dy[pair] ** 2
            xn, yn = x[pair], y[pair]
            tgt = own[ok]
            sums[0, tgt] += 2
            sums[1, tgt] += w.sum(0)
            sums[2, tgt] += (w * xn).sum(0)
            sums[3, tgt] += (w * yn).sum(0)
            sums[4, tgt] += (w * xn * xn).sum(0)
            sums[5, tgt] += (w * xn * yn).sum(0)
    count, K, Kx, Ky, Kxx, Kxy = sums
    delta = K * Kxx - Kx**2
    used = (count >= 2) & (delta > 1e-300 * np.maximum(K * Kxx, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        Y = np.where(used, (Kxx * Ky - Kx * Kxy + x * (K * Kxy - Kx * Ky)) / delta, np.nan)
        dY = np.where(used, np.sqrt(np.maximum((Kxx - 2 * x * Kx + x * x * K) / delta, 0.0)),
                      np.nan)
    return MasterCurve(x, y, dy, Y, dY, used)


def quality(dataset: ScalingDataset, nu: float, gamma_c: float, zeta: float = 0.0) -> float:
    """Reduced chi^2 of the data around the local master curve."""
    if not nu > 0:
        return np.inf
    mc = master_curve(dataset, nu, gamma_c, zeta)
    if not mc.used.any():
        return np.inf
    u = mc.used
    terms = (mc.y[u] - mc.Y[u]) ** 2 / (mc.dy[u] ** 2 + mc.dY[u] ** 2)
    return float(terms.mean())


@dataclass
class CollapseResult:
    gamma_c: float
    nu: float
    zeta: float | None
    chi2: float
    covariance: np.ndarray
    errors: np.ndarray
    n_points: int
    excluded_points: int
    converged: bool
    iterations: int
    errors_reliable: bool
    window: tuple | None = None
    messages: list = field(default_factory=list)
    errors_coarse: np.ndarray | None = None

    @property
    def gamma_c_err(self) -> float:
        return float(self.errors[0])

    @property
    def nu_err(self) -> float:
        return float(self.errors[1])

    @property
    def zeta_err(self) -> float | None:
        return float(self.errors[2]) if self.zeta is not None else None

    def to_dict(self) -> dict:
        return {
            "gamma_c": self.gamma_c, "gamma_c_err": self.gamma_c_err,
            "nu": self.nu, "nu_err": self.nu_err,
            "zeta": self.zeta, "zeta_err": self.zeta_err,
            "chi2": self.chi2, "covariance": np.asarray(self.covariance).tolist(),
            "n_points": self.n_points, "excluded_points": self.excluded_points,
            "converged": self.converged, "iterations": self.iterations,
            "errors_reliable": self.errors_reliable,
            "window": list(self.window) if self.window else None,
            "messages": self.messages,
            "errors_coarse_step": (None if self.errors_coarse is None
                                   else np.asarray(self.errors_coarse).tolist()),
        }


def hessian(f, p, rel_step: float = 1e-3) -> np.ndarray:
    """Central-difference Hessian with per-parameter step ``rel_step * |p_i|``."""
    p = np.asarray(p, dtype=float)
    h = rel_step * np.where(p != 0, np.abs(p), 1.0)
    n = p.size
    H = np.zeros((n, n))
    f0 = f(p)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(p + ei) - 2 * f0 + f(p - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = (f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)) / (
                4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def fit_collapse(dataset: ScalingDataset, init=(2.9, 1.4), fit_zeta: bool = False,
                 zeta_init: float = 0.0, max_iter: int = 2000, window=None) -> CollapseResult:
    """Minimize :func:`quality` over ``(gamma_c, nu[, zeta])``."""
    if window is not None:
        dataset = dataset.window(*window)
    _check_sizes(dataset)
    g_lo, g_hi = dataset.gamma.min(), dataset.gamma.max()
    if not g_lo <= init[0] <= g_hi:
        raise ValueError(f"initial gamma_c {init[0]} outside data range [{g_lo}, {g_hi}]")
    x0 = [float(init[0]), float(init[1])] + ([float(zeta_init)] if fit_zeta else [])
    x0 = np.array(x0)

    def objective(p):
        return quality(dataset, p[1], p[0], p[2] if fit_zeta else 0.0)

    simplex = np.vstack([x0] + [x0 + 0.1 * np.eye(x0.size)[k] for k in range(x0.size)])
    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-4, "fatol": 1e-6,
                            "maxiter": max_iter, "maxfev": 20 * max_iter})
    messages = [] if res.success else [f"Nelder-Mead did not converge: {res.message}"]
    p = res.x
    H = hessian(objective, p)
    reliable = bool(np.all(np.isfinite(H)))
    try:
        cov = 2.0 * np.linalg.inv(H)
        reliable = reliable and bool(np.all(np.diag(cov) > 0))
    except np.linalg.LinAlgError:
        cov = np.full_like(H, np.nan)
        reliable = False
    if not reliable:
        messages.append("Hessian singular or not positive definite; error bars unreliable")
    errors = np.sqrt(np.abs(np.diag(cov)))
    # The quality surface has kinks wherever rescaled abscissas coincide, so
    # its curvature depends on the probe scale; report a ten times coarser
    # probe alongside.
    with np.errstate(divide="ignore", invalid="ignore"):
        coarse = np.sqrt(np.abs(np.diag(2.0 * np.linalg.pinv(hessian(objective, p, 1e-2)))))
    mc = master_curve(dataset, p[1], p[0], p[2] if fit_zeta else 0.0)
    return CollapseResult(
        gamma_c=float(p[0]), nu=float(p[1]), zeta=float(p[2]) if fit_zeta else None,
        chi2=float(res.fun), covariance=cov, errors=errors, n_points=int(mc.used.sum()),
        excluded_points=mc.n_excluded, converged=bool(res.success), iterations=int(res.nit),
        errors_reliable=reliable, window=tuple(window) if window else None, messages=messages,
        errors_coarse=coarse)


# ----------------------------------------------------------- synthetic data
def logistic_master(x):
    """Smooth decreasing stand-in for the covariance scaling function."""
    return 1.0 / (1.0 + np.exp(np.asarray(x) / 2.0))


def synthetic_dataset(gamma_c: float, nu: float, sizes, gammas, noise: float,
                      rng: np.random.Generator, master=logistic_master,
                      zeta: float = 0.0) -> ScalingDataset:
    """``L^zeta master(L^(1/nu)(gamma - gamma_c))`` with relative Gaussian noise."""
    L, g = np.meshgrid(np.asarray(sizes, float), np.asarray(gammas, float), indexing="ij")
    L, g = L.ravel(), g.ravel()
    exact = L**zeta * master(L ** (1 / nu) * (g - gamma_c))
    err = noise * exact
    value = exact + err * rng.standard_normal(exact.size)
    return ScalingDataset(L, g, value, err)


# --------------------------------------------------------- q -> 0 extrapolation
@dataclass
class Extrapolation:
    value: float
    error: float
    coefficients: np.ndarray
    covariance: np.ndarray


def extrapolate_q0(q, values, errors) -> Extrapolation:
    """Weighted least-squares cubic through exactly five points, evaluated at 0."""
    q = np.asarray(q, dtype=float)
    values = np.asarray(values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if not (q.shape == values.shape == errors.shape == (5,)):
        raise ValueError("extrapolation uses exactly five points")
    if np.unique(q).size < 4:
        raise ValueError("need at least four distinct abscissas for a cubic")
    if np.any(~(errors > 0)):
        raise ValueError("errors must be positive")
    A = np.vander(q, 4, increasing=True)
    w = 1.0 / errors
    coef, *_ = np.linalg.lstsq(A * w[:, None], values * w, rcond=None)
    cov = np.linalg.inv((A * w[:, None] ** 2).T @ A)
    return Extrapolation(float(coef[0]), float(np.sqrt(cov[0, 0])), coef, cov)


# -------------------------------------------------------------- crossings
@dataclass
class CrossingResult:
    estimate: float | None
    spread: float | None
    crossings: list  # (L1, L2, gamma)

    @property
    def absent(self) -> bool:
        return self.estimate is None


def crossing_locator(curves: dict) -> CrossingResult:
    """Crossings of consecutive-size curves ``{L: (gammas, values)}``.

    Each pair is compared on the union of its gamma grids within the
    overlap, with linear interpolation; every sign change of the difference
    gives one crossing.  Returns the median and half-range of all crossings.
    """
    if len(curves) < 2:
        raise ValueError("need curves for at least two sizes")
    sizes = sorted(curves)
    found = []
    for L1, L2 in zip(sizes, sizes[1:]):
        g1, v1 = (np.asarray(a, float) for a in curves[L1])
        g2, v2 = (np.asarray(a, float) for a in curves[L2])
        o1, o2 = np.argsort(g1), np.argsort(g2)
        g1, v1, g2, v2 = g1[o1], v1[o1], g2[o2], v2[o2]
        lo, hi = max(g1[0], g2[0]), min(g1[-1], g2[-1])
        grid = np.union1d(g1, g2)
        grid = grid[(grid >= lo) & (grid <= hi)]
        if grid.size < 2:
            continue
        diff = np.interp(grid, g2, v2) - np.interp(grid, g1, v1)
        for k in range(grid.size - 1):
            a, b = diff[k], diff[k + 1]
            if a == 0 and k > 0:
                continue  # already counted as the right end of the previous interval
            if a == 0:
                found.append((L1, L2, float(grid[k])))
            elif b == 0 or (a < 0) != (b < 0):
                t = a / (a - b)
                found.append((L1, L2, float(grid[k] + t * (grid[k + 1] - grid[k]))))
    if not found:
        return CrossingResult(None, None, [])
    gs = np.array([f[2] for f in found])
    return CrossingResult(float(np.median(gs)), float(0.5 * (gs.max() - gs.min())), found)
