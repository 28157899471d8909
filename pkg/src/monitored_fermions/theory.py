"""Analytic predictions of the replica sigma-model description.

Everything here is one-loop: the beta function of the dimensionless
conductance is ``beta(G) = eps*G - R/(4 pi)`` with ``eps = d - 1`` and the
source renormalization ``Z`` does not flow.  Higher-order corrections have
unknown coefficients and are not included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gamma as gamma_fn


class NoTransitionError(ValueError):
    """Raised for ``eps <= 0``: the flow always runs to the localized fixed point."""


@dataclass(frozen=True)
class NLSMParams:
    d: int
    gamma: float
    J: float = 1.0
    filling: float = 0.5
    R: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.filling < 1:
            raise ValueError("filling must lie strictly between 0 and 1")

    @property
    def eps(self) -> float:
        return self.d - 1.0

    @property
    def v(self) -> float:
        return float(np.sqrt(2 * self.d) * self.J)

    @property
    def v0(self) -> float:
        return self.v / np.sqrt(self.d)

    @property
    def g0(self) -> float:
        return bare_coupling(self)

    @property
    def l0(self) -> float:
        return mean_free_path(self)

    @property
    def G0(self) -> float:
        """Dimensionless conductance at the cutoff, ``g0 * l0**eps``."""
        return self.g0 * self.l0**self.eps


def bare_coupling(params: NLSMParams) -> float:
    """``g0 = rho (1 - rho) v0 / gamma``."""
    return params.filling * (1 - params.filling) * params.v0 / params.gamma


def bare_coupling_raw(d: int, J: float, gamma: float, filling: float) -> float:
    """:func:`bare_coupling` without parameter validation (``rho`` may be 0 or 1)."""
    return filling * (1 - filling) * np.sqrt(2.0) * J / gamma


def mean_free_path(params: NLSMParams) -> float:
    """UV cutoff ``l0 = sqrt(d/2) J / gamma``."""
    return float(np.sqrt(params.d / 2) * params.J / params.gamma)


def sphere_area(d: float) -> float:
    """``sigma_d = 2 pi^((d+1)/2) / Gamma((d+1)/2)``."""
    return float(2 * np.pi ** ((d + 1) / 2) / gamma_fn((d + 1) / 2))


def gaussian_correlator_q(params: NLSMParams, q):
    """Gaussian-level ``C(q) = g0 |q|`` (bare ``Z0 = 1``)."""
    return params.g0 * np.abs(q)


def gaussian_correlator_x(params: NLSMParams, r):
    """Gaussian-level ``C(r) = -2 g0 / (sigma_d |r|^(d+1))``, valid for ``|r| > l0``."""
    r = np.abs(np.asarray(r, dtype=float))
    return -2 * params.g0 / (sphere_area(params.d) * r ** (params.d + 1))


def gaussian_cumulant(params: NLSMParams, ell, area=None):
    """Second particle-number cumulant of a ball of radius ``ell``.

    ``(g0/pi) sigma_{d-1} ell^(d-1) ln(ell/l0)``; pass ``area`` to replace
    ``sigma_{d-1} ell^(d-1)`` by the boundary area of a general region.
    """
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < params.l0):
        raise ValueError(f"ell must not be below the cutoff l0={params.l0:.4g}")
    if area is None:
        area = sphere_area(params.d - 1) * ell ** (params.d - 1)
    return params.g0 / np.pi * area * np.log(ell / params.l0)


# ---------------------------------------------------------------------- RG flow
def beta(G, eps: float, R: float = 1.0):
    return eps * np.asarray(G) - R / (4 * np.pi)


def critical_conductance(eps: float, R: float = 1.0) -> float:
    if eps <= 0:
        raise NoTransitionError(f"no critical point for eps={eps} (d <= 1)")
    return R / (4 * np.pi * eps)


def rg_closed_form(G0: float, eps: float, scale, R: float = 1.0):
    """Exact solution of the one-loop flow; ``scale = ell / l0``."""
    scale = np.asarray(scale, dtype=float)
    if eps == 0:
        return G0 - R / (4 * np.pi) * np.log(scale)
    Gc = R / (4 * np.pi * eps)
    return Gc + (G0 - Gc) * scale**eps


@dataclass
class RGFlow:
    ell: np.ndarray
    G: np.ndarray
    G_closed: np.ndarray
    Z: np.ndarray
    terminated: bool  # True when G reached zero before ell_max


def rg_flow(G0: float, eps: float, l0: float, ell_max: float, R: float = 1.0,
            n_points: int = 201, rtol: float = 1e-13, atol: float = 1e-14) -> RGFlow:
    """Integrate ``dG/dln(ell) = beta(G)`` from ``l0``; stops if ``G`` reaches 0."""
    if not G0 > 0:
        raise ValueError("G0 must be positive")
    s_max = np.log(ell_max / l0)

    def hits_zero(s, y):
        return y[0]

    hits_zero.terminal = True
    hits_zero.direction = -1
    s_eval = np.linspace(0.0, s_max, n_points)
    sol = solve_ivp(lambda s, y: beta(y, eps, R), (0.0, s_max), [G0], method="DOP853",
                    t_eval=s_eval, events=hits_zero, rtol=rtol, atol=atol)
    s = sol.t
    G = sol.y[0]
    if sol.status == 1:  # include the point where the flow reached G = 0
        s = np.append(s, sol.t_events[0][0])
        G = np.append(G, sol.y_events[0][0, 0])
    scale = np.exp(s)
    return RGFlow(l0 * scale, G, rg_closed_form(G0, eps, scale, R), np.ones_like(s),
                  terminated=sol.status == 1)


@dataclass(frozen=True)
class CriticalQuantities:
    G_c: float
    nu: float
    zeta: float
    l_corr: float | None = None


def correlation_length(G0: float, G_c: float, nu: float, l0: float = 1.0) -> float:
    """``l0 (|G0 - G_c| / G_c)^(-nu)``; infinite at criticality."""
    dev = abs(G0 - G_c) / G_c
    if dev == 0:
        return float("inf")
    return float(l0 * dev ** (-nu))


def critical_quantities(eps: float, R: float = 1.0, G0: float | None = None,
                        l0: float = 1.0) -> CriticalQuantities:
    """One-loop ``G_c = R/(4 pi eps)``, ``nu = 1/eps``, ``zeta = 0``."""
    Gc = critical_conductance(eps, R)
    nu = 1.0 / eps
    lc = None if G0 is None else correlation_length(G0, Gc, nu, l0)
    return CriticalQuantities(Gc, nu, 0.0, lc)


# ------------------------------------------------------------ scaling functions
@dataclass(frozen=True)
class ScalingValue:
    regime: str
    value: float


def scaling_forms(branch: str, x: float, nu: float, d: int) -> list[ScalingValue]:
    """Asymptotic branches of ``f(r / l_corr)``; no interpolation between them.

    ``branch`` is ``"metallic"`` (``G0 > G_c``) or ``"localized"``.
    Returns the small-``x`` form and the large-``x`` form with regime labels.
    """
    if x < 0:
        raise ValueError("x must be non-negative")
    if branch == "metallic":
        small = 1 + x ** (1 / nu)
        large = x ** (d - 1)
    elif branch == "localized":
        small = 1 - x ** (1 / nu)
        large = float(np.exp(-x))
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return [ScalingValue("x<<1", float(small)), ScalingValue("x>>1", float(large))]


def covariance_scaling(branch: str, x: float, d: int, G_c: float,
                       c1: float = 1.0, c2: float = 1.0, c3: float = 1.0) -> ScalingValue:
    """Covariance regimes ``c1 x^(d-1)``, ``c2 G_c``, ``exp(-c3 x)``.

    The geometry constants are O(1) and unknown; the defaults are placeholders.
    """
    if branch == "metallic":
        return ScalingValue("metallic", c1 * x ** (d - 1))
    if branch == "critical":
        return ScalingValue("critical", c2 * G_c)
    if branch == "localized":
        return ScalingValue("localized", float(np.exp(-c3 * x)))
    raise ValueError(f"unknown branch {branch!r}")
