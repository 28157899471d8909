"""Compiled inner loop for long measurement sequences.

The correlation matrix is held as its upper triangle, split into real and
imaginary Fortran-ordered float arrays, in a rotating frame: the physical
eigenbasis matrix at time ``t`` is ``conj(D) A D`` with
``D = diag(exp(-i E (t - t_frame)))``.  Unitary evolution therefore never
touches ``A``; a measurement at site ``x`` uses ``w = D v_x`` in place of
``v_x``.  Each rank-two update is fused with the matrix-vector product
needed by the following event, so every event costs one pass over the
triangle.
"""

import numpy as np
from numba import njit

OK = 0
DEGRADED = 1
FORBIDDEN = 2


@njit(cache=True, fastmath=True)
def _hemv_upper(Ar, Ai, wr, wi, outr, outi):
    n = Ar.shape[0]
    for i in range(n):
        outr[i] = 0.0
        outi[i] = 0.0
    for j in range(n):
        wjr = wr[j]
        wji = wi[j]
        accr = 0.0
        acci = 0.0
        for i in range(j):
            vr = Ar[i, j]
            vi = Ai[i, j]
            outr[i] += vr * wjr - vi * wji
            outi[i] += vr * wji + vi * wjr
            accr += vr * wr[i] + vi * wi[i]
            acci += vr * wi[i] - vi * wr[i]
        d = Ar[j, j]
        outr[j] += accr + d * wjr
        outi[j] += acci + d * wji


@njit(cache=True, fastmath=True)
def _update_and_hemv(Ar, Ai, pr, pi, qr, qi, s1, s2, wr, wi, outr, outi):
    """A += s1 p p^H + s2 q q^H (upper triangle), then out = A w."""
    n = Ar.shape[0]
    for i in range(n):
        outr[i] = 0.0
        outi[i] = 0.0
    for j in range(n):
        pjr = pr[j] * s1
        pji = -pi[j] * s1
        qjr = qr[j] * s2
        qji = -qi[j] * s2
        wjr = wr[j]
        wji = wi[j]
        accr = 0.0
        acci = 0.0
        for i in range(j):
            vr = Ar[i, j] + pr[i] * pjr - pi[i] * pji + qr[i] * qjr - qi[i] * qji
            vi = Ai[i, j] + pr[i] * pji + pi[i] * pjr + qr[i] * qji + qi[i] * qjr
            Ar[i, j] = vr
            Ai[i, j] = vi
            outr[i] += vr * wjr - vi * wji
            outi[i] += vr * wji + vi * wjr
            accr += vr * wr[i] + vi * wi[i]
            acci += vr * wi[i] - vi * wr[i]
        d = Ar[j, j] + pr[j] * pjr - pi[j] * pji + qr[j] * qjr - qi[j] * qji
        Ar[j, j] = d
        Ai[j, j] = 0.0
        outr[j] += accr + d * wjr
        outi[j] += acci + d * wji


@njit(cache=True)
def _frame_vector(Vr, Vi, energies, site, tau, wr, wi):
    for a in range(energies.shape[0]):
        c = np.cos(energies[a] * tau)
        s = -np.sin(energies[a] * tau)
        vr = Vr[site, a]
        vi = Vi[site, a]
        wr[a] = vr * c - vi * s
        wi[a] = vr * s + vi * c


@njit(cache=True)
def run_events(Ar, Ai, Vr, Vi, energies, t_frame, times, sites, uniforms,
               forced, eps, tol, outcomes, probs):
    """Apply a time-ordered list of measurements in place.

    ``forced[m]`` is -1 to sample the outcome (click iff ``uniforms[m] < p``)
    or 0/1 to impose it.  Returns ``(status, m)`` where ``m`` is the number
    of events applied; on failure it is the index of the offending event.
    """
    n = energies.shape[0]
    n_events = times.shape[0]
    if n_events == 0:
        return OK, 0
    wr = np.empty(n)
    wi = np.empty(n)
    ar = np.empty(n)
    ai = np.empty(n)
    qr = np.empty(n)
    qi = np.empty(n)
    nwr = np.zeros(n)
    nwi = np.zeros(n)
    _frame_vector(Vr, Vi, energies, sites[0], times[0] - t_frame, wr, wi)
    _hemv_upper(Ar, Ai, wr, wi, ar, ai)
    for m in range(n_events):
        p = 0.0
        for a in range(n):
            p += wr[a] * ar[a] + wi[a] * ai[a]
        probs[m] = p
        if p < -tol or p > 1.0 + tol:
            return DEGRADED, m
        p = min(max(p, 0.0), 1.0)
        f = forced[m]
        if f < 0:
            if p <= eps:
                click = False
            elif 1.0 - p <= eps:
                click = True
            else:
                click = uniforms[m] < p
        else:
            click = f == 1
            if (click and p <= eps) or ((not click) and 1.0 - p <= eps):
                return FORBIDDEN, m
        outcomes[m] = 1 if click else 0
        if click:
            s1 = 1.0
            s2 = -1.0 / p
            for a in range(n):
                qr[a] = ar[a]
                qi[a] = ai[a]
        else:
            s1 = -1.0
            s2 = 1.0 / (1.0 - p)
            for a in range(n):
                qr[a] = wr[a] - ar[a]
                qi[a] = wi[a] - ai[a]
        if m + 1 < n_events:
            _frame_vector(Vr, Vi, energies, sites[m + 1], times[m + 1] - t_frame, nwr, nwi)
        else:
            nwr[:] = 0.0
            nwi[:] = 0.0
        _update_and_hemv(Ar, Ai, wr, wi, qr, qi, s1, s2, nwr, nwi, ar, ai)
        wr, nwr = nwr, wr
        wi, nwi = nwi, wi
    return OK, n_events
