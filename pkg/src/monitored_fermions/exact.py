"""Brute-force state-vector reference for small lattices (at most 12 sites).

Basis states are occupation bitmasks with a fixed particle number, ranked
with the combinatorial number system (colex order).  The bitstring with
occupied sites ``x1 < x2 < ... < xk`` stands for
``c+_{x1} c+_{x2} ... c+_{xk} |0>``, so ``c+_x`` and ``c_x`` pick up the sign
``(-1)^(number of occupied sites below x)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .gaussian_state import EPS_CLICK, ForbiddenOutcomeError, from_coordinate_green
from .lattice import LatticeSpec, Spectrum

MAX_SITES = 12


def rank(mask: int) -> int:
    r, k, pos = 0, 0, 0
    while mask:
        if mask & 1:
            k += 1
            r += comb(pos, k)
        mask >>= 1
        pos += 1
    return r


@lru_cache(maxsize=32)
def sector_basis(n_sites: int, n_particles: int) -> np.ndarray:
    if n_sites > MAX_SITES:
        raise ValueError(f"exact oracle is limited to {MAX_SITES} sites, got {n_sites}")
    masks = [sum(1 << s for s in occ) for occ in combinations(range(n_sites), n_particles)]
    masks.sort(key=rank)
    return np.array(masks, dtype=np.int64)


def _sign_below(mask: int, site: int) -> int:
    return -1 if bin(mask & ((1 << site) - 1)).count("1") % 2 else 1


@lru_cache(maxsize=32)
def _hop_table(n_sites: int, n_particles: int):
    """Entries ``(row, col, x, y, sign)`` of ``c+_x c_y`` in the sector basis."""
    basis = sector_basis(n_sites, n_particles)
    rows, cols, xs, ys, signs = [], [], [], [], []
    for col, mask in enumerate(basis):
        mask = int(mask)
        for y in range(n_sites):
            if not mask >> y & 1:
                continue
            s1 = _sign_below(mask, y)
            m1 = mask & ~(1 << y)
            for x in range(n_sites):
                if m1 >> x & 1:
                    continue
                s2 = _sign_below(m1, x)
                m2 = m1 | (1 << x)
                rows.append(rank(m2))
                cols.append(col)
                xs.append(x)
                ys.append(y)
                signs.append(s1 * s2)
    return tuple(np.array(a) for a in (rows, cols, xs, ys, signs))


@dataclass
class FockState:
    n_sites: int
    n_particles: int
    amplitudes: np.ndarray

    @property
    def basis(self) -> np.ndarray:
        return sector_basis(self.n_sites, self.n_particles)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def slater_state(orbitals) -> FockState:
    """``prod_j (sum_x U[x, j] c+_x) |0>`` with ``U`` of shape (sites, particles)."""
    U = np.asarray(orbitals, dtype=complex)
    n, k = U.shape
    basis = sector_basis(n, k)
    amps = np.empty(basis.size, dtype=complex)
    for i, mask in enumerate(basis):
        occ = [s for s in range(n) if int(mask) >> s & 1]
        amps[i] = np.linalg.det(U[occ, :]) if k else 1.0
    return FockState(n, k, amps)


def product_state(pattern) -> FockState:
    pattern = np.asarray(pattern, dtype=int)
    n, k = pattern.size, int(pattern.sum())
    mask = sum(1 << s for s in range(n) if pattern[s])
    amps = np.zeros(comb(n, k), dtype=complex)
    amps[rank(mask)] = 1.0
    return FockState(n, k, amps)


def many_body_hamiltonian(hopping, n_sites: int, n_particles: int) -> np.ndarray:
    rows, cols, xs, ys, signs = _hop_table(n_sites, n_particles)
    dim = comb(n_sites, n_particles)
    H = np.zeros((dim, dim), dtype=complex)
    np.add.at(H, (rows, cols), signs * np.asarray(hopping)[xs, ys])
    return H


def exact_evolve(state: FockState, hopping, dt: float) -> FockState:
    """Apply ``exp(-i H dt)`` with ``H = sum_xy h_xy c+_x c_y`` in the fixed-N sector."""
    H = many_body_hamiltonian(hopping, state.n_sites, state.n_particles)
    vals, vecs = np.linalg.eigh(H)
    amps = vecs @ (np.exp(-1j * vals * dt) * (vecs.conj().T @ state.amplitudes))
    return FockState(state.n_sites, state.n_particles, amps)


def occupation_probability(state: FockState, site: int) -> float:
    occupied = (state.basis >> site) & 1 == 1
    return float(np.sum(np.abs(state.amplitudes[occupied]) ** 2))


def exact_measure(state: FockState, site: int, forced: int | None = None,
                  rng: np.random.Generator | None = None):
    """Projective occupation measurement.

    Returns ``(new_state, outcome, p_click)`` where ``p_click`` is the
    pre-measurement probability of finding the site occupied.
    """
    p = occupation_probability(state, site)
    if forced is None:
        if rng is None:
            raise ValueError("need either a forced outcome or an rng")
        outcome = int(rng.random() < p)
    else:
        outcome = int(forced)
        if (p if outcome else 1 - p) <= EPS_CLICK:
            raise ForbiddenOutcomeError(f"outcome {outcome} at site {site} has probability ~0")
    keep = ((state.basis >> site) & 1) == outcome
    amps = np.where(keep, state.amplitudes, 0.0)
    amps = amps / np.linalg.norm(amps)
    return FockState(state.n_sites, state.n_particles, amps), outcome, p


def exact_green(state: FockState) -> np.ndarray:
    """``G[x, y] = <c+_x c_y>``."""
    rows, cols, xs, ys, signs = _hop_table(state.n_sites, state.n_particles)
    a = state.amplitudes
    G = np.zeros((state.n_sites, state.n_sites), dtype=complex)
    np.add.at(G, (xs, ys), signs * a[rows].conj() * a[cols])
    return G


def four_point(state: FockState, a: int, b: int, c: int, d: int) -> complex:
    """``<c+_a c+_b c_c c_d>`` by direct amplitude sums."""
    out = 0j
    for col, mask in enumerate(state.basis):
        amp = state.amplitudes[col]
        if amp == 0:
            continue
        m, sign = int(mask), 1
        for op, site in (("c", d), ("c", c), ("cd", b), ("cd", a)):
            occ = m >> site & 1
            if (op == "c") != bool(occ):
                sign = 0
                break
            sign *= _sign_below(m, site)
            m ^= 1 << site
        if sign:
            out += np.conj(state.amplitudes[rank(m)]) * sign * amp
    return out


def number_distribution(state: FockState, sites) -> np.ndarray:
    """Probability of finding ``n`` particles in ``sites``, ``n = 0..len(sites)``."""
    sites = list(sites)
    counts = np.zeros(state.basis.size, dtype=int)
    for s in sites:
        counts += (state.basis >> s) & 1
    return np.bincount(counts, weights=np.abs(state.amplitudes) ** 2, minlength=len(sites) + 1)


# -------------------------------------------------------------------- lockstep
@dataclass
class LockstepReport:
    max_green_deviation: float
    max_probability_deviation: float
    outcomes: list
    n_steps: int


def lockstep_compare(spectrum: Spectrum, orbitals, times, sites, outcomes=None,
                     rng: np.random.Generator | None = None,
                     engine: str = "kernel") -> LockstepReport:
    """Drive the Gaussian engine and the exact oracle through the same events.

    ``orbitals`` (sites x particles, orthonormal columns) fixes the initial
    Slater determinant.  Outcomes are taken from ``outcomes`` or sampled from
    the Gaussian Born probability with ``rng``.  ``engine`` selects the
    compiled event loop (``"kernel"``) or the dense per-event updates
    (``"numpy"``) on the Gaussian side.
    """
    lattice: LatticeSpec = spectrum.lattice
    U = np.asarray(orbitals, dtype=complex)
    green0 = U.conj() @ U.T
    gauss = from_coordinate_green(spectrum, green0)
    exact = slater_state(U)
    hopping = lattice.hopping_matrix()
    t_now = 0.0
    max_g = float(np.max(np.abs(gauss.coordinate_green() - exact_green(exact))))
    max_p = 0.0
    record = []
    for m, (t, x) in enumerate(zip(times, sites)):
        x = int(x)
        exact = exact_evolve(exact, hopping, t - t_now)
        t_now = t
        if engine == "numpy":
            gauss.evolve_to(t)
            p_g = gauss.born_probability(x)
        p_e = occupation_probability(exact, x)
        if outcomes is not None:
            outcome = int(outcomes[m])
        elif p_e <= EPS_CLICK or p_e >= 1 - EPS_CLICK:
            outcome = int(p_e >= 0.5)
        else:
            outcome = int(rng.random() < p_e)
        if engine == "numpy":
            (gauss.apply_click if outcome else gauss.apply_noclick)(x)
        else:
            _, probs = gauss.run_events([t], [x], forced=[outcome])
            p_g = probs[0]
        exact, _, _ = exact_measure(exact, x, forced=outcome)
        record.append(outcome)
        max_p = max(max_p, abs(p_g - p_e))
        max_g = max(max_g, float(np.max(np.abs(gauss.coordinate_green() - exact_green(exact)))))
    return LockstepReport(max_g, max_p, record, len(record))
