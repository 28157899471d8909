"""Pure Gaussian (Slater-determinant) state of one trajectory.

The state is the correlation matrix ``gtilde[a, b] = <psi_a^dagger psi_b>``
in the Hamiltonian eigenbasis.  Unitary evolution only rotates phases,
``gtilde[a, b] *= exp(-i (E_b - E_a) dt)``, so internally the matrix is
kept in a frame fixed at ``frame_time`` and phases are applied to the
measurement vectors instead (see :mod:`monitored_fermions._kernels`).
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from . import _kernels
from .lattice import Spectrum

log = logging.getLogger(__name__)

EPS_CLICK = 1e-12
BORN_TOL = 1e-10
PURITY_TOL = 1e-8
REPURIFY_EVERY = 10_000


class NumericalDegradationError(RuntimeError):
    """Accumulated roundoff has pushed the state outside the physical set."""


class ForbiddenOutcomeError(ValueError):
    """A forced measurement outcome has (numerically) zero probability."""


class GaussianState:
    """Correlation matrix of a particle-number-conserving pure Gaussian state.

    Parameters
    ----------
    spectrum : Spectrum
        Eigenbasis in which ``gtilde`` is expressed.
    gtilde : (N, N) complex array
        Hermitian projector; copied.
    time : float
        Simulation time the matrix refers to.
    """

    def __init__(self, spectrum: Spectrum, gtilde, time: float = 0.0):
        gtilde = np.array(gtilde, dtype=np.complex128)
        n = spectrum.n_modes
        if gtilde.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {gtilde.shape}")
        self.spectrum = spectrum
        self._frame = np.ascontiguousarray(0.5 * (gtilde + gtilde.conj().T))
        self.frame_time = float(time)
        self.time = float(time)
        self.n_particles = int(round(np.trace(self._frame).real))
        self.n_updates = 0
        self.repurifications: list[tuple[float, float]] = []

    # ------------------------------------------------------------------ views
    def _phases(self) -> np.ndarray:
        return np.exp(-1j * self.spectrum.energies * (self.time - self.frame_time))

    @property
    def gtilde(self) -> np.ndarray:
        """Eigenbasis correlation matrix at the current time (a new array)."""
        u = self._phases()
        g = np.triu(u.conj()[:, None] * self._frame * u[None, :], 1)
        # mirror the upper triangle so the result is exactly Hermitian
        return g + g.conj().T + np.diag(self._frame.diagonal().real)

    def coordinate_green(self) -> np.ndarray:
        """``G[x, y] = <psi_x^dagger psi_y>`` at the current time."""
        return self.spectrum.to_coordinate(self.gtilde)

    def copy(self) -> "GaussianState":
        new = GaussianState.__new__(GaussianState)
        new.__dict__.update(self.__dict__)
        new._frame = self._frame.copy()
        new.repurifications = list(self.repurifications)
        return new

    def trace_defect(self) -> float:
        return abs(np.trace(self._frame).real - self.n_particles)

    def purity_defect(self) -> float:
        """``max |G^2 - G|`` (frame independent)."""
        a = self._frame
        return float(np.max(np.abs(a @ a - a)))

    # -------------------------------------------------------------- dynamics
    def evolve(self, dt: float) -> "GaussianState":
        """Advance by ``dt`` under the hopping Hamiltonian (exact)."""
        if dt < 0:
            raise ValueError(f"cannot evolve backwards (dt={dt})")
        self.time += dt
        return self

    def evolve_to(self, t: float) -> "GaussianState":
        return self.evolve(t - self.time)

    def _mode_vector(self, site: int) -> np.ndarray:
        if not 0 <= site < self.spectrum.n_modes:
            raise IndexError(f"site {site} out of range")
        return self.spectrum.basis_columns[site] * self._phases()

    def born_probability(self, site: int) -> float:
        """Probability that site ``site`` is found occupied."""
        w = self._mode_vector(site)
        p = np.vdot(w, self._frame @ w).real
        return _checked_probability(p, site)

    def apply_click(self, site: int) -> "GaussianState":
        w = self._mode_vector(site)
        gw = self._frame @ w
        p = _checked_probability(np.vdot(w, gw).real, site)
        if p <= EPS_CLICK:
            raise ForbiddenOutcomeError(f"click at site {site} has probability {p:.3g}")
        self._frame += np.outer(w, w.conj()) - np.outer(gw, gw.conj()) / p
        self._after_update()
        return self

    def apply_noclick(self, site: int) -> "GaussianState":
        w = self._mode_vector(site)
        gw = self._frame @ w
        p = _checked_probability(np.vdot(w, gw).real, site)
        if 1.0 - p <= EPS_CLICK:
            raise ForbiddenOutcomeError(f"no-click at site {site} has probability {1 - p:.3g}")
        r = w - gw
        self._frame += np.outer(r, r.conj()) / (1.0 - p) - np.outer(w, w.conj())
        self._after_update()
        return self

    def measure(self, site: int, u: float) -> int:
        """Sample an outcome with uniform draw ``u`` (click iff ``u < p``) and collapse."""
        p = self.born_probability(site)
        if p <= EPS_CLICK:
            click = False
        elif 1.0 - p <= EPS_CLICK:
            click = True
        else:
            click = u < p
        if click:
            self.apply_click(site)
        else:
            self.apply_noclick(site)
        return int(click)

    def _after_update(self):
        a = self._frame
        np.fill_diagonal(a, a.diagonal().real)
        self.n_updates += 1
        if self.n_updates % REPURIFY_EVERY == 0:
            self.maybe_repurify()

    def maybe_repurify(self, tol: float = PURITY_TOL) -> bool:
        """Project eigenvalues back onto {0, 1} if purity drifted past ``tol``."""
        defect = self.purity_defect()
        if defect <= tol:
            return False
        vals, vecs = np.linalg.eigh(self._frame)
        occ = np.zeros_like(vals)
        occ[np.argsort(vals)[::-1][: self.n_particles]] = 1.0
        self._frame = np.ascontiguousarray((vecs * occ) @ vecs.conj().T)
        self.repurifications.append((self.time, defect))
        log.info("re-purified state at t=%.4f (defect %.3e)", self.time, defect)
        return True

    def run_events(self, times, sites, uniforms=None, forced=None):
        """Evolve through a time-ordered measurement list with the compiled kernel.

        Parameters
        ----------
        times, sites : array_like
            Event times (non-decreasing, not earlier than ``self.time``) and sites.
        uniforms : array_like, optional
            One draw in [0, 1) per event; required unless every outcome is forced.
        forced : array_like of int, optional
            -1 to sample, 0/1 to impose the outcome.

        Returns
        -------
        outcomes : int8 array
        probs : float array
            Click probability of each event just before it was applied.
        """
        times = np.ascontiguousarray(times, dtype=np.float64)
        sites = np.ascontiguousarray(sites, dtype=np.int64)
        m = times.shape[0]
        if sites.shape != (m,):
            raise ValueError("times and sites must have equal length")
        if m and (times[0] < self.time or np.any(np.diff(times) < 0)):
            raise ValueError("event times must be sorted and not in the past")
        if m and (sites.min() < 0 or sites.max() >= self.spectrum.n_modes):
            raise IndexError("site index out of range")
        if forced is None:
            forced = np.full(m, -1, dtype=np.int8)
        forced = np.ascontiguousarray(forced, dtype=np.int8)
        if uniforms is None:
            if np.any(forced < 0):
                raise ValueError("uniform draws are required for sampled outcomes")
            uniforms = np.zeros(m)
        uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)

        outcomes = np.empty(m, dtype=np.int8)
        probs = np.empty(m)
        V = self.spectrum.basis_columns
        Vr = np.ascontiguousarray(V.real)
        Vi = np.ascontiguousarray(V.imag)
        E = np.ascontiguousarray(self.spectrum.energies)
        Ar = np.asfortranarray(self._frame.real)
        Ai = np.asfortranarray(self._frame.imag)

        start = 0
        while start < m:
            # chunk boundaries fall on multiples of REPURIFY_EVERY updates
            stop = min(m, start + REPURIFY_EVERY - self.n_updates % REPURIFY_EVERY)
            status, done = _kernels.run_events(
                Ar, Ai, Vr, Vi, E, self.frame_time,
                times[start:stop], sites[start:stop], uniforms[start:stop], forced[start:stop],
                EPS_CLICK, BORN_TOL, outcomes[start:stop], probs[start:stop],
            )
            self.n_updates += done
            if status != _kernels.OK:
                self._load_upper(Ar, Ai)
                k = start + done
                if status == _kernels.FORBIDDEN:
                    raise ForbiddenOutcomeError(
                        f"event {k}: outcome {forced[k]} at site {sites[k]} "
                        f"has click probability {probs[k]:.3g}")
                raise NumericalDegradationError(
                    f"event {k}: click probability {probs[k]!r} at site {sites[k]}")
            if stop < m or self.n_updates % REPURIFY_EVERY == 0:
                self.time = float(times[stop - 1])
                if self.n_updates % REPURIFY_EVERY == 0:
                    self._load_upper(Ar, Ai)
                    if self.maybe_repurify():
                        Ar = np.asfortranarray(self._frame.real)
                        Ai = np.asfortranarray(self._frame.imag)
            start = stop
        self._load_upper(Ar, Ai)
        if m:
            self.time = float(times[-1])
        return outcomes, probs

    def _load_upper(self, Ar, Ai):
        up = np.triu(Ar + 1j * Ai)
        full = up + np.triu(up, 1).conj().T
        np.fill_diagonal(full, np.diag(Ar))
        self._frame = np.ascontiguousarray(full)

    # ------------------------------------------------------------ checkpoint
    def save_checkpoint(self, path, cursor: int = 0):
        """Binary dump: header then row-major little-endian complex128 ``gtilde``."""
        lat = self.spectrum.lattice
        header = struct.pack(_CKPT_HEADER, _CKPT_MAGIC, lat.L, lat.d, self.n_particles,
                             self.time, cursor)
        data = self.gtilde.astype("<c16", copy=False)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(data).tobytes(order="C"))

    @classmethod
    def load_checkpoint(cls, path, spectrum: Spectrum):
        """Inverse of :meth:`save_checkpoint`; returns ``(state, cursor)``."""
        raw = Path(path).read_bytes()
        size = struct.calcsize(_CKPT_HEADER)
        magic, L, d, n_p, time, cursor = struct.unpack(_CKPT_HEADER, raw[:size])
        lat = spectrum.lattice
        if magic != _CKPT_MAGIC or (L, d) != (lat.L, lat.d):
            raise ValueError(f"checkpoint {path} does not match lattice L={lat.L}, d={lat.d}")
        n = spectrum.n_modes
        g = np.frombuffer(raw[size:], dtype="<c16").reshape(n, n)
        state = cls(spectrum, g, time=time)
        if state.n_particles != n_p:
            raise ValueError("checkpoint particle number is inconsistent with its matrix")
        return state, cursor


_CKPT_MAGIC = b"MFGS0001"
_CKPT_HEADER = "<8sqqqdQ"


def _checked_probability(p: float, site: int) -> float:
    if p < -BORN_TOL or p > 1.0 + BORN_TOL:
        raise NumericalDegradationError(f"click probability {p!r} at site {site}")
    return min(max(p, 0.0), 1.0)


# ----------------------------------------------------------------- initial states
def init_ground(spectrum: Spectrum, filling: float) -> GaussianState:
    """Fill the ``round(filling * N)`` lowest modes (spectrum order breaks ties)."""
    n_p = n_particles_for(spectrum.n_modes, filling)
    occ = np.zeros(spectrum.n_modes)
    occ[:n_p] = 1.0
    return GaussianState(spectrum, np.diag(occ))


def init_bitstring(spectrum: Spectrum, pattern, basis: str = "coordinate") -> GaussianState:
    """Product state with 0/1 occupations ``pattern`` in the given basis."""
    pattern = np.asarray(pattern)
    n = spectrum.n_modes
    if pattern.shape != (n,):
        raise ValueError(f"occupation pattern must have length {n}, got {pattern.shape}")
    if not np.all((pattern == 0) | (pattern == 1)):
        raise ValueError("occupation pattern must contain only 0 and 1")
    occ = np.diag(pattern.astype(float))
    if basis == "eigen":
        return GaussianState(spectrum, occ)
    if basis == "coordinate":
        return GaussianState(spectrum, spectrum.to_eigen(occ))
    raise ValueError(f"unknown basis {basis!r}; expected 'coordinate' or 'eigen'")


def random_bitstring(n_sites: int, n_particles: int, rng: np.random.Generator) -> np.ndarray:
    pattern = np.zeros(n_sites, dtype=np.int8)
    pattern[rng.permutation(n_sites)[:n_particles]] = 1
    return pattern


def from_coordinate_green(spectrum: Spectrum, green, time: float = 0.0) -> GaussianState:
    return GaussianState(spectrum, spectrum.to_eigen(np.asarray(green)), time=time)


def n_particles_for(n_sites: int, filling: float) -> int:
    if not 0.0 <= filling <= 1.0:
        raise ValueError(f"filling must lie in [0, 1], got {filling}")
    return int(round(filling * n_sites))
