"""Hypercubic tight-binding lattice with periodic boundaries.

Sites and momenta are both labelled by integer d-tuples ``m`` in
``[0, L)^d``; the linear index is row-major (last axis fastest), i.e. the
same ordering as ``np.ndindex((L,) * d)``.  Momentum tuple ``m`` corresponds
to ``k = 2*pi*m/L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# energies closer than this are treated as degenerate when ordering the spectrum
_ENERGY_TIE_DECIMALS = 10


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry and hopping of a ``d``-dimensional periodic hypercubic lattice."""

    d: int
    L: int
    J: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"linear size must be an integer >= 2, got {self.L}")
        if not self.J > 0:
            raise ValueError(f"hopping J must be positive, got {self.J}")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.L,) * self.d

    def coords(self) -> np.ndarray:
        """Integer coordinates of all sites, shape ``(N, d)``, row-major order."""
        grids = np.indices(self.shape).reshape(self.d, -1)
        return np.ascontiguousarray(grids.T)

    def site_index(self, coord) -> int:
        coord = np.mod(np.asarray(coord, dtype=int), self.L)
        return int(np.ravel_multi_index(tuple(coord), self.shape))

    def hopping_matrix(self) -> np.ndarray:
        """Single-particle Hamiltonian in the coordinate basis.

        Every link contributes ``-J``; for ``L = 2`` both links along an axis
        join the same pair of sites, so their amplitudes add.
        """
        n = self.n_sites
        h = np.zeros((n, n))
        xs = self.coords()
        idx = np.arange(n)
        for axis in range(self.d):
            shifted = xs.copy()
            shifted[:, axis] = (shifted[:, axis] + 1) % self.L
            nbr = np.ravel_multi_index(tuple(shifted.T), self.shape)
            np.add.at(h, (idx, nbr), -self.J)
            np.add.at(h, (nbr, idx), -self.J)
        return h


def dispersion(spec: LatticeSpec, k) -> float:
    """Tight-binding energy ``-2J sum_i cos(k_i)``.

    ``k`` must lie on the momentum grid ``2*pi*m/L``; anything else raises
    ``ValueError``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (spec.d,):
        raise ValueError(f"expected a {spec.d}-component momentum, got shape {k.shape}")
    m = k * spec.L / (2 * np.pi)
    if np.max(np.abs(m - np.round(m))) > 1e-9:
        raise ValueError(f"momentum {tuple(k)} is not commensurate with L={spec.L}")
    return float(-2.0 * spec.J * np.sum(np.cos(k)))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Plane-wave eigenbasis of the hopping Hamiltonian.

    Attributes
    ----------
    lattice : LatticeSpec
    energies : (N,) float array, ascending
    momenta : (N, d) int array, momentum tuple ``m`` of each eigenmode
    basis : (N, N) complex array, ``basis[alpha, x] = exp(i k_alpha . x) / sqrt(N)``
    """

    lattice: LatticeSpec
    energies: np.ndarray
    momenta: np.ndarray
    basis: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.energies.shape[0]

    @cached_property
    def basis_columns(self) -> np.ndarray:
        """``basis.T`` as a C-contiguous array: row ``x`` is the mode vector of site ``x``."""
        return np.ascontiguousarray(self.basis.T)

    def to_coordinate(self, gtilde: np.ndarray) -> np.ndarray:
        """``V^dagger @ gtilde @ V``."""
        V = self.basis
        return V.conj().T @ gtilde @ V

    def to_eigen(self, green: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`to_coordinate`."""
        V = self.basis
        return V @ green @ V.conj().T


def build_spectrum(spec: LatticeSpec) -> Spectrum:
    """Diagonalize the lattice analytically.

    Modes are ordered by energy; degenerate energies (equal to 1e-10) are
    ordered lexicographically by momentum tuple, so the order is fully
    deterministic.
    """
    m = spec.coords()  # momentum tuples share the site enumeration
    k = 2 * np.pi * m / spec.L
    energies = -2.0 * spec.J * np.cos(k).sum(axis=1)
    rounded = np.round(energies, _ENERGY_TIE_DECIMALS)
    # lexsort: last key is primary
    keys = [m[:, i] for i in range(spec.d - 1, -1, -1)] + [rounded]
    order = np.lexsort(keys)
    m = m[order]
    energies = energies[order]

    xs = spec.coords()
    # phase k.x reduced modulo L in integers keeps it exact for large lattices
    kx = (m @ xs.T) % spec.L
    basis = np.exp(2j * np.pi * kx / spec.L) / np.sqrt(spec.n_sites)
    return Spectrum(spec, energies, m, basis)


def velocity_scales(spec: LatticeSpec) -> tuple[float, float]:
    """RMS band velocity ``v = sqrt(2d) J`` and ``v0 = v / sqrt(d)``."""
    v = np.sqrt(2 * spec.d) * spec.J
    return float(v), float(v / np.sqrt(spec.d))
