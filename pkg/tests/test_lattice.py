import numpy as np
import pytest

from monitored_fermions.lattice import LatticeSpec, build_spectrum, dispersion, velocity_scales


@pytest.mark.parametrize("d,L", [(1, 2), (1, 7), (2, 2), (2, 3), (2, 6), (3, 4)])
def test_spectrum_diagonalizes_hopping(d, L):
    lat = LatticeSpec(d, L)
    spec = build_spectrum(lat)
    h = lat.hopping_matrix()
    V = spec.basis
    assert np.allclose(V @ V.conj().T, np.eye(lat.n_sites), atol=1e-12)
    # H = V^dagger diag(E) V
    assert np.allclose(V.conj().T @ np.diag(spec.energies) @ V, h, atol=1e-12)
    assert np.allclose(np.sort(np.linalg.eigvalsh(h)), spec.energies, atol=1e-12)


def test_energies_sorted_and_ties_ordered_by_momentum():
    spec = build_spectrum(LatticeSpec(2, 4))
    E = spec.energies
    assert np.all(np.diff(E) >= -1e-12)
    for e in np.unique(np.round(E, 10)):
        block = spec.momenta[np.round(E, 10) == e]
        assert [tuple(m) for m in block] == sorted(tuple(m) for m in block)


def test_spectrum_deterministic():
    a = build_spectrum(LatticeSpec(2, 6))
    b = build_spectrum(LatticeSpec(2, 6))
    assert np.array_equal(a.energies, b.energies)
    assert np.array_equal(a.basis, b.basis)


def test_dispersion_values():
    lat = LatticeSpec(2, 4)
    assert dispersion(lat, [0.0, 0.0]) == pytest.approx(-4.0)
    assert dispersion(lat, [np.pi, np.pi]) == pytest.approx(4.0)
    assert dispersion(lat, [np.pi / 2, 0.0]) == pytest.approx(-2.0)


def test_dispersion_rejects_incommensurate_momentum():
    with pytest.raises(ValueError):
        dispersion(LatticeSpec(2, 4), [0.3, 0.0])


def test_two_site_ring_has_doubled_bond():
    h = LatticeSpec(1, 2).hopping_matrix()
    assert np.allclose(h, [[0, -2], [-2, 0]])


@pytest.mark.parametrize("kwargs", [dict(d=0, L=4), dict(d=2, L=1), dict(d=2, L=4, J=0.0)])
def test_invalid_lattices(kwargs):
    with pytest.raises(ValueError):
        LatticeSpec(**kwargs)


def test_site_index_roundtrip():
    lat = LatticeSpec(3, 5)
    coords = lat.coords()
    for i in [0, 7, 63, 124]:
        assert lat.site_index(coords[i]) == i
    assert lat.site_index([5, -1, 0]) == lat.site_index([0, 4, 0])


def test_velocity_scales():
    v, v0 = velocity_scales(LatticeSpec(2, 4, J=1.5))
    assert v == pytest.approx(2 * 1.5)
    assert v0 == pytest.approx(np.sqrt(2) * 1.5)
