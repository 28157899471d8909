import numpy as np
import pytest

from monitored_fermions.lattice import LatticeSpec, build_spectrum


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_orbitals(n_sites, n_particles, rng):
    """Orthonormal columns spanning a Haar-random ``n_particles``-dimensional subspace."""
    X = rng.normal(size=(n_sites, n_sites)) + 1j * rng.normal(size=(n_sites, n_sites))
    Q, R = np.linalg.qr(X)
    Q = Q * (np.diag(R) / np.abs(np.diag(R)))
    return Q[:, :n_particles]


def random_green(n_sites, n_particles, rng):
    U = random_orbitals(n_sites, n_particles, rng)
    return U.conj() @ U.T


@pytest.fixture
def spectrum_8x8():
    return build_spectrum(LatticeSpec(2, 8))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
