"""Randomised invariants checked with hypothesis."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_green
from monitored_fermions.collapse import extrapolate_q0
from monitored_fermions.gaussian_state import from_coordinate_green
from monitored_fermions.lattice import LatticeSpec, build_spectrum
from monitored_fermions.observables import bernoulli_cumulants, entanglement_entropy
from monitored_fermions.theory import rg_closed_form, rg_flow

SPEC = build_spectrum(LatticeSpec(2, 3))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_p=st.integers(1, 8), site=st.integers(0, 8),
       dt=st.floats(0, 10), u=st.floats(0, 1, exclude_max=True))
def test_measurement_preserves_projector(seed, n_p, site, dt, u):
    g = random_green(9, n_p, np.random.default_rng(seed))
    state = from_coordinate_green(SPEC, g)
    state.evolve(dt)
    outcome = state.measure(site, u)
    G = state.coordinate_green()
    assert abs(G[site, site].real - outcome) < 1e-10
    assert state.purity_defect() < 1e-10
    assert state.trace_defect() < 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 8))
def test_entropy_bounds(seed, size):
    g = random_green(9, 4, np.random.default_rng(seed))
    sites = np.arange(size)
    s = entanglement_entropy(g, sites)
    assert -1e-12 <= s <= min(size, 9 - size) * np.log(2) + 1e-12
    # pure state: complementary regions have equal entropy
    assert abs(s - entanglement_entropy(g, np.arange(size, 9))) < 1e-9


@settings(max_examples=50, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_particle_hole_symmetry_of_cumulants(p):
    k = bernoulli_cumulants(p, 10)
    kh = bernoulli_cumulants(1 - np.asarray(p), 10)
    signs = (-1.0) ** np.arange(1, 11)
    scale = np.maximum(1.0, np.abs(k))
    assert np.all(np.abs(kh[1:] - signs[1:] * k[1:]) <= 1e-9 * scale[1:])
    assert abs(k[0] + kh[0] - len(p)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(c=st.lists(st.floats(-5, 5), min_size=4, max_size=4), seed=st.integers(0, 1000))
def test_extrapolation_exact_for_cubics(c, seed):
    rng = np.random.default_rng(seed)
    q = np.sort(rng.uniform(0.1, 2.0, 5)) + np.arange(5) * 0.05
    vals = c[0] + c[1] * q + c[2] * q**2 + c[3] * q**3
    ex = extrapolate_q0(q, vals, rng.uniform(0.1, 1, 5))
    assert abs(ex.value - c[0]) <= 1e-9 * max(1.0, max(abs(x) for x in c))


@settings(max_examples=30, deadline=None)
@given(G0=st.floats(0.01, 3.0), eps=st.sampled_from([0.0, 0.1, 0.5, 1.0]))
def test_rg_flow_matches_closed_form(G0, eps):
    flow = rg_flow(G0, eps, 1.0, 1e4)
    ref = rg_closed_form(G0, eps, flow.ell)
    assert np.all(np.abs(flow.G - ref) <= 1e-10 * np.maximum(1.0, np.abs(ref)))
