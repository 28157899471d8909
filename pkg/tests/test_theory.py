import numpy as np
import pytest

from monitored_fermions.theory import (
    NLSMParams, NoTransitionError, bare_coupling, beta, covariance_scaling,
    critical_conductance, critical_quantities, correlation_length, gaussian_correlator_q,
    gaussian_correlator_x, gaussian_cumulant, mean_free_path, rg_closed_form, rg_flow,
    scaling_forms, sphere_area,
)


def test_bare_coupling_and_cutoff():
    p = NLSMParams(d=2, gamma=1.0)
    assert bare_coupling(p) == pytest.approx(0.25 * np.sqrt(2))
    assert mean_free_path(p) == pytest.approx(1.0)
    assert p.G0 == pytest.approx(p.g0 * p.l0)
    assert NLSMParams(d=2, gamma=2.0).g0 == pytest.approx(p.g0 / 2)


@pytest.mark.parametrize("kwargs", [dict(gamma=0.0), dict(gamma=1.0, filling=1.0)])
def test_invalid_parameters(kwargs):
    with pytest.raises(ValueError):
        NLSMParams(d=2, **kwargs)


def test_sphere_areas():
    assert sphere_area(1) == pytest.approx(2 * np.pi)
    assert sphere_area(2) == pytest.approx(4 * np.pi)
    assert sphere_area(0) == pytest.approx(2.0)


def test_gaussian_correlators():
    p = NLSMParams(d=2, gamma=0.5)
    assert gaussian_correlator_q(p, -0.3) == pytest.approx(p.g0 * 0.3)
    r = 5.0
    assert gaussian_correlator_x(p, r) == pytest.approx(-2 * p.g0 / (4 * np.pi * r**3))
    # one-dimensional boundary: sigma_0 ell^0 = 2 points
    p1 = NLSMParams(d=1, gamma=0.5)
    assert gaussian_cumulant(p1, 10.0) == pytest.approx(p1.g0 / np.pi * 2 * np.log(10 / p1.l0))
    with pytest.raises(ValueError):
        gaussian_cumulant(p, 0.1)


@pytest.mark.parametrize("eps", [0.0, 0.1, 1.0, 2.0])
def test_rg_flow_matches_closed_form(eps):
    G0 = 0.5
    flow = rg_flow(G0, eps, 1.0, 1e10) if eps == 0 else rg_flow(G0, eps, 1.0, 1e10 if eps < 1 else 1e3)
    rel = np.abs(flow.G - flow.G_closed) / np.maximum(1.0, np.abs(flow.G_closed))
    assert rel.max() < 1e-10
    assert np.allclose(flow.Z, 1.0)


def test_beta_vanishes_at_critical_point():
    for eps in (0.1, 1.0, 2.0):
        assert beta(critical_conductance(eps), eps) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(NoTransitionError):
        critical_conductance(0.0)


def test_one_dimensional_flow_decreases_to_localization():
    flow = rg_flow(0.3, 0.0, 1.0, 1e6)
    assert np.all(np.diff(flow.G) < 0)
    assert flow.terminated  # reaches G = 0 at ell = exp(4 pi G0)
    assert flow.ell[-1] == pytest.approx(np.exp(4 * np.pi * 0.3), rel=1e-6)


def test_flow_direction_around_fixed_point():
    Gc = critical_conductance(1.0)
    up = rg_flow(1.1 * Gc, 1.0, 1.0, 100.0)
    down = rg_flow(0.9 * Gc, 1.0, 1.0, 100.0)
    assert up.G[-1] > up.G[0]
    assert down.terminated
    assert rg_closed_form(Gc, 1.0, 1e5) == pytest.approx(Gc)


def test_critical_quantities_two_dimensions():
    cq = critical_quantities(1.0, G0=0.2, l0=1.0)
    assert cq.G_c == pytest.approx(1 / (4 * np.pi))
    assert cq.nu == 1.0 and cq.zeta == 0.0
    assert cq.l_corr == pytest.approx(correlation_length(0.2, cq.G_c, 1.0))
    assert correlation_length(cq.G_c, cq.G_c, 1.0) == np.inf


def test_scaling_forms_branches():
    met = scaling_forms("metallic", 0.01, 1.0, 2)
    loc = scaling_forms("localized", 50.0, 1.0, 2)
    assert met[0].regime == "x<<1" and met[0].value == pytest.approx(1.01)
    assert loc[1].value == pytest.approx(np.exp(-50))
    with pytest.raises(ValueError):
        scaling_forms("critical", 1.0, 1.0, 2)
    assert covariance_scaling("critical", 3.0, 2, 0.08).value == pytest.approx(0.08)
    assert covariance_scaling("metallic", 3.0, 2, 0.08).value == pytest.approx(3.0)
