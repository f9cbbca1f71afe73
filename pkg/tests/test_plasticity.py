import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from agfem2d.plasticity import (MaterialParams, PointHistory, dev_norm,
                                elastic_tangent, q_hardening, stress_update,
                                stress_update_batch, tangent_vs_fd,
                                yield_function)

STEEL = MaterialParams(youngs_modulus=210e9, poisson_ratio=0.3, yield_stress=240e6,
                       hardening_modulus=0.0)
HARDENING = MaterialParams(youngs_modulus=210e9, poisson_ratio=0.3, yield_stress=240e6,
                           hardening_modulus=0.5e9, theta_iso=1.0)
SATURATING = MaterialParams(youngs_modulus=210e9, poisson_ratio=0.3, yield_stress=240e6,
                            hardening_modulus=0.2e9, theta_iso=1.0,
                            saturation_inf=5e7, saturation_0=0.0, saturation_rate=10.0)


# ---------------------------------------------------------------- oracle
# Independent return-mapping oracle: plain 3x3 tensor algebra + brentq root
# finding of the yield consistency per step.

def _to_tensor(v):
    return np.array([[v[0], v[3] / 2.0, 0.0],
                     [v[3] / 2.0, v[1], 0.0],
                     [0.0, 0.0, v[2]]])


def _to_voigt_stress(t):
    return np.array([t[0, 0], t[1, 1], t[2, 2], t[0, 1]])


def oracle_update(eps_voigt, alpha, ep_voigt, params):
    E, nu = params.youngs_modulus, params.poisson_ratio
    g = E / (2 * (1 + nu))
    kap = E / (3 * (1 - 2 * nu))
    th, H = params.theta_iso, params.hardening_modulus
    dK = params.saturation_inf - params.saturation_0
    delta = params.saturation_rate
    sy = params.yield_stress

    def radius(a):
        return sy + th * H * a + dK * (1.0 - math.exp(-delta * a))

    eps = _to_tensor(eps_voigt)
    ep = _to_tensor(ep_voigt)
    ee = eps - ep
    s_tr = 2 * g * (ee - np.trace(ee) / 3.0 * np.eye(3))
    p = kap * np.trace(eps)
    norm = math.sqrt(np.sum(s_tr * s_tr))
    phi = 0.5 * norm - math.sqrt(2.0 / 3.0) * radius(alpha)
    if phi <= 0:
        sig = p * np.eye(3) + s_tr
        return _to_voigt_stress(sig), alpha, ep_voigt.copy()

    def resid(dg):
        return (0.5 * (norm - 2 * g * dg)
                - math.sqrt(2.0 / 3.0) * radius(alpha + math.sqrt(2.0 / 3.0) * dg))

    dg = brentq(resid, 0.0, norm / (2 * g), xtol=1e-16, rtol=9e-16)
    n_hat = s_tr / norm
    sig = p * np.eye(3) + s_tr - 2 * g * dg * n_hat
    ep_new = ep + dg * n_hat
    a_new = alpha + math.sqrt(2.0 / 3.0) * dg
    ep_v = np.array([ep_new[0, 0], ep_new[1, 1], ep_new[2, 2], 2 * ep_new[0, 1]])
    return _to_voigt_stress(sig), a_new, ep_v


# ---------------------------------------------------------------- hardening law

def test_q_vanishes_at_zero():
    assert q_hardening(0.0, SATURATING) == 0.0


def test_q_linear_term_only():
    p = MaterialParams(210e9, 0.3, 240e6, hardening_modulus=0.2e9, theta_iso=1.0,
                       saturation_inf=1e8, saturation_0=1e8, saturation_rate=0.0)
    assert q_hardening(0.01, p) == pytest.approx(-2e6, rel=1e-14)


def test_q_saturating_value_frozen_from_extended_precision():
    # theta=1, H=0.2e9, K_inf - K_0 = 5e7, delta=10, alpha=0.05, evaluated with
    # mpmath at 50 digits
    p = MaterialParams(210e9, 0.3, 240e6, hardening_modulus=0.2e9, theta_iso=1.0,
                       saturation_inf=5e7, saturation_0=0.0, saturation_rate=10.0)
    assert q_hardening(0.05, p) == pytest.approx(-29673467.01436833, rel=1e-14)


# ---------------------------------------------------------------- yield function

def test_yield_at_zero_stress():
    assert yield_function(np.zeros(4), 0.0, STEEL) == pytest.approx(
        -math.sqrt(2.0 / 3.0) * 240e6)


def test_yield_onset_norm_is_twice_sqrt23_sigma_y():
    target = 2.0 * math.sqrt(2.0 / 3.0) * STEEL.yield_stress
    s = np.array([1.0, -0.5, -0.5, 0.3])
    s *= target / dev_norm(s)
    assert yield_function(s, 0.0, STEEL) == pytest.approx(0.0, abs=1e-6)


def test_yield_matches_componentwise_reference():
    rng = np.random.default_rng(2)
    for _ in range(20):
        s = rng.standard_normal(4) * 1e8
        s[2] = -s[0] - s[1]                      # traceless
        a = float(rng.uniform(0, 0.1))
        ref = 0.5 * math.sqrt(s[0] ** 2 + s[1] ** 2 + s[2] ** 2 + 2 * s[3] ** 2) \
            - math.sqrt(2.0 / 3.0) * (240e6 - float(q_hardening(a, HARDENING)))
        assert yield_function(s, a, HARDENING) == pytest.approx(ref, rel=1e-14)


# ---------------------------------------------------------------- stress update

def test_small_strain_below_yield_is_elastic():
    eps = np.array([1e-4, -2e-5, 0.0, 3e-5])
    res = stress_update(eps, PointHistory(), STEEL)
    assert not res.plastic
    np.testing.assert_allclose(res.sigma, elastic_tangent(STEEL) @ eps, rtol=1e-14)
    assert res.new_history.alpha == 0.0
    np.testing.assert_array_equal(res.tangent, elastic_tangent(STEEL))


def test_perfect_plasticity_returns_to_yield_surface():
    for scale in (2.0, 5.0, 50.0):
        eps = scale * np.array([3e-3, -1e-3, 0.0, 2e-3])
        res = stress_update(eps, PointHistory(), STEEL)
        assert res.plastic
        s = res.sigma - np.array([1, 1, 1, 0]) * res.sigma[:3].mean()
        phi = yield_function(s, res.new_history.alpha, STEEL)
        assert abs(phi) <= 1e-9 * STEEL.yield_stress


def test_uniaxial_monotone_history_matches_oracle():
    params = HARDENING
    hist = PointHistory()
    alpha_o = 0.0
    ep_o = np.zeros(4)
    for k in range(1, 21):
        eps = np.array([0.002 * k / 20.0 * 10, 0.0, 0.0, 0.0])
        res = stress_update(eps, hist, params)
        sig_o, alpha_o, ep_o = oracle_update(eps, alpha_o, ep_o, params)
        scale = np.abs(sig_o).max() + params.yield_stress
        np.testing.assert_allclose(res.sigma, sig_o, atol=1e-8 * scale)
        assert res.new_history.alpha == pytest.approx(alpha_o, abs=1e-8 * max(1e-12, alpha_o))
        hist = res.new_history
    assert hist.alpha > 0


def test_random_histories_match_oracle_all_param_sets():
    rng = np.random.default_rng(17)
    for params in (STEEL, HARDENING, SATURATING):
        for _ in range(20):
            hist = PointHistory()
            alpha_o, ep_o = 0.0, np.zeros(4)
            eps = np.zeros(4)
            for _ in range(10):
                eps = eps + rng.standard_normal(4) * 2e-3
                eps[2] = 0.0
                res = stress_update(eps, hist, params)
                sig_o, alpha_o, ep_o = oracle_update(eps, alpha_o, ep_o, params)
                scale = np.abs(sig_o).max() + params.yield_stress
                np.testing.assert_allclose(res.sigma, sig_o, atol=1e-8 * scale)
                assert abs(res.new_history.alpha - alpha_o) <= 1e-8 * max(alpha_o, 1e-12)
                np.testing.assert_allclose(res.new_history.eps_p, ep_o, atol=1e-8 * max(1e-12, np.abs(ep_o).max()))
                hist = res.new_history


def test_radial_return_newton_failure_carries_trial_state():
    eps = np.array([0.05, -0.01, 0.0, 0.02])
    with pytest.raises(RuntimeError, match="trial"):
        stress_update_batch(eps[None, :], np.zeros(1), np.zeros((1, 4)), SATURATING,
                            newton_max_iters=1)


# ---------------------------------------------------------------- consistent tangent

def test_tangent_exact_at_elastic_points():
    rng = np.random.default_rng(4)
    for _ in range(10):
        eps = rng.standard_normal(4) * 2e-4
        eps[2] = 0.0
        res = stress_update(eps, PointHistory(), STEEL)
        assert not res.plastic
        assert tangent_vs_fd(eps, PointHistory(), STEEL) <= 1e-9


def test_tangent_matches_fd_at_plastic_points_linear_hardening():
    rng = np.random.default_rng(8)
    count = 0
    while count < 25:
        eps = rng.standard_normal(4) * 8e-3
        eps[2] = 0.0
        res = stress_update(eps, PointHistory(), HARDENING)
        # keep clear of the yield kink so central differences stay one-branch
        if not res.plastic or res.phi_trial < 10.0 * 2 * HARDENING.shear_modulus * 1e-7:
            continue
        count += 1
        assert tangent_vs_fd(eps, PointHistory(), HARDENING, step=1e-7) <= 1e-6


def test_tangent_matches_fd_with_saturating_hardening():
    rng = np.random.default_rng(21)
    count = 0
    while count < 10:
        eps = rng.standard_normal(4) * 8e-3
        eps[2] = 0.0
        hist = PointHistory(alpha=float(rng.uniform(0, 0.05)))
        res = stress_update(eps, hist, SATURATING)
        if not res.plastic or res.phi_trial < 10.0 * 2 * SATURATING.shear_modulus * 1e-7:
            continue
        count += 1
        assert tangent_vs_fd(eps, hist, SATURATING, step=1e-7) <= 1e-6


# ---------------------------------------------------------------- invariants

@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-4e-3, 4e-3), st.floats(-4e-3, 4e-3),
                          st.floats(-4e-3, 4e-3)), min_size=1, max_size=8))
def test_update_sequence_invariants(increments):
    params = HARDENING
    hist = PointHistory()
    eps = np.zeros(4)
    for dxx, dyy, dxy in increments:
        eps = eps + np.array([dxx, dyy, 0.0, dxy])
        res = stress_update(eps, hist, params)
        # isochoric plastic flow
        assert abs(res.new_history.eps_p[:3].sum()) <= 1e-12
        # purely elastic volumetric response
        assert res.sigma[:3].sum() / 3.0 == pytest.approx(
            params.bulk_modulus * eps[:3].sum(), abs=1e-3 * params.yield_stress * 1e-6 + 1.0)
        # alpha never decreases
        assert res.new_history.alpha >= hist.alpha
        # consistency after plastic step
        s = res.sigma - np.array([1, 1, 1, 0]) * res.sigma[:3].mean()
        if res.plastic:
            assert yield_function(s, res.new_history.alpha, params) <= 1e-9 * params.yield_stress
            # radial direction: returned deviator parallel to trial deviator
            e_el = eps - hist.eps_p
            e_dev = e_el.copy()
            e_dev[:3] -= e_el[:3].mean()
            s_tr = 2 * params.shear_modulus * e_dev
            s_tr[3] = params.shear_modulus * e_el[3]
            cosang = np.dot(s, s_tr) / (np.linalg.norm(s) * np.linalg.norm(s_tr))
            assert cosang == pytest.approx(1.0, abs=1e-10)
        hist = res.new_history
