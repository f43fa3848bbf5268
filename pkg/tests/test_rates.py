import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import matrix_rates, scalar_common, scalar_private
from star_rsma import BeamformerSet, FblParams, common_rate, private_rate
from star_rsma.rates import (all_rates, common_cap, energy_efficiency, report_from_rates,
                             user_power, user_powers)
from star_rsma.numerics import ConstraintViolationError, InvalidInputError

from conftest import crandn


def scalar_set(own, other, common):
    return BeamformerSet(np.array([[math.sqrt(common)]], complex),
                         np.array([[[math.sqrt(own)]], [[math.sqrt(other)]]], complex))


def test_private_worked_value():
    # one user, unit gain, unit noise, n = 256, eps = 5e-6
    ws = BeamformerSet(np.zeros((1, 1), complex), np.ones((1, 1, 1), complex))
    fbl = FblParams(256, 256, 5e-6, 5e-6)
    r = private_rate(np.ones((1, 1)), ws, 1.0, fbl)
    assert r == pytest.approx(math.log(2) - 4.417173413 / 16, abs=1e-9)
    assert r == pytest.approx(scalar_private(1.0, 0.0, 256, 5e-6), abs=1e-12)


def test_common_worked_value():
    # common gain 3, own private gain 1, unit noise
    ws = BeamformerSet(np.array([[math.sqrt(3.0)]], complex), np.ones((1, 1, 1), complex))
    fbl = FblParams(256, 256, 5e-6, 5e-6)
    r = common_rate(np.ones((1, 1)), ws, 1.0, fbl)
    assert r == pytest.approx(math.log(2.5) - 4.417173413 / 16 * math.sqrt(1.2), abs=1e-9)


@given(st.floats(0.01, 10), st.floats(0, 10), st.floats(0.01, 10), st.integers(16, 4096),
       st.floats(-9, -1.5))
@settings(max_examples=60)
def test_scalar_oracle(own, other, common, n, log_eps):
    eps = 10.0 ** log_eps
    ws = scalar_set(own, other, common)
    fbl = FblParams(n, n, eps, eps)
    assert private_rate(np.ones((1, 1)), ws, 1.0, fbl, 0) == pytest.approx(
        scalar_private(own, other, n, eps), abs=1e-9)
    assert common_rate(np.ones((1, 1)), ws, 1.0, fbl, 0) == pytest.approx(
        scalar_common(common, own + other, n, eps), abs=1e-9)


def test_interference_free_symmetry():
    # a lone common stream obeys the private formula with the common parameters
    g = 1.7
    fbl = FblParams(300, 128, 1e-4, 1e-7)
    ws_c = BeamformerSet(np.array([[math.sqrt(g)]], complex), np.zeros((1, 1, 1), complex))
    ws_p = BeamformerSet(np.zeros((1, 1), complex), np.array([[[math.sqrt(g)]]], complex))
    swapped = FblParams(128, 300, 1e-7, 1e-4)
    assert common_rate(np.ones((1, 1)), ws_c, 1.0, fbl) == pytest.approx(
        private_rate(np.ones((1, 1)), ws_p, 1.0, swapped), abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_matrix_oracle(seed, K, n_bs, n_u):
    rng = np.random.default_rng(seed)
    H = crandn(rng, K, n_u, n_bs) * 2
    Wc, Wk = crandn(rng, n_bs, 2), crandn(rng, K, n_bs, 2)
    fbl = FblParams(200, 300, 1e-6, 1e-5)
    r_p, r_c = all_rates(H, BeamformerSet(Wc, Wk), 0.7, fbl)
    ref_p, ref_c = matrix_rates(H, Wc, Wk, 0.7, 200, 300, 1e-6, 1e-5)
    np.testing.assert_allclose(r_p, ref_p, atol=1e-9)
    np.testing.assert_allclose(r_c, ref_c, atol=1e-9)


@given(st.floats(0.1, 5), st.integers(32, 1000))
def test_rates_improve_with_blocklength_and_eps(g, n):
    ws = scalar_set(g, 0.3, 0.5)
    lo = private_rate(np.ones((1, 1)), ws, 1.0, FblParams(n, n, 1e-6, 1e-6))
    longer = private_rate(np.ones((1, 1)), ws, 1.0, FblParams(2 * n, 2 * n, 1e-6, 1e-6))
    looser = private_rate(np.ones((1, 1)), ws, 1.0, FblParams(n, n, 1e-4, 1e-4))
    assert longer > lo and looser > lo


def test_fbl_validation():
    with pytest.raises(InvalidInputError):
        FblParams(0, 10, 0.1, 0.1)
    with pytest.raises(InvalidInputError):
        FblParams(10, 10, 0.0, 0.1)
    assert FblParams(10, 10, 0.1, 0.2).eps_total == pytest.approx(0.3)


def test_single_user_helpers_validate():
    ws = scalar_set(1, 1, 1)
    fbl = FblParams(10, 10, 0.1, 0.1)
    with pytest.raises(InvalidInputError):
        private_rate(np.ones((1, 2)), ws, 1.0, fbl)
    with pytest.raises(IndexError):
        common_rate(np.ones((1, 1)), ws, 1.0, fbl, k=5)


def test_cap_and_powers():
    assert common_cap([0.3, -0.1, 0.5]) == 0.0
    assert common_cap([0.3, 0.2]) == pytest.approx(0.2)
    ws = BeamformerSet(np.full((1, 1), 2.0, complex), np.array([[[1.0]], [[0.0]]], complex))
    # common power 4 shared by two users
    np.testing.assert_allclose(user_powers(ws, 0.5, 2.0), [0.5 + 2 * (2 + 1), 0.5 + 2 * 2])
    assert user_power(ws, 1, 0.5, 2.0) == pytest.approx(4.5)
    with pytest.raises(InvalidInputError):
        user_power(ws, 0, 0.5, 2.0, K=3)


def test_energy_efficiency_examples():
    assert energy_efficiency(0.417068, 1.0) == pytest.approx(0.417068)
    assert energy_efficiency(-0.2, 2.0) == 0.0


def test_report_checks_shares():
    from star_rsma import ScenarioConfig
    cfg = ScenarioConfig(K=2, P_C=1.0, beta=1.0)
    ws = scalar_set(0.0, 0.0, 0.0)
    rep = report_from_rates(np.array([0.2, -0.1]), np.array([0.4, 0.5]), ws, [0.1, 0.3], cfg)
    np.testing.assert_allclose(rep.r_k, [0.3, 0.3])
    assert rep.min_ee == pytest.approx(0.3)
    with pytest.raises(ConstraintViolationError):
        report_from_rates(np.array([0.2, 0.1]), np.array([0.4, 0.5]), ws, [0.3, 0.3], cfg)


def test_user_power_example():
    ws = BeamformerSet(np.zeros((2, 1), complex), np.zeros((4, 2, 1), complex))
    Wk = ws.Wk.copy()
    Wk[0, :, 0] = 1.0
    assert user_power(BeamformerSet(ws.Wc, Wk), 0, P_C=1.0, beta=1.0, K=4) == pytest.approx(3.0)


@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 1e6))
@settings(max_examples=30, deadline=None)
def test_noise_scaling_invariance(seed, a):
    rng = np.random.default_rng(seed)
    H = crandn(rng, 3, 2, 2)
    ws = BeamformerSet(crandn(rng, 2, 2), crandn(rng, 3, 2, 2))
    fbl = FblParams(256, 256, 1e-5, 1e-5)
    r1 = np.concatenate(all_rates(H, ws, 0.5, fbl))
    r2 = np.concatenate(all_rates(H * math.sqrt(a), ws, 0.5 * a, fbl))
    np.testing.assert_allclose(r1, r2, atol=1e-9)
