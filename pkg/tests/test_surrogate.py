import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_problem
from oracles import matrix_rates
from star_rsma import BeamformerSet, FblParams, StarRisState
from star_rsma.channel import compose_all
from star_rsma.numerics import InvalidInputError, fd_gradient_check, real_to_complex
from star_rsma.rates import all_rates
from star_rsma.surrogate import (bf_surrogate, build_bf_constants, build_constants,
                                 build_ris_constants, eval_bf_surrogate, eval_ris_surrogate,
                                 ris_surrogate, side_match, update_eta)

FBL = FblParams(256, 256, 5e-6, 5e-6)


def true_rates(cs, ris, ws, sigma2=1.0):
    H = compose_all(cs, ris)
    return matrix_rates(H, ws.Wc, ws.Wk, sigma2, FBL.n_c, FBL.n_p, FBL.eps_c, FBL.eps_p)


def test_scalar_constants_hand_reduction():
    g, sigma2 = 2.5, 0.8
    v = np.sqrt(g) * np.ones((1, 1, 1, 1), complex)
    k = build_constants(np.zeros((1, 1, 1), complex), v, sigma2, FBL, 1)
    c = FBL.dispersion_p
    s = sigma2 + g
    vp = 2 * g / s
    w = c / math.sqrt(vp)
    a = (math.log(s / sigma2) - g / sigma2 - c * math.sqrt(vp) / 2 - c / math.sqrt(vp)
         + 2 * w * sigma2 / s)
    assert k["a_p"][0] == pytest.approx(a, rel=1e-8)
    assert k["A_p"][0, 0, 0] == pytest.approx(math.sqrt(g) / sigma2, rel=1e-8)
    assert k["B_p"][0, 0, 0].real == pytest.approx(1 / sigma2 - 1 / s + w * sigma2 / s**2, rel=1e-8)
    # no common signal: the common bound is the degenerate constant
    assert k["degenerate_c"][0]
    assert k["a_c"][0] == pytest.approx(-FBL.dispersion_c * math.sqrt(2.0), rel=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_tight_at_expansion(seed):
    cfg, cs, ws, ris = random_problem(np.random.default_rng(seed))
    ref_p, ref_c = true_rates(cs, ris, ws)
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    r_p, r_c = bf_surrogate(kb, ws)
    np.testing.assert_allclose(r_p, ref_p, atol=1e-9)
    np.testing.assert_allclose(r_c, ref_c, atol=1e-9)
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    r_p, r_c = ris_surrogate(kr, cs, ris.active, side_match(cs, ris.mask))
    np.testing.assert_allclose(r_p, ref_p, atol=1e-9)
    np.testing.assert_allclose(r_c, ref_c, atol=1e-9)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("kind", ["private", "common"])
def test_bf_gradient_fd(seed, kind):
    cfg, cs, ws, ris = random_problem(np.random.default_rng(seed))
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    n_c = ws.Wc.size

    def unpack(x):
        z = real_to_complex(x)
        return BeamformerSet(z[:n_c].reshape(ws.Wc.shape), z[n_c:].reshape(ws.Wk.shape))

    x0 = np.concatenate([np.concatenate([ws.Wc.ravel(), ws.Wk.ravel()]).real,
                         np.concatenate([ws.Wc.ravel(), ws.Wk.ravel()]).imag])
    for k in range(cfg.K):
        _, g = eval_bf_surrogate(kb, ws, (kind, k))
        f = lambda x: eval_bf_surrogate(kb, unpack(x), (kind, k))[0]
        assert fd_gradient_check(f, x0, g) < 1e-5


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("kind", ["private", "common"])
def test_ris_gradient_fd(seed, kind):
    cfg, cs, ws, ris = random_problem(np.random.default_rng(seed))
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    x0 = np.concatenate([ris.active.real, ris.active.imag])
    for k in range(cfg.K):
        _, g = eval_ris_surrogate(kr, cs, ris, (kind, k))
        f = lambda x: eval_ris_surrogate(kr, cs, StarRisState.from_active(real_to_complex(x),
                                                                           ris.mask), (kind, k))[0]
        assert fd_gradient_check(f, x0, g) < 1e-5


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_lower_bound_beamformers(seed, step):
    rng = np.random.default_rng(seed)
    cfg, cs, ws, ris = random_problem(rng)
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    other = BeamformerSet(ws.Wc + step * 0.4 * rng.standard_normal(ws.Wc.shape),
                          ws.Wk + step * 0.4 * rng.standard_normal(ws.Wk.shape))
    r_p, r_c = bf_surrogate(kb, other)
    ref_p, ref_c = true_rates(cs, ris, other)
    assert np.all(r_p <= ref_p + 1e-8) and np.all(r_c <= ref_c + 1e-8)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_lower_bound_ris(seed):
    rng = np.random.default_rng(seed)
    cfg, cs, ws, ris = random_problem(rng)
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    th = np.exp(2j * np.pi * rng.uniform(size=cfg.M)) * rng.uniform(0, 1, cfg.M)
    other = StarRisState.from_active(th, ris.mask)
    r_p, r_c = ris_surrogate(kr, cs, other.active, side_match(cs, ris.mask))
    ref_p, ref_c = true_rates(cs, other, ws)
    assert np.all(r_p <= ref_p + 1e-8) and np.all(r_c <= ref_c + 1e-8)


def test_bound_is_concave(rng):
    cfg, cs, ws, ris = random_problem(rng)
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    for _ in range(20):
        a = BeamformerSet(ws.Wc + rng.standard_normal(ws.Wc.shape), ws.Wk + rng.standard_normal(ws.Wk.shape))
        b = BeamformerSet(ws.Wc - rng.standard_normal(ws.Wc.shape), ws.Wk - rng.standard_normal(ws.Wk.shape))
        m = BeamformerSet((a.Wc + b.Wc) / 2, (a.Wk + b.Wk) / 2)
        fa, fb, fm = (np.concatenate(bf_surrogate(kb, x)) for x in (a, b, m))
        assert np.all(fm >= (fa + fb) / 2 - 1e-10)


def test_degenerate_common_bound(rng):
    cfg, cs, ws, ris = random_problem(rng)
    ws0 = ws.without_common()
    kb = build_bf_constants(cs, ris, ws0, cfg, FBL)
    assert np.all(kb.degenerate_c)
    _, r_c = bf_surrogate(kb, ws0)
    ref = -FBL.dispersion_c * math.sqrt(2 * min(cfg.N_BS, cfg.N_u))
    np.testing.assert_allclose(r_c, ref)
    # still a lower bound once the common stream is switched on
    _, true_c = true_rates(cs, ris, ws)
    assert np.all(bf_surrogate(kb, ws)[1] <= true_c + 1e-8)


def test_kind_and_shape_checks(rng):
    cfg, cs, ws, ris = random_problem(rng)
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    with pytest.raises(InvalidInputError):
        ris_surrogate(kb, cs, ris.active, side_match(cs, ris.mask))
    with pytest.raises(InvalidInputError):
        bf_surrogate(kr, ws)
    with pytest.raises(InvalidInputError):
        eval_bf_surrogate(kb, ws, ("both", 0))


def test_update_eta():
    class R:
        r_k = np.array([4.0, -1.0])
        p_k = np.array([2.0, 1.0])
    np.testing.assert_allclose(update_eta(R), [1.0, 0.0])
