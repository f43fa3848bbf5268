import numpy as np
import pytest

from conftest import random_problem
from star_rsma import BeamformerSet, FblParams, StarRisState
from star_rsma.conic import (bf_columns, bf_quadratics, psd_factor, psd_sqrt, realify,
                             ris_quadratic)
from star_rsma.surrogate import (bf_surrogate, build_bf_constants, build_ris_constants,
                                 ris_surrogate, side_match)

FBL = FblParams(256, 256, 5e-6, 5e-6)


def stack(Z):
    return np.vstack([Z.real, Z.imag])


def test_realify_acts_like_complex(rng):
    F = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    z = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    y = realify(F) @ np.concatenate([z.real, z.imag])
    np.testing.assert_allclose(y[:3] + 1j * y[3:], F @ z)


def test_psd_helpers(rng):
    A = rng.standard_normal((4, 4))
    Q = A @ A.T
    R = psd_factor(Q)
    np.testing.assert_allclose(R.T @ R, Q, atol=1e-10)
    B = A @ A.T + 1j * 0
    S = psd_sqrt(B)
    np.testing.assert_allclose(S @ S, B, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_bf_quadratics_reproduce_bounds(seed):
    rng = np.random.default_rng(seed)
    cfg, cs, ws, ris = random_problem(rng)
    kb = build_bf_constants(cs, ris, ws, cfg, FBL)
    c_p, G_p, L_p, c_c, G_c, L_c = bf_quadratics(kb, True)
    other = BeamformerSet(ws.Wc + 0.3 * rng.standard_normal(ws.Wc.shape),
                          ws.Wk + 0.3 * rng.standard_normal(ws.Wk.shape))
    r_p, r_c = bf_surrogate(kb, other)
    X_all = stack(bf_columns(other, True))
    X_priv = stack(bf_columns(other, False))
    for k in range(cfg.K):
        val = c_p[k] + np.sum(G_p[k] * X_priv) - np.sum((L_p[k] @ X_priv) ** 2)
        assert val == pytest.approx(r_p[k], abs=1e-9)
        val = c_c[k] + np.sum(G_c[k] * X_all) - np.sum((L_c[k] @ X_all) ** 2)
        assert val == pytest.approx(r_c[k], abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_ris_quadratic_reproduces_bounds(seed):
    rng = np.random.default_rng(seed)
    cfg, cs, ws, ris = random_problem(rng)
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    match = side_match(cs, ris.mask)
    th = StarRisState.from_active(np.exp(2j * np.pi * rng.uniform(size=cfg.M)), ris.mask).active
    r_p, r_c = ris_surrogate(kr, cs, th, match)
    for k in range(cfg.K):
        s = np.nonzero(match[k])[0]
        x = np.concatenate([th[s].real, th[s].imag])
        for which, ref in (("p", r_p[k]), ("c", r_c[k])):
            c, g, Q = ris_quadratic(kr, cs, k, s, which)
            assert c + g @ x - x @ Q @ x == pytest.approx(ref, abs=1e-9)


def test_ris_quadratic_empty_support(rng):
    cfg, cs, ws, ris = random_problem(rng)
    kr = build_ris_constants(cs, ws, ris, cfg, FBL)
    c, g, Q = ris_quadratic(kr, cs, 0, np.array([], int), "p")
    assert g.shape == (0,) and Q.shape == (0, 0)
    assert c == pytest.approx(ris_surrogate(kr, cs, np.zeros(cfg.M), np.zeros((cfg.K, cfg.M), bool))[0][0])
