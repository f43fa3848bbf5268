"""Independent reference computations used by the tests.

Nothing here calls into the package's numerics: determinants go through
``numpy.linalg.slogdet``, inverses through ``numpy.linalg.inv`` and the
Gaussian tail through ``scipy.stats.norm``.
"""
import math

import numpy as np
from scipy.optimize import linprog
from scipy.stats import norm


def dispersion(n, eps):
    return norm.isf(eps) / math.sqrt(n)


def scalar_private(g_own, g_int, n, eps, sigma2=1.0):
    s = sigma2 + g_own + g_int
    return math.log(s / (sigma2 + g_int)) - dispersion(n, eps) * math.sqrt(2.0 * g_own / s)


def scalar_common(g_c, g_priv, n, eps, sigma2=1.0):
    s = sigma2 + g_priv
    t = s + g_c
    return math.log(t / s) - dispersion(n, eps) * math.sqrt(2.0 * g_c / t)


def _ld(m):
    sign, val = np.linalg.slogdet(m)
    assert sign.real > 0
    return val


def matrix_rates(H, Wc, Wk, sigma2, n_c, n_p, eps_c, eps_p):
    """Per-user raw private and common FBL rates by direct evaluation."""
    K, n_u, _ = H.shape
    r_p, r_c = np.empty(K), np.empty(K)
    for k in range(K):
        grams = [H[k] @ W @ W.conj().T @ H[k].conj().T for W in Wk]
        S = sigma2 * np.eye(n_u) + sum(grams)
        N = S - grams[k]
        Gc = H[k] @ Wc @ Wc.conj().T @ H[k].conj().T
        T = S + Gc
        v_p = 2.0 * np.real(np.trace(grams[k] @ np.linalg.inv(S)))
        v_c = 2.0 * np.real(np.trace(Gc @ np.linalg.inv(T)))
        r_p[k] = _ld(S) - _ld(N) - dispersion(n_p, eps_p) * math.sqrt(max(v_p, 0.0))
        r_c[k] = _ld(T) - _ld(S) - dispersion(n_c, eps_c) * math.sqrt(max(v_c, 0.0))
    return r_p, r_c


def composite(D, Dk, Gk, theta_per_user):
    return np.stack([Dk[k] @ np.diag(theta_per_user[k]) @ D + Gk[k] for k in range(len(Gk))])


def share_lp(r, p, cap, r_th=0.0):
    """max t s.t. r_k + q_k >= t p_k, r_k + q_k >= r_th, sum q <= cap, q >= 0."""
    K = len(r)
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A = np.zeros((2 * K + 1, K + 1))
    b = np.zeros(2 * K + 1)
    for k in range(K):
        A[k, k], A[k, -1], b[k] = -1.0, p[k], r[k]
        A[K + k, k], b[K + k] = -1.0, r[k] - r_th
    A[-1, :K], b[-1] = 1.0, cap
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(0, None)] * K + [(None, None)], method="highs")
    return res.x[-1] if res.status == 0 else None


def share_grid(r, p, cap, levels=4, points=2001):
    """Largest level t with sum_k max(0, t p_k - r_k) <= cap, by nested grids."""
    r, p = np.asarray(r, float), np.asarray(p, float)
    lo, hi = float(np.min(r / p)), float(np.max((r + cap) / p))
    for _ in range(levels):
        t = np.linspace(lo, hi, points)
        need = np.maximum(0.0, t[:, None] * p - r).sum(axis=1)
        ok = np.nonzero(need <= cap)[0]
        i = ok[-1]
        lo, hi = t[i], t[min(i + 1, points - 1)]
    return lo
