"""
Interior-point inner engine: the stage surrogate problems written as
second-order cone programs and solved with Clarabel through cvxpy.

Every bound is a concave quadratic of a real variable. The models are
written in the displacement from the expansion point, so each bound enters
as ``r0 + g.d - ||R d||^2`` with ``r0`` its value at the expansion point;
this keeps the data well scaled even when the bound constants are large.
Problems are built once per shape and cached; a solve only refreshes
parameter values.
"""
from __future__ import annotations

import functools
import logging

import cvxpy as cp
import numpy as np

log = logging.getLogger(__name__)

_OK = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


def realify(F: np.ndarray) -> np.ndarray:
    """Real matrix acting on ``[Re z; Im z]`` like ``F`` acts on ``z``."""
    return np.block([[F.real, -F.imag], [F.imag, F.real]])


def psd_sqrt(B: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix (negative eigenvalues clipped)."""
    w, U = np.linalg.eigh(B)
    return (U * np.sqrt(np.maximum(w, 0.0))) @ np.conj(U.T)


def psd_factor(Q: np.ndarray) -> np.ndarray:
    """Square ``R`` with ``R.T @ R == Q`` for symmetric PSD ``Q``."""
    w, U = np.linalg.eigh(0.5 * (Q + Q.T))
    return np.sqrt(np.maximum(w, 0.0))[:, None] * U.T


def _stack_ri(Z):
    return np.vstack([Z.real, Z.imag])


# --------------------------------------------------------------------------
# real quadratic forms of the bounds


def bf_columns(ws, use_common: bool) -> np.ndarray:
    """Beamformers as one complex (N_BS, cols) block: common first, then users."""
    parts = ([ws.Wc] if use_common else []) + list(ws.Wk)
    return np.concatenate(parts, axis=1)


def bf_quadratics(consts, use_common: bool):
    """Bounds as functions of ``X = [Re; Im]`` of :func:`bf_columns`.

    Returns ``(c_p, G_p, L_p, c_c, G_c, L_c)``: the private bound of user
    ``k`` is ``c_p[k] + <G_p[k], X_priv> - ||L_p[k] X_priv||^2`` over the
    private columns, the common bound the same over all columns (the common
    items are None when ``use_common`` is False).
    """
    H = consts.H
    Hh = np.conj(np.swapaxes(H, -1, -2))
    K = H.shape[0]
    tr = np.real(np.trace(consts.B_p, axis1=-2, axis2=-1))
    c_p = consts.a_p - consts.sigma2 * tr
    G_p, L_p = [], []
    for k in range(K):
        A = consts.A_pi[k].copy()
        A[k] = A[k] + consts.A_p[k]
        G_p.append(2.0 * _stack_ri(np.concatenate(list(Hh[k] @ A), axis=1)))
        L_p.append(realify(psd_sqrt(consts.B_p[k]) @ H[k]))
    if not use_common:
        return c_p, G_p, L_p, None, None, None
    tr = np.real(np.trace(consts.B_c, axis1=-2, axis2=-1))
    c_c = consts.a_c - consts.sigma2 * tr
    G_c, L_c = [], []
    for k in range(K):
        blk = np.concatenate([Hh[k] @ consts.A_c[k]] + list(Hh[k] @ consts.A_ci[k]), axis=1)
        G_c.append(2.0 * _stack_ri(blk))
        L_c.append(realify(psd_sqrt(consts.B_c[k]) @ H[k]))
    return c_p, G_p, L_p, c_c, G_c, L_c


def ris_quadratic(consts, cs, k: int, support, which: str):
    """One RIS bound as ``c + g.x - x.Q x`` in ``x = [Re; Im]`` of the
    coefficients listed in ``support`` (the elements user ``k`` sees)."""
    ws = consts.ws
    s = np.asarray(support, int)
    if which == "p":
        a, B = consts.a_p[k], consts.B_p[k]
        lin = consts.A_pi[k].copy()
        lin[k] = lin[k] + consts.A_p[k]
        Ws, lins = list(ws.Wk), list(lin)
    else:
        a, B = consts.a_c[k], consts.B_c[k]
        Ws = [ws.Wc] + list(ws.Wk)
        lins = [consts.A_c[k]] + list(consts.A_ci[k])
    L = psd_sqrt(B)
    Dk = cs.Dk[k][:, s]
    c = a - consts.sigma2 * np.real(np.trace(B))
    e = np.zeros(s.size, complex)
    rows_b, rows_F = [], []
    # V_i(theta) = G_k W_i + sum_m theta_m Dk[:, m] (D[m] W_i)
    for W, A in zip(Ws, lins):
        V0 = cs.Gk[k] @ W
        DW = cs.D[s] @ W
        c += 2.0 * np.real(np.sum(np.conj(A) * V0))
        e += np.einsum("ad,am,md->m", np.conj(A), Dk, DW)
        rows_b.append((L @ V0).ravel())
        E = np.einsum("ab,bm,md->adm", L, Dk, DW)
        rows_F.append(E.reshape(E.shape[0] * E.shape[1], s.size))
    b = np.concatenate(rows_b)
    F_r = realify(np.concatenate(rows_F))
    b_r = np.concatenate([b.real, b.imag])
    g = 2.0 * np.concatenate([e.real, -e.imag]) - 2.0 * F_r.T @ b_r
    return c - b_r @ b_r, g, F_r.T @ F_r


# --------------------------------------------------------------------------
# models


class _Epigraph:
    """Shared max-min assembly over per-user bound expressions.

    ``kind='qt'`` maximizes ``min_k 2 eta_k z_k - eta_k^2 p_k`` with
    ``z_k^2 <= r_pk + q_k``; ``kind='ratio'`` maximizes ``min_k r_pk + w_k
    q_k`` where the private bounds arrive already weighted by ``w_k``.
    """

    def __init__(self, K, kind, use_common, min_rate):
        self.K, self.kind = K, kind
        self.use_common, self.min_rate = use_common, min_rate
        self.t = cp.Variable()
        self.q = cp.Variable(K, nonneg=True) if use_common else None
        self.eta = cp.Parameter(K, nonneg=True)
        self.w = cp.Parameter(K, nonneg=True)
        self.r_th = cp.Parameter(K)

    def constraints(self, r_p, r_c, cost):
        """``cost[k]`` is the convex power term ``eta_k^2 p_k`` (qt only)."""
        K, q, cons = self.K, self.q, []
        z = cp.Variable(K, nonneg=True) if self.kind == "qt" else None
        for k in range(K):
            if q is None:
                share = 0
            elif self.kind == "ratio":
                share = cp.multiply(self.w[k], q[k])
            else:
                share = q[k]
            if self.kind == "qt":
                cons.append(cp.square(z[k]) <= r_p[k] + share)
                cons.append(self.t <= 2 * cp.multiply(self.eta[k], z[k]) - cost[k])
            else:
                cons.append(self.t <= r_p[k] + share)
            if self.min_rate:
                cons.append(r_p[k] + share >= self.r_th[k])
            if self.use_common:
                cons.append(r_c[k] >= cp.sum(q))
        return cons

    def set_values(self, objective, r_th):
        K = self.K
        if objective["kind"] == "qt":
            eta = np.asarray(objective["eta"], float)
            w = np.ones(K)
        else:
            eta = np.zeros(K)
            w = np.asarray(objective["w"], float)
        self.eta.value = eta
        self.w.value = w
        self.r_th.value = w * r_th
        return w


def _solve(problem) -> bool:
    try:
        problem.solve(solver=cp.CLARABEL, warm_start=False)
    except cp.SolverError as exc:
        log.debug("conic solve failed: %s", exc)
        return False
    return problem.status in _OK


class BfModel:
    """Beamforming stage over ``U = X / sqrt(P)`` (unit power ball)."""

    def __init__(self, K, n_bs, n_u, d_c, d_p, use_common, kind, min_rate):
        self.K, self.n_bs, self.d_p = K, n_bs, d_p
        self.use_common = use_common
        self.off = d_c if use_common else 0
        cols = self.off + K * d_p
        self.U0 = cp.Parameter((2 * n_bs, cols))
        self.D = cp.Variable((2 * n_bs, cols))
        D, off = self.D, self.off
        self.ep = _Epigraph(K, kind, use_common, min_rate)

        def bounds(width, part):
            r0 = cp.Parameter(K)
            g = [cp.Parameter((2 * n_bs, width)) for _ in range(K)]
            L = [cp.Parameter((2 * n_u, 2 * n_bs)) for _ in range(K)]
            ex = [r0[k] + cp.sum(cp.multiply(g[k], part)) - cp.sum_squares(L[k] @ part)
                  for k in range(K)]
            return (r0, g, L), ex

        self.par_p, r_p = bounds(K * d_p, D[:, off:])
        self.par_c, r_c = bounds(cols, D) if use_common else (None, None)
        # eta_k^2 p_k expanded around U0 so that each parameter enters affinely
        self.cost0 = cp.Parameter(K)
        self.cost_lin = [cp.Parameter((2 * n_bs, cols)) for _ in range(K)]
        self.cost_sqrt = cp.Parameter(K, nonneg=True)
        cost = []
        for k in range(K):
            own = cp.sum_squares(cp.multiply(self.cost_sqrt[k],
                                             D[:, off + k * d_p:off + (k + 1) * d_p]))
            if use_common:
                own = own + cp.sum_squares(cp.multiply(self.cost_sqrt[k], D[:, :off])) / K
            cost.append(self.cost0[k] + cp.sum(cp.multiply(self.cost_lin[k], D)) + own)
        cons = self.ep.constraints(r_p, r_c, cost)
        cons.append(cp.sum_squares(self.U0 + D) <= 1.0)
        self.problem = cp.Problem(cp.Maximize(self.ep.t), cons)

    def solve(self, consts, ws, cfg, objective, off_users=None):
        """Maximize the stage objective from expansion point ``ws``.

        ``off_users`` marks users whose private bound is replaced by the
        constant 0. Returns complex ``(Wc, Wk)`` or None on solver failure.
        """
        K, d_p, off = self.K, self.d_p, self.off
        sP = np.sqrt(cfg.P)
        w = self.ep.set_values(objective, cfg.r_th)
        off_users = np.zeros(K, bool) if off_users is None else off_users
        U0 = _stack_ri(bf_columns(ws, self.use_common)) / sP
        self.U0.value = U0
        self._set_cost(U0, objective, cfg.P_C, cfg.beta * cfg.P)
        c_p, G_p, L_p, c_c, G_c, L_c = bf_quadratics(consts, self.use_common)
        X_priv = U0[:, off:] * sP
        r0, (par_r0, par_g, par_L) = np.zeros(K), self.par_p
        for k in range(K):
            if off_users[k]:
                par_g[k].value = np.zeros(par_g[k].shape)
                par_L[k].value = np.zeros(par_L[k].shape)
                continue
            LX = L_p[k] @ X_priv
            r0[k] = w[k] * (c_p[k] + np.sum(G_p[k] * X_priv) - np.sum(LX ** 2))
            par_g[k].value = w[k] * sP * (G_p[k] - 2.0 * L_p[k].T @ LX)
            par_L[k].value = np.sqrt(w[k]) * sP * L_p[k]
        par_r0.value = r0
        if self.use_common:
            X = U0 * sP
            r0, (par_r0, par_g, par_L) = np.zeros(K), self.par_c
            for k in range(K):
                LX = L_c[k] @ X
                r0[k] = c_c[k] + np.sum(G_c[k] * X) - np.sum(LX ** 2)
                par_g[k].value = sP * (G_c[k] - 2.0 * L_c[k].T @ LX)
                par_L[k].value = sP * L_c[k]
            par_r0.value = r0
        if not _solve(self.problem):
            return None
        U = (U0 + self.D.value) * sP
        n = self.n_bs
        Z = U[:n] + 1j * U[n:]
        Wk = np.stack([Z[:, off + k * d_p:off + (k + 1) * d_p] for k in range(K)])
        return Z[:, :off], Wk


    def _set_cost(self, U0, objective, static, scale):
        K, d_p, off = self.K, self.d_p, self.off
        eta2 = (np.asarray(objective["eta"], float) ** 2 if objective["kind"] == "qt"
                else np.zeros(K))
        weight = np.zeros((K, U0.shape[1]))  # power weight of every column per user
        weight[:, :off] = 1.0 / K
        for k in range(K):
            weight[k, off + k * d_p:off + (k + 1) * d_p] = 1.0
        p0 = np.array([np.sum(weight[k] * U0 ** 2) for k in range(K)])
        self.cost0.value = eta2 * (static + scale * p0)
        for k in range(K):
            self.cost_lin[k].value = 2.0 * eta2[k] * scale * weight[k] * U0
        self.cost_sqrt.value = np.sqrt(eta2 * scale)


class RisModel:
    """RIS stage over ``[Re theta; Im theta]``, one coefficient per element.
    ``support[k]`` lists the elements user ``k`` sees under the mode mask."""

    def __init__(self, K, M, support, use_common, kind, min_rate):
        self.K, self.M = K, M
        self.support = support
        self.use_common = use_common
        self.x0 = cp.Parameter(2 * M)
        self.d = cp.Variable(2 * M)
        self.ep = _Epigraph(K, kind, use_common, min_rate)
        self.idx = [np.concatenate([np.asarray(s, int), M + np.asarray(s, int)]).astype(int)
                    for s in support]

        def bounds():
            r0, gs, Rs, ex = cp.Parameter(K), [], [], []
            for k in range(K):
                n_k = self.idx[k].size
                if n_k == 0:
                    gs.append(None)
                    Rs.append(None)
                    ex.append(r0[k])
                    continue
                gs.append(cp.Parameter(n_k))
                Rs.append(cp.Parameter((n_k, n_k)))
                dk = self.d[self.idx[k]]
                ex.append(r0[k] + gs[k] @ dk - cp.sum_squares(Rs[k] @ dk))
            return (r0, gs, Rs), ex

        self.par_p, r_p = bounds()
        self.par_c, r_c = bounds() if use_common else (None, None)
        cons = self.ep.constraints(r_p, r_c, None)
        x = self.x0 + self.d
        cons.append(cp.norm(cp.reshape(x, (2, M), order="C"), 2, axis=0) <= 1.0)
        self.problem = cp.Problem(cp.Maximize(self.ep.t), cons)

    def solve(self, consts, cs, theta0, objective, r_th=0.0, off_users=None):
        K, M = self.K, self.M
        w = self.ep.set_values(objective, r_th)
        off_users = np.zeros(K, bool) if off_users is None else off_users
        x0 = np.concatenate([theta0.real, theta0.imag])
        self.x0.value = x0
        targets = [("p", self.par_p, w, off_users)]
        if self.use_common:
            targets.append(("c", self.par_c, np.ones(K), np.zeros(K, bool)))
        for which, (par_r0, par_g, par_R), scale, off in targets:
            r0 = np.zeros(K)
            for k in range(K):
                if off[k]:
                    if par_g[k] is not None:
                        par_g[k].value = np.zeros(par_g[k].shape)
                        par_R[k].value = np.zeros(par_R[k].shape)
                    continue
                c, g, Q = ris_quadratic(consts, cs, k, self.support[k], which)
                xk = x0[self.idx[k]]
                r0[k] = scale[k] * (c + g @ xk - xk @ Q @ xk)
                if par_g[k] is not None:
                    par_g[k].value = scale[k] * (g - 2.0 * Q @ xk)
                    par_R[k].value = np.sqrt(scale[k]) * psd_factor(Q)
            par_r0.value = r0
        if not _solve(self.problem):
            return None
        x = x0 + self.d.value
        return x[:M] + 1j * x[M:]


@functools.lru_cache(maxsize=64)
def bf_model(K, n_bs, n_u, d_c, d_p, use_common, kind, min_rate) -> BfModel:
    return BfModel(K, n_bs, n_u, d_c, d_p, use_common, kind, min_rate)


@functools.lru_cache(maxsize=64)
def ris_model(K, M, support, use_common, kind, min_rate) -> RisModel:
    return RisModel(K, M, support, use_common, kind, min_rate)
