"""
Concave lower bounds of the FBL rates and the quadratic-transform weights.

Both bounds are functions of the received beam products ``V_ki = H_k W_i``.
Fixing the channel and varying the beamformers gives the beamforming bound;
fixing the beamformers and varying the channel (hence the RIS coefficients,
which enter affinely) gives the RIS bound. The constants are identical in
form; only the expansion point differs.

Each bound has the shape

    a + 2 Re<A, V_own> + 2 sum_i Re<A_i, V_i> - Tr(B (sigma2 I + sum V V^H))

with ``B`` positive semidefinite, so it is concave in ``V``. The first two
terms come from the standard log-det minorizer, the ``A_i`` terms and the
extra part of ``B`` from bounding the square-root dispersion penalty above
(arithmetic-geometric mean inequality, then linearizing the jointly convex
``Tr(V^H S^{-1} V)``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, ScenarioConfig, StarRisState, compose_all
from .numerics import (InvalidInputError, complex_to_real, hermitian_part,
                       inv_hpd, logdet_hpd)
from .rates import BeamformerSet, FblParams, RateReport, products

DEGENERATE_V = 1e-14


@dataclass(frozen=True)
class SurrogateConstants:
    """Expansion-point constants for every user and both message types.

    Private bound: ``a_p, A_p, A_pi, B_p, v_p``; common bound: ``a_c, A_c,
    A_ci, B_c, v_c``. ``A_pi[k, k]`` is zero by construction. ``kind`` is
    ``'bf'`` (variable beamformers, channel ``H`` fixed) or ``'ris'``
    (variable RIS, beamformers ``ws`` fixed).
    """
    a_p: np.ndarray
    A_p: np.ndarray
    A_pi: np.ndarray
    B_p: np.ndarray
    v_p: np.ndarray
    a_c: np.ndarray
    A_c: np.ndarray
    A_ci: np.ndarray
    B_c: np.ndarray
    v_c: np.ndarray
    degenerate_p: np.ndarray
    degenerate_c: np.ndarray
    sigma2: float
    i_rank: int
    kind: str
    H: np.ndarray | None = None
    ws: BeamformerSet | None = None
    theta: np.ndarray | None = None


def _gram(V):
    return V @ np.conj(np.swapaxes(V, -1, -2))


def _rtr(M):
    return np.real(np.trace(M, axis1=-2, axis2=-1))


def _dispersion_terms(w, c, v, sigma2, n_u, Rinv, R_other, degenerate, i_rank):
    """Constant and quadratic-weight contributions of the dispersion bound.

    ``Rinv`` is the inverse of the full covariance, ``R_other`` the part of
    the covariance not carrying the wanted signal.
    """
    sv = np.sqrt(np.where(degenerate, 1.0, v))
    const = -c * sv / 2.0 - c * n_u / sv + 2.0 * w * sigma2 * _rtr(Rinv)
    const = np.where(degenerate, -c * np.sqrt(2.0 * i_rank), const)
    B_extra = w[:, None, None] * (Rinv @ R_other @ Rinv)
    return const, hermitian_part(B_extra)


def build_constants(Vc, Vp, sigma2: float, fbl: FblParams, i_rank: int) -> dict:
    """Constants of both bounds at beam products ``Vc`` (K,N_u,d_c), ``Vp`` (K,K,N_u,d_p)."""
    K, _, n_u, _ = Vp.shape
    idx = np.arange(K)
    eye = np.eye(n_u)
    G = _gram(Vp)
    S = sigma2 * eye + G.sum(axis=1)
    own = G[idx, idx]
    N = S - own
    Gc = _gram(Vc)
    T = S + Gc
    Si, Ni, Ti = inv_hpd(S), inv_hpd(N), inv_hpd(T)
    Vkk = Vp[idx, idx]

    # private stream
    c_p = fbl.dispersion_p
    if c_p <= 0:
        raise InvalidInputError("bounds need eps_p < 0.5")
    v_p = 2.0 * _rtr(Si @ own)
    deg_p = v_p <= DEGENERATE_V
    w_p = np.where(deg_p, 0.0, c_p / np.sqrt(np.where(deg_p, 1.0, v_p)))
    a_disp, B_disp = _dispersion_terms(w_p, c_p, v_p, sigma2, n_u, Si, N, deg_p, i_rank)
    a_p = logdet_hpd(S) - logdet_hpd(N) - _rtr(Ni @ own) + a_disp
    A_p = Ni @ Vkk
    A_pi = w_p[:, None, None, None] * (Si[:, None] @ Vp)
    A_pi[idx, idx] = 0.0
    B_p = hermitian_part(Ni - Si) + B_disp

    # common stream, with all private streams as interference
    c_c = fbl.dispersion_c
    if c_c <= 0:
        raise InvalidInputError("bounds need eps_c < 0.5")
    v_c = 2.0 * _rtr(Ti @ Gc)
    deg_c = v_c <= DEGENERATE_V
    w_c = np.where(deg_c, 0.0, c_c / np.sqrt(np.where(deg_c, 1.0, v_c)))
    a_disp, B_disp = _dispersion_terms(w_c, c_c, v_c, sigma2, n_u, Ti, S, deg_c, i_rank)
    a_c = logdet_hpd(T) - logdet_hpd(S) - _rtr(Si @ Gc) + a_disp
    A_c = Si @ Vc
    A_ci = w_c[:, None, None, None] * (Ti[:, None] @ Vp)
    B_c = hermitian_part(Si - Ti) + B_disp

    return dict(a_p=np.atleast_1d(a_p), A_p=A_p, A_pi=A_pi, B_p=B_p, v_p=v_p,
                a_c=np.atleast_1d(a_c), A_c=A_c, A_ci=A_ci, B_c=B_c, v_c=v_c,
                degenerate_p=deg_p, degenerate_c=deg_c, sigma2=sigma2, i_rank=i_rank)


def _i_rank(cfg: ScenarioConfig) -> int:
    return min(cfg.N_BS, cfg.N_u)


def build_bf_constants(cs: ChannelSet, ris: StarRisState, ws_bar: BeamformerSet,
                       cfg: ScenarioConfig, fbl: FblParams | None = None) -> SurrogateConstants:
    """Bounds in the beamformers, expanded at ``ws_bar`` with the RIS fixed."""
    fbl = FblParams.from_config(cfg) if fbl is None else fbl
    H = compose_all(cs, ris)
    Vc, Vp = products(H, ws_bar)
    consts = build_constants(Vc, Vp, cfg.sigma2, fbl, _i_rank(cfg))
    return SurrogateConstants(**consts, kind="bf", H=H, ws=ws_bar, theta=ris.active)


def build_ris_constants(cs: ChannelSet, ws: BeamformerSet, ris_bar: StarRisState,
                        cfg: ScenarioConfig, fbl: FblParams | None = None) -> SurrogateConstants:
    """Bounds in the channels (hence RIS coefficients), expanded at ``ris_bar``."""
    fbl = FblParams.from_config(cfg) if fbl is None else fbl
    H = compose_all(cs, ris_bar)
    Vc, Vp = products(H, ws)
    consts = build_constants(Vc, Vp, cfg.sigma2, fbl, _i_rank(cfg))
    return SurrogateConstants(**consts, kind="ris", H=H, ws=ws, theta=ris_bar.active)


def _inner(A, V):
    return np.real(np.einsum("...ab,...ab->...", np.conj(A), V))


def eval_products(consts: SurrogateConstants, Vc, Vp, grad: bool = False):
    """Bound values ``(r_p, r_c)`` at beam products, optionally with gradients.

    Gradients use the convention ``df = Re sum(conj(G) * dV)`` and are
    returned as ``(Gp_p, Gc_c, Gc_p)``: private bound w.r.t. ``Vp[k, i]``,
    common bound w.r.t. ``Vc[k]`` and w.r.t. ``Vp[k, i]``.
    """
    K = Vp.shape[0]
    idx = np.arange(K)
    n_u = Vp.shape[2]
    cov = consts.sigma2 * np.eye(n_u) + _gram(Vp).sum(axis=1)
    Vkk = Vp[idx, idx]
    r_p = (consts.a_p + 2.0 * _inner(consts.A_p, Vkk)
           + 2.0 * _inner(consts.A_pi, Vp).sum(axis=1) - _rtr(consts.B_p @ cov))
    r_c = (consts.a_c + 2.0 * _inner(consts.A_c, Vc)
           + 2.0 * _inner(consts.A_ci, Vp).sum(axis=1)
           - _rtr(consts.B_c @ (cov + _gram(Vc))))
    if not grad:
        return r_p, r_c
    Gp_p = 2.0 * consts.A_pi - 2.0 * (consts.B_p[:, None] @ Vp)
    Gp_p[idx, idx] += 2.0 * consts.A_p
    Gc_c = 2.0 * consts.A_c - 2.0 * (consts.B_c @ Vc)
    Gc_p = 2.0 * consts.A_ci - 2.0 * (consts.B_c[:, None] @ Vp)
    return r_p, r_c, (Gp_p, Gc_c, Gc_p)


def bf_surrogate(consts: SurrogateConstants, ws: BeamformerSet, grad: bool = False):
    """Beamforming bounds of all users at ``ws``.

    With ``grad`` the Jacobians w.r.t. ``Wc`` and ``Wk`` are returned as
    ``(Jp_Wk, Jc_Wc, Jc_Wk)`` of shapes (K,K,N_BS,d_p), (K,N_BS,d_c),
    (K,K,N_BS,d_p); the private bound does not depend on ``Wc``.
    """
    if consts.kind != "bf":
        raise InvalidInputError("constants were not built for beamforming")
    H = consts.H
    if ws.Wk.shape[0] != H.shape[0] or ws.Wk.shape[1] != H.shape[2]:
        raise InvalidInputError("beamformer dimensions do not match the constants")
    Vc, Vp = products(H, ws)
    if not grad:
        return eval_products(consts, Vc, Vp)
    r_p, r_c, (Gp_p, Gc_c, Gc_p) = eval_products(consts, Vc, Vp, grad=True)
    Hh = np.conj(np.swapaxes(H, -1, -2))
    Jp_Wk = Hh[:, None] @ Gp_p
    Jc_Wc = Hh @ Gc_c
    Jc_Wk = Hh[:, None] @ Gc_p
    return r_p, r_c, (Jp_Wk, Jc_Wc, Jc_Wk)


def side_match(cs: ChannelSet, mask) -> np.ndarray:
    """(K, M) boolean: element m reaches user k under the mode mask."""
    mode = np.array(["r" if s == "reflect" else "t" for s in cs.side])
    return mode[:, None] == np.asarray(mask)[None, :]


def channels_from_active(cs: ChannelSet, theta_active, match) -> np.ndarray:
    theta = match * np.asarray(theta_active)[None, :]
    return np.einsum("kam,km,mb->kab", cs.Dk, theta, cs.D) + cs.Gk


def ris_surrogate(consts: SurrogateConstants, cs: ChannelSet, theta_active, match,
                  grad: bool = False):
    """RIS bounds of all users at one-coefficient-per-element ``theta_active``.

    ``match`` is :func:`side_match` for the mode mask in use. With ``grad``
    the Jacobians ``(Jp, Jc)`` w.r.t. ``theta_active`` have shape (K, M).
    """
    if consts.kind != "ris":
        raise InvalidInputError("constants were not built for the RIS")
    ws = consts.ws
    H = channels_from_active(cs, theta_active, match)
    Vc, Vp = products(H, ws)
    if not grad:
        return eval_products(consts, Vc, Vp)
    r_p, r_c, (Gp_p, Gc_c, Gc_p) = eval_products(consts, Vc, Vp, grad=True)
    WkH = np.conj(np.swapaxes(ws.Wk, -1, -2))
    GH_p = np.einsum("kiad,idb->kab", Gp_p, WkH)
    GH_c = Gc_c @ np.conj(ws.Wc.T) + np.einsum("kiad,idb->kab", Gc_p, WkH)
    Dk_c, D_c = np.conj(cs.Dk), np.conj(cs.D)
    Jp = match * np.einsum("kam,kab,mb->km", Dk_c, GH_p, D_c)
    Jc = match * np.einsum("kam,kab,mb->km", Dk_c, GH_c, D_c)
    return r_p, r_c, (Jp, Jc)


def _pick(which):
    kind, k = which
    if kind not in ("private", "common"):
        raise InvalidInputError(f"unknown message type {kind!r}")
    return kind, int(k)


def eval_bf_surrogate(consts: SurrogateConstants, ws: BeamformerSet, which):
    """Value and real-stacked gradient of one beamforming bound.

    ``which`` is ``("private", k)`` or ``("common", k)``. The gradient is over
    ``[Re(Wc, Wk), Im(Wc, Wk)]`` with ``Wc`` flattened before ``Wk``.
    """
    kind, k = _pick(which)
    r_p, r_c, (Jp_Wk, Jc_Wc, Jc_Wk) = bf_surrogate(consts, ws, grad=True)
    if kind == "private":
        gz = np.concatenate([np.zeros(ws.Wc.size, complex), Jp_Wk[k].ravel()])
        return float(r_p[k]), complex_to_real(gz)
    gz = np.concatenate([Jc_Wc[k].ravel(), Jc_Wk[k].ravel()])
    return float(r_c[k]), complex_to_real(gz)


def eval_ris_surrogate(consts: SurrogateConstants, cs: ChannelSet, ris: StarRisState, which):
    """Value and real-stacked gradient (over ``[Re theta, Im theta]``) of one RIS bound."""
    kind, k = _pick(which)
    match = side_match(cs, ris.mask)
    r_p, r_c, (Jp, Jc) = ris_surrogate(consts, cs, ris.active, match, grad=True)
    if kind == "private":
        return float(r_p[k]), complex_to_real(Jp[k])
    return float(r_c[k]), complex_to_real(Jc[k])


def update_eta(report: RateReport) -> np.ndarray:
    """Quadratic-transform weights ``sqrt(r_k) / p_k``."""
    return np.sqrt(np.maximum(report.r_k, 0.0)) / report.p_k
