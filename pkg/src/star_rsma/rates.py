"""
Finite-blocklength common/private rates, per-user power and energy efficiency.

Rates are in nats per channel use. Internal routines are vectorized over
users; the single-user functions are thin wrappers kept for clarity and
testing.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, ScenarioConfig, StarRisState, compose_all
from .numerics import (ConstraintViolationError, InvalidInputError, inv_q,
                       logdet_hpd, solve_hpd)


@dataclass(frozen=True)
class BeamformerSet:
    """Common beamformer ``Wc`` (N_BS, d_c) and private ones ``Wk`` (K, N_BS, d_p)."""
    Wc: np.ndarray
    Wk: np.ndarray

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.Wc) ** 2) + np.sum(np.abs(self.Wk) ** 2))

    def scaled(self, factor: float) -> "BeamformerSet":
        return BeamformerSet(self.Wc * factor, self.Wk * factor)

    @property
    def K(self) -> int:
        return self.Wk.shape[0]

    @classmethod
    def zeros(cls, cfg: ScenarioConfig) -> "BeamformerSet":
        return cls(np.zeros((cfg.N_BS, cfg.streams_common), dtype=complex),
                   np.zeros((cfg.K, cfg.N_BS, cfg.streams_private), dtype=complex))

    def without_common(self) -> "BeamformerSet":
        return dataclasses.replace(self, Wc=np.zeros_like(self.Wc))


@dataclass(frozen=True)
class FblParams:
    n_c: int
    n_p: int
    eps_c: float
    eps_p: float

    def __post_init__(self):
        if self.n_c < 1 or self.n_p < 1:
            raise InvalidInputError("blocklengths must be >= 1")
        if not (0 < self.eps_c < 1 and 0 < self.eps_p < 1):
            raise InvalidInputError("error targets must lie in (0, 1)")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "FblParams":
        return cls(cfg.n_c, cfg.n_p, cfg.eps_c, cfg.eps_p)

    @property
    def eps_total(self) -> float:
        return self.eps_c + self.eps_p

    @property
    def dispersion_c(self) -> float:
        """Weight ``Q^{-1}(eps_c) / sqrt(n_c)`` of the common-stream dispersion."""
        return inv_q(self.eps_c) / np.sqrt(self.n_c)

    @property
    def dispersion_p(self) -> float:
        return inv_q(self.eps_p) / np.sqrt(self.n_p)


@dataclass(frozen=True)
class RateReport:
    r_kp: np.ndarray  # private rates, clamped at zero
    r_kc: np.ndarray  # common decoding rates, raw
    common_cap: float
    q: np.ndarray
    r_k: np.ndarray
    p_k: np.ndarray
    e_k: np.ndarray
    min_ee: float
    r_kp_raw: np.ndarray


def _gram(V):
    return V @ np.conj(np.swapaxes(V, -1, -2))


def _trace_quad(S, V):
    """Real ``Tr(V^H S^{-1} V)`` over stacks."""
    X = solve_hpd(S, V)
    return np.real(np.einsum("...ab,...ab->...", np.conj(V), X))


def products(H: np.ndarray, ws: BeamformerSet):
    """Received beam products ``H_k W_c`` (K, N_u, d_c) and ``H_k W_i`` (K, K, N_u, d_p)."""
    Vc = H @ ws.Wc
    Vp = np.einsum("kab,ibd->kiad", H, ws.Wk)
    return Vc, Vp


def rates_from_products(Vc, Vp, sigma2, fbl: FblParams):
    """Raw private and common FBL rates of every user from beam products."""
    K, _, n_u, _ = Vp.shape
    eye = np.eye(n_u)
    G = _gram(Vp)  # (K, K, N_u, N_u)
    S = sigma2 * eye + G.sum(axis=1)
    own = G[np.arange(K), np.arange(K)]
    N = S - own
    T = S + _gram(Vc)
    Vkk = Vp[np.arange(K), np.arange(K)]

    v_p = 2.0 * _trace_quad(S, Vkk)
    r_p = logdet_hpd(S) - logdet_hpd(N) - fbl.dispersion_p * np.sqrt(np.maximum(v_p, 0.0))
    v_c = 2.0 * _trace_quad(T, Vc)
    r_c = logdet_hpd(T) - logdet_hpd(S) - fbl.dispersion_c * np.sqrt(np.maximum(v_c, 0.0))
    return np.atleast_1d(r_p), np.atleast_1d(r_c)


def all_rates(H: np.ndarray, ws: BeamformerSet, sigma2: float, fbl: FblParams):
    """Raw ``(r_kp, r_kc)`` arrays for composite channels ``H`` (K, N_u, N_BS)."""
    Vc, Vp = products(H, ws)
    return rates_from_products(Vc, Vp, sigma2, fbl)


def _single_user_H(H_k, ws, k):
    H_k = np.asarray(H_k, dtype=complex)
    if H_k.ndim != 2 or H_k.shape[1] != ws.Wk.shape[1]:
        raise InvalidInputError(f"channel shape {H_k.shape} does not match beamformers")
    if not 0 <= k < ws.K:
        raise IndexError(k)
    return H_k


def private_rate(H_k, ws: BeamformerSet, sigma2: float, fbl: FblParams, k: int = 0) -> float:
    """Raw FBL private rate of user ``k`` after common-stream cancellation."""
    H_k = _single_user_H(H_k, ws, k)
    H = np.repeat(H_k[None], ws.K, axis=0)
    r_p, _ = all_rates(H, ws, sigma2, fbl)
    return float(r_p[k])


def common_rate(H_k, ws: BeamformerSet, sigma2: float, fbl: FblParams, k: int = 0) -> float:
    """Raw FBL rate at which user ``k`` decodes the common stream."""
    H_k = _single_user_H(H_k, ws, k)
    H = np.repeat(H_k[None], ws.K, axis=0)
    _, r_c = all_rates(H, ws, sigma2, fbl)
    return float(r_c[k])


def common_cap(r_kc) -> float:
    return max(0.0, float(np.min(r_kc)))


def user_powers(ws: BeamformerSet, P_C: float, beta: float) -> np.ndarray:
    """Consumed power of every user; the common-stream power is shared equally."""
    K = ws.K
    pc = np.sum(np.abs(ws.Wc) ** 2)
    pk = np.sum(np.abs(ws.Wk) ** 2, axis=(1, 2))
    return P_C + beta * (pc / K + pk)


def user_power(ws: BeamformerSet, k: int, P_C: float, beta: float, K: int | None = None) -> float:
    if K is not None and K != ws.K:
        raise InvalidInputError("K does not match the beamformer set")
    return float(user_powers(ws, P_C, beta)[k])


def energy_efficiency(r_k, p_k):
    return np.maximum(r_k, 0.0) / p_k


def evaluate(cs: ChannelSet, ris: StarRisState, ws: BeamformerSet, q,
             cfg: ScenarioConfig, fbl: FblParams | None = None) -> RateReport:
    """True rates, powers and per-user EE for given shares ``q``."""
    fbl = FblParams.from_config(cfg) if fbl is None else fbl
    H = compose_all(cs, ris)
    r_p_raw, r_c = all_rates(H, ws, cfg.sigma2, fbl)
    return report_from_rates(r_p_raw, r_c, ws, q, cfg)


def report_from_rates(r_p_raw, r_c, ws, q, cfg, tol=1e-9) -> RateReport:
    cap = common_cap(r_c)
    q = np.zeros(ws.K) if q is None else np.asarray(q, dtype=float)
    if np.any(q < -tol) or q.sum() > cap + tol:
        raise ConstraintViolationError(f"shares sum {q.sum():.3e} exceed common cap {cap:.3e}")
    q = np.maximum(q, 0.0)
    r_p = np.maximum(r_p_raw, 0.0)
    r_k = r_p + q
    p_k = user_powers(ws, cfg.P_C, cfg.beta)
    e_k = energy_efficiency(r_k, p_k)
    return RateReport(r_kp=r_p, r_kc=r_c, common_cap=cap, q=q, r_k=r_k, p_k=p_k,
                      e_k=e_k, min_ee=float(e_k.min()), r_kp_raw=r_p_raw)
