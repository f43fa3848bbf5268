"""
Alternating optimization of beamformers, STAR-RIS coefficients and
common-rate shares for max-min energy efficiency.

Each block update maximizes a concave surrogate problem built from the rate
bounds in :mod:`star_rsma.surrogate`. Two inner engines are available: SLSQP
on the epigraph form (default) and a first-order projected-gradient method
with log-sum-exp smoothing of the min and quadratic penalties.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .channel import (ChannelSet, ScenarioConfig, StarRisState, compose_all,
                      default_mode_mask)
from . import conic
from .numerics import (InvalidInputError, NumericDomainError, complex_to_real,
                       project_power, project_unit_disk, real_to_complex)
from .rates import (BeamformerSet, FblParams, RateReport, all_rates, report_from_rates,
                    user_powers)
from .surrogate import (SurrogateConstants, build_bf_constants, build_ris_constants,
                        bf_surrogate, ris_surrogate, side_match, update_eta)

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max-iters"
INFEASIBLE = "infeasible-min-rate"


@dataclass(frozen=True)
class SolverSettings:
    """Inner-engine and outer-loop controls.

    The projected-gradient engine walks the smoothing and penalty schedules
    in lockstep (the shorter one holds its last value).
    """
    engine: str = "conic"
    rho_schedule: tuple = (10.0, 100.0, 1000.0)
    mu_schedule: tuple = (1.0, 10.0, 100.0, 1e3, 1e4)
    step_init: float = 1.0
    step_shrink: float = 0.5
    armijo_slope: float = 1e-4
    inner_max_iter: int = 500
    inner_grad_tol: float = 1e-6
    slsqp_max_iter: int = 100
    slsqp_ftol: float = 1e-12
    ao_tol: float = 1e-5
    ao_max_iter: int = 50
    feasibility_max_iter: int = 20
    common_probe_fraction: float = 0.05
    extrapolate: bool = True

    def __post_init__(self):
        if self.engine not in ("conic", "slsqp", "pga"):
            raise InvalidInputError(f"unknown engine {self.engine!r}")
        for name in ("rho_schedule", "mu_schedule"):
            s = np.asarray(getattr(self, name), dtype=float)
            if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
                raise InvalidInputError(f"{name} must be positive and strictly increasing")
        if min(self.inner_grad_tol, self.ao_tol, self.step_init) <= 0:
            raise InvalidInputError("tolerances and initial step must be positive")
        if not 0 < self.step_shrink < 1:
            raise InvalidInputError("step_shrink must lie in (0, 1)")


@dataclass(frozen=True)
class ProblemWiring:
    """Which blocks are free.

    ``scheme`` is ``'rsma'`` or ``'tin'``; ``mask`` is the element mode mask;
    ``optimize_ris`` False keeps ``fixed_theta`` (one coefficient per
    element) throughout.
    """
    scheme: str = "rsma"
    mask: np.ndarray | None = None
    optimize_ris: bool = True
    fixed_theta: np.ndarray | None = None

    @property
    def rsma(self) -> bool:
        return self.scheme == "rsma"


@dataclass
class SolveResult:
    ws: BeamformerSet
    ris: StarRisState
    q: np.ndarray
    report: RateReport
    trajectory: list
    status: str
    iterations: int
    feasibility_iterations: int = 0


@dataclass(frozen=True)
class ShareAllocation:
    q: np.ndarray
    value: float
    feasible: bool


# --------------------------------------------------------------------------
# smoothing helpers

def softmin(f, rho):
    """Log-sum-exp lower approximation of ``min(f)`` and its weights."""
    f = np.asarray(f, dtype=float)
    m = f.min()
    e = np.exp(-rho * (f - m))
    s = e.sum()
    return m - np.log(s) / rho, e / s


def _sqrt_ext(s, delta=1e-10):
    """sqrt extended linearly below ``delta`` (concave, C1)."""
    s = np.asarray(s, dtype=float)
    rd = np.sqrt(delta)
    safe = np.maximum(s, delta)
    val = np.where(s >= delta, np.sqrt(safe), rd + (s - delta) / (2 * rd))
    der = np.where(s >= delta, 0.5 / np.sqrt(safe), 0.5 / rd)
    return val, der


# --------------------------------------------------------------------------
# exact share allocation

def _level_fill(required: Callable[[float], np.ndarray], cap: float, t_lo: float,
                t_hi: float, tol: float = 1e-10):
    """Largest level ``t`` whose share requirement fits in ``cap`` (bisection)."""
    if np.sum(required(t_hi)) <= cap:
        return t_hi
    while t_hi - t_lo > tol * max(1.0, abs(t_lo), abs(t_hi)):
        mid = 0.5 * (t_lo + t_hi)
        if np.sum(required(mid)) <= cap:
            t_lo = mid
        else:
            t_hi = mid
    return t_lo


def allocate_common_rate(private_rates, powers, cap: float, r_th: float = 0.0,
                         tol: float = 1e-10) -> ShareAllocation:
    """Shares maximizing ``min_k (r_k + q_k) / p_k``.

    Subject to ``q >= 0``, ``sum(q) <= cap`` and ``r_k + q_k >= r_th``.
    """
    r = np.asarray(private_rates, dtype=float)
    p = np.asarray(powers, dtype=float)
    if cap < 0:
        raise InvalidInputError("cap must be non-negative")
    q_min = np.maximum(0.0, r_th - r)
    if q_min.sum() > cap + 1e-12:
        return ShareAllocation(q_min, float(np.min((r + q_min) / p)), False)

    def required(t):
        return np.maximum(q_min, t * p - r)

    t_lo = float(np.min((r + q_min) / p))
    t_hi = float(np.max((r + q_min + cap) / p))
    t = _level_fill(required, cap, t_lo, t_hi, tol)
    q = _fit_cap(required(t), q_min, cap)
    return ShareAllocation(q, float(np.min((r + q) / p)), True)


def _fit_cap(q, q_min, cap):
    """Shrink the shares above ``q_min`` so rounding in the level search
    never lets ``sum(q)`` exceed ``cap``; a zero cap gives exact zeros."""
    extra = q - q_min
    room = max(0.0, cap - float(q_min.sum()))
    total = float(extra.sum())
    if total > room:
        extra = extra * (room / total) if room > 0 else np.zeros_like(extra)
    return q_min + extra


def _objective_values(obj, r, q, p):
    if obj["kind"] == "qt":
        eta = obj["eta"]
        s, _ = _sqrt_ext(r + q)
        return 2.0 * eta * s - eta ** 2 * p
    return (r + q) * obj["w"]


def _fill_for_objective(obj, r, p, cap, r_th):
    """Exact shares for either stage objective; returns (q, value, feasible)."""
    if obj["kind"] == "ratio":
        a = allocate_common_rate(r, 1.0 / obj["w"], cap, r_th)
        return a.q, a.value, a.feasible
    eta = obj["eta"]
    q_min = np.maximum(0.0, r_th - r)
    if q_min.sum() > cap + 1e-12:
        return q_min, float(np.min(_objective_values(obj, r, q_min, p))), False
    pos = eta > 0

    def required(t):
        need = np.where(pos, ((t + eta ** 2 * p) / (2.0 * np.where(pos, eta, 1.0))) ** 2 - r, 0.0)
        need = np.where(pos & (t + eta ** 2 * p <= 0), 0.0, need)
        need = np.where(~pos & (t > 0), np.inf, need)
        return np.maximum(q_min, need)

    t_lo = float(np.min(_objective_values(obj, r, q_min, p)))
    t_hi = float(np.max(_objective_values(obj, r, q_min + cap, p)))
    t = _level_fill(required, cap, t_lo, max(t_lo, t_hi))
    q = _fit_cap(np.minimum(required(t), q_min + cap), q_min, cap)
    return q, float(np.min(_objective_values(obj, r, q, p))), True


# --------------------------------------------------------------------------
# stage problems: a real primary variable x plus rate/power maps

def _switch_off(out, off):
    """Replace the private bound of ``off`` users by the constant 0.

    Both 0 and the bound are lower bounds of the clamped private rate; the
    constant is the tight one where the raw rate is negative.
    """
    if off is None or not np.any(off):
        return out
    out = list(out)
    out[0] = np.where(off, 0.0, out[0])
    if len(out) == 4:
        out[2] = np.where(off[:, None], 0.0, out[2])
    return tuple(out)


class _BfStage:
    """Beamformers scaled by sqrt(P) so the feasible set is the unit ball."""

    def __init__(self, consts: SurrogateConstants, cfg: ScenarioConfig, common: bool):
        self.consts = consts
        self.cfg = cfg
        self.common = common
        self.scale = np.sqrt(cfg.P)
        ws = consts.ws
        self.shape_c = ws.Wc.shape
        self.shape_k = ws.Wk.shape
        self.nc = ws.Wc.size if common else 0
        self.nz = self.nc + ws.Wk.size
        self.n = 2 * self.nz
        self.K = ws.K
        self.off = None

    def pack(self, ws: BeamformerSet) -> np.ndarray:
        parts = [ws.Wc.ravel()] if self.common else []
        parts.append(ws.Wk.ravel())
        return complex_to_real(np.concatenate(parts) / self.scale)

    def unpack(self, x) -> BeamformerSet:
        z = real_to_complex(x) * self.scale
        Wc = z[:self.nc].reshape(self.shape_c) if self.common else np.zeros(self.shape_c, complex)
        return BeamformerSet(Wc, z[self.nc:].reshape(self.shape_k))

    def _real_jac(self, Jz):
        return np.concatenate([Jz.real, Jz.imag], axis=1)

    def rates(self, x, grad=False):
        ws = self.unpack(x)
        if not grad:
            return _switch_off(bf_surrogate(self.consts, ws), self.off)
        r_p, r_c, (Jp_Wk, Jc_Wc, Jc_Wk) = bf_surrogate(self.consts, ws, grad=True)
        K = self.K
        jp = [np.zeros((K, self.nc), complex)] if self.common else []
        jc = [Jc_Wc.reshape(K, -1)] if self.common else []
        Jp = np.concatenate(jp + [Jp_Wk.reshape(K, -1)], axis=1) * self.scale
        Jc = np.concatenate(jc + [Jc_Wk.reshape(K, -1)], axis=1) * self.scale
        return _switch_off((r_p, r_c, self._real_jac(Jp), self._real_jac(Jc)), self.off)

    def powers(self, x, grad=False):
        cfg, K = self.cfg, self.K
        z = real_to_complex(x)
        uc = z[:self.nc]
        uk = z[self.nc:].reshape(K, -1)
        P = cfg.P
        p = cfg.P_C + cfg.beta * P * (np.sum(np.abs(uc) ** 2) / K + np.sum(np.abs(uk) ** 2, axis=1))
        if not grad:
            return p
        J = np.zeros((K, self.nz), complex)
        J[:, :self.nc] = 2.0 * cfg.beta * P * uc / K
        for k in range(K):
            sl = slice(self.nc + k * uk.shape[1], self.nc + (k + 1) * uk.shape[1])
            J[k, sl] = 2.0 * cfg.beta * P * uk[k]
        return p, self._real_jac(J)

    def set_ineq(self, x):
        return np.array([1.0 - x @ x]), -2.0 * x[None, :]

    def project(self, x):
        nrm = np.linalg.norm(x)
        return x / nrm if nrm > 1.0 else x

    def conic_solve(self, obj, min_rate):
        ws = self.consts.ws
        model = conic.bf_model(self.K, ws.Wk.shape[1], self.consts.H.shape[1], ws.Wc.shape[1],
                               ws.Wk.shape[2], self.common, obj["kind"], min_rate)
        out = model.solve(self.consts, self.unpack(self.x0), self.cfg, obj, off_users=self.off)
        if out is None:
            return None
        Wc = out[0] if self.common else np.zeros(self.shape_c, complex)
        return self.pack(BeamformerSet(Wc, out[1]))


class _RisStage:
    """One complex coefficient per element, routed to t or r by the mask."""

    def __init__(self, consts: SurrogateConstants, cs: ChannelSet, mask, p_fixed,
                 common: bool, r_th: float):
        self.consts = consts
        self.cs = cs
        self.common = common
        self.r_th = r_th
        self.off = None
        self.mask = np.asarray(mask)
        self.match = side_match(cs, mask)
        self.M = len(mask)
        self.n = 2 * self.M
        self.K = cs.K
        self.p = np.asarray(p_fixed, dtype=float)

    def pack(self, theta_active):
        return complex_to_real(theta_active)

    def unpack(self, x):
        return real_to_complex(x)

    def rates(self, x, grad=False):
        th = real_to_complex(x)
        if not grad:
            return _switch_off(ris_surrogate(self.consts, self.cs, th, self.match), self.off)
        r_p, r_c, (Jp, Jc) = ris_surrogate(self.consts, self.cs, th, self.match, grad=True)
        return _switch_off((r_p, r_c, np.concatenate([Jp.real, Jp.imag], axis=1),
                            np.concatenate([Jc.real, Jc.imag], axis=1)), self.off)

    def powers(self, x, grad=False):
        return self.p if not grad else (self.p, np.zeros((self.K, self.n)))

    def set_ineq(self, x):
        M = self.M
        g = 1.0 - x[:M] ** 2 - x[M:] ** 2
        J = np.zeros((M, self.n))
        J[np.arange(M), np.arange(M)] = -2.0 * x[:M]
        J[np.arange(M), M + np.arange(M)] = -2.0 * x[M:]
        return g, J

    def project(self, x):
        return complex_to_real(project_unit_disk(real_to_complex(x), np.ones(self.M, bool)))

    def conic_solve(self, obj, min_rate):
        support = tuple(tuple(int(m) for m in np.flatnonzero(row)) for row in self.match)
        model = conic.ris_model(self.K, self.M, support, self.common, obj["kind"], min_rate)
        theta = model.solve(self.consts, self.cs, self.unpack(self.x0), obj, r_th=self.r_th,
                            off_users=self.off)
        return None if theta is None else self.pack(theta)


# --------------------------------------------------------------------------
# inner engines

def _solve_slsqp(stage, obj, q0, use_common, r_th, settings: SolverSettings):
    K, n = stage.K, stage.n
    qt = obj["kind"] == "qt"
    nq = K if use_common else 0
    nz = K if qt else 0
    x0 = stage.x0
    r_p0, _ = stage.rates(x0)
    p0 = stage.powers(x0)
    q_init = np.asarray(q0, float) if use_common else np.zeros(K)
    z0 = np.sqrt(np.maximum(r_p0 + q_init, 0.0)) if qt else np.zeros(0)
    if qt:
        phi0 = 2.0 * obj["eta"] * z0 - obj["eta"] ** 2 * p0
    else:
        phi0 = (r_p0 + q_init) * obj["w"]
    t_scale = max(float(np.max(np.abs(phi0))), 1e-12)
    y0 = np.concatenate([x0, q_init[:nq], z0, [phi0.min() / t_scale]])
    iq = slice(n, n + nq)
    iz = slice(n + nq, n + nq + nz)
    cache = {}

    def evaluate(y):
        key = y.tobytes()
        if key in cache:
            return cache[key]
        x = y[:n]
        q = y[iq] if use_common else np.zeros(K)
        t = y[-1]
        r_p, r_c, Jp, Jc = stage.rates(x, grad=True)
        p, Jpow = stage.powers(x, grad=True)
        g_set, J_set = stage.set_ineq(x)
        rows, jac = [], []
        ny = y.size

        def blank(m):
            return np.zeros((m, ny))

        if qt:
            eta, z = obj["eta"], y[iz]
            rows.append((2.0 * eta * z - eta ** 2 * p) / t_scale - t)
            J = blank(K)
            J[:, :n] = -(eta ** 2)[:, None] * Jpow / t_scale
            J[np.arange(K), n + nq + np.arange(K)] = 2.0 * eta / t_scale
            J[:, -1] = -1.0
            jac.append(J)
            rows.append(r_p + q - z ** 2)
            J = blank(K)
            J[:, :n] = Jp
            if use_common:
                J[np.arange(K), n + np.arange(K)] = 1.0
            J[np.arange(K), n + nq + np.arange(K)] = -2.0 * z
            jac.append(J)
        else:
            w = obj["w"]
            rows.append((r_p + q) * w / t_scale - t)
            J = blank(K)
            J[:, :n] = w[:, None] * Jp / t_scale
            if use_common:
                J[np.arange(K), n + np.arange(K)] = w / t_scale
            J[:, -1] = -1.0
            jac.append(J)
        if r_th > 0:
            rows.append(r_p + q - r_th)
            J = blank(K)
            J[:, :n] = Jp
            if use_common:
                J[np.arange(K), n + np.arange(K)] = 1.0
            jac.append(J)
        if use_common:
            rows.append(r_c - q.sum())
            J = blank(K)
            J[:, :n] = Jc
            J[:, iq] = -1.0
            jac.append(J)
        rows.append(g_set)
        J = blank(g_set.size)
        J[:, :n] = J_set
        jac.append(J)
        out = (np.concatenate(rows), np.vstack(jac))
        cache.clear()
        cache[key] = out
        return out

    ny = y0.size
    grad_f = np.zeros(ny)
    grad_f[-1] = -1.0
    bounds = [(None, None)] * n + [(0.0, None)] * (nq + nz) + [(None, None)]
    res = minimize(lambda y: -y[-1], y0, jac=lambda y: grad_f, method="SLSQP",
                   bounds=bounds,
                   constraints=[{"type": "ineq", "fun": lambda y: evaluate(y)[0],
                                 "jac": lambda y: evaluate(y)[1]}],
                   options={"maxiter": settings.slsqp_max_iter, "ftol": settings.slsqp_ftol})
    log.debug("slsqp nit=%d status=%d", res.nit, res.status)
    y = res.x if np.all(np.isfinite(res.x)) else y0
    x = stage.project(y[:n])
    return x


def _penalized(stage, obj, y, use_common, r_th, rho, mu):
    """Smoothed, penalized stage objective and its gradient over ``y = [x, q]``."""
    n, K = stage.n, stage.K
    x = y[:n]
    q = y[n:] if use_common else np.zeros(K)
    r_p, r_c, Jp, Jc = stage.rates(x, grad=True)
    p, Jpow = stage.powers(x, grad=True)
    s = r_p + q
    if obj["kind"] == "qt":
        eta = obj["eta"]
        sq, dsq = _sqrt_ext(s)
        phi = 2.0 * eta * sq - eta ** 2 * p
        dphi_ds = 2.0 * eta * dsq
        Jphi_x = dphi_ds[:, None] * Jp - (eta ** 2)[:, None] * Jpow
    else:
        w = obj["w"]
        phi = s * w
        dphi_ds = w
        Jphi_x = w[:, None] * Jp
    val, pi = softmin(phi, rho)
    gx = pi @ Jphi_x
    gq = pi * dphi_ds
    if r_th > 0:
        viol = np.maximum(0.0, r_th - s)
        val -= 0.5 * mu * np.sum(viol ** 2)
        gx += mu * viol @ Jp
        gq = gq + mu * viol
    if use_common:
        viol = np.maximum(0.0, q.sum() - r_c)
        val -= 0.5 * mu * np.sum(viol ** 2)
        gx += mu * viol @ Jc
        gq = gq - mu * viol.sum()
        return val, np.concatenate([gx, gq])
    return val, gx


def _project_y(stage, y, use_common):
    n = stage.n
    x = stage.project(y[:n])
    if use_common:
        return np.concatenate([x, np.maximum(y[n:], 0.0)])
    return x


def _solve_pga(stage, obj, q0, use_common, r_th, settings: SolverSettings, trace=None):
    """Projected-gradient ascent with Armijo backtracking and (rho, mu) continuation.

    ``trace``, if a list, receives ``(rho, mu, f_before, f_after)`` for every
    accepted step.
    """
    y = stage.x0.copy()
    if use_common:
        y = np.concatenate([y, np.asarray(q0, float)])
    rhos, mus = settings.rho_schedule, settings.mu_schedule
    n_stages = max(len(rhos), len(mus))
    for i in range(n_stages):
        rho = rhos[min(i, len(rhos) - 1)]
        mu = mus[min(i, len(mus) - 1)]
        f, g = _penalized(stage, obj, y, use_common, r_th, rho, mu)
        step = settings.step_init
        for _ in range(settings.inner_max_iter):
            while True:
                y_new = _project_y(stage, y + step * g, use_common)
                d = y_new - y
                f_new, g_new = _penalized(stage, obj, y_new, use_common, r_th, rho, mu)
                if f_new >= f + settings.armijo_slope * (g @ d) or step < 1e-16:
                    break
                step *= settings.step_shrink
            if step < 1e-16 or not np.isfinite(f_new):
                break
            if trace is not None:
                trace.append((rho, mu, f, f_new))
            done = np.linalg.norm(d) / step < settings.inner_grad_tol
            y, f, g = y_new, f_new, g_new
            step = min(step * 2.0, 1e6)
            if done:
                break
    return y[:stage.n]


def _run_engine(stage, obj, q0, use_common, r_th, settings):
    if settings.engine == "conic":
        x = stage.conic_solve(obj, r_th > 0)
        return stage.x0 if x is None else stage.project(x)
    if settings.engine == "pga":
        return _solve_pga(stage, obj, q0, use_common, r_th, settings)
    return _solve_slsqp(stage, obj, q0, use_common, r_th, settings)


def _finish_stage(stage, obj_fn, x_new, q_bar, use_common, r_th):
    """Exact shares at the new point, and the surrogate objective at old and new."""
    x0 = stage.x0
    r_p0, _ = stage.rates(x0)
    obj0 = obj_fn(x0)
    q_bar = np.asarray(q_bar, float) if use_common else np.zeros(stage.K)
    base = float(np.min(_objective_values(obj0, r_p0, q_bar, stage.powers(x0))))
    r_p, r_c = stage.rates(x_new)
    obj1 = obj_fn(x_new)
    cap = max(0.0, float(np.min(r_c))) if use_common else 0.0
    q, value, feasible = _fill_for_objective(obj1, r_p, stage.powers(x_new), cap, r_th)
    return q, value, feasible, base


# --------------------------------------------------------------------------
# block updates

def _normalize(cs: ChannelSet, cfg: ScenarioConfig):
    """Noise-normalized channels (sigma2 = 1); rates are unchanged."""
    if cfg.sigma2 == 1.0:
        return cs, cfg
    return cs.scaled(1.0 / np.sqrt(cfg.sigma2)), cfg.replace(sigma2=1.0)


def _probe_common(cs, ris, ws, cfg, fraction):
    """A small matched-filter common beamformer used as an expansion point."""
    H = compose_all(cs, ris)
    _, _, vh = np.linalg.svd(H.reshape(-1, H.shape[-1]))
    d_c = ws.Wc.shape[1]
    Wc = np.zeros_like(ws.Wc)
    m = min(d_c, vh.shape[0])
    Wc[:, :m] = np.conj(vh[:m].T)
    Wc *= np.sqrt(fraction * cfg.P / max(m, 1))
    return dataclasses.replace(ws, Wc=Wc)


def _start(stage, x0, objective):
    """Set the expansion point; for the EE objective, users whose private
    bound is negative there get the constant-zero bound instead."""
    stage.x0 = x0
    if objective == "ee":
        stage.off = stage.rates(x0)[0] < 0.0


def solve_beamforming(cs: ChannelSet, ris: StarRisState, ws: BeamformerSet, eta,
                      cfg: ScenarioConfig, settings: SolverSettings | None = None, *,
                      q=None, common: bool = True, objective: str = "ee"):
    """One beamforming block update; returns ``(BeamformerSet, shares)``.

    ``objective='ee'`` maximizes ``min_k 2 eta_k sqrt(r_k + q_k) - eta_k^2 p_k``
    over surrogate rates; ``objective='rate'`` maximizes ``min_k r_k + q_k``
    (used to reach the minimum-rate constraints). With ``common=False`` the
    common beamformer is pinned to zero and no shares are allocated. If the
    update does not improve the surrogate objective the input is returned.
    """
    settings = settings or SolverSettings()
    cs, cfg = _normalize(cs, cfg)
    K = ws.K
    q = np.zeros(K) if q is None or not common else np.asarray(q, float)
    ws_in = ws if common else ws.without_common()
    consts = build_bf_constants(cs, ris, ws_in, cfg)
    if common and np.all(consts.degenerate_c):
        probe = build_bf_constants(cs, ris, _probe_common(cs, ris, ws_in, cfg,
                                                          settings.common_probe_fraction), cfg)
        consts = dataclasses.replace(consts, a_c=probe.a_c, A_c=probe.A_c, A_ci=probe.A_ci,
                                     B_c=probe.B_c, v_c=probe.v_c,
                                     degenerate_c=probe.degenerate_c)
    stage = _BfStage(consts, cfg, common)
    _start(stage, stage.pack(ws_in), objective)
    eta = np.asarray(eta, dtype=float)

    def obj_fn(x):
        if objective == "ee":
            return {"kind": "qt", "eta": eta}
        return {"kind": "ratio", "w": np.ones(K)}

    if objective == "ee" and not np.any(eta > 0):
        return ws, q
    x_new = _run_engine(stage, obj_fn(stage.x0), q, common, cfg.r_th, settings)
    q_new, value, feasible, base = _finish_stage(stage, obj_fn, x_new, q, common, cfg.r_th)
    if not np.isfinite(value):
        raise NumericDomainError("non-finite surrogate objective")
    if not feasible or value <= base:
        return ws, q
    return stage.unpack(x_new), q_new


def solve_ris(cs: ChannelSet, ws: BeamformerSet, ris: StarRisState, cfg: ScenarioConfig,
              settings: SolverSettings | None = None, *, q=None, common: bool = True,
              objective: str = "ee"):
    """One RIS block update; returns ``(StarRisState, shares)``.

    Maximizes ``min_k (r_k + q_k) / p_k`` over surrogate rates with the
    powers fixed (``objective='rate'`` drops the powers). The input is
    returned if the surrogate objective does not improve.
    """
    settings = settings or SolverSettings()
    cs, cfg = _normalize(cs, cfg)
    K = ws.K
    q = np.zeros(K) if q is None or not common else np.asarray(q, float)
    if ris.mask.size == 0:
        return ris, q
    consts = build_ris_constants(cs, ws, ris, cfg)
    p = user_powers(ws, cfg.P_C, cfg.beta)
    stage = _RisStage(consts, cs, ris.mask, p, common, cfg.r_th)
    _start(stage, stage.pack(ris.active), objective)
    w = 1.0 / p if objective == "ee" else np.ones(K)

    def obj_fn(x):
        return {"kind": "ratio", "w": w}

    x_new = _run_engine(stage, obj_fn(stage.x0), q, common, cfg.r_th, settings)
    q_new, value, feasible, base = _finish_stage(stage, obj_fn, x_new, q, common, cfg.r_th)
    if not np.isfinite(value):
        raise NumericDomainError("non-finite surrogate objective")
    if not feasible or value <= base:
        return ris, q
    return StarRisState.from_active(stage.unpack(x_new), ris.mask), q_new


# --------------------------------------------------------------------------
# outer loop

def initial_ris(cs: ChannelSet, mask) -> StarRisState:
    """Unit-modulus coefficients aligning each element's cascade for the
    first user on the element's side with that user's direct channel."""
    mask = np.asarray(mask)
    theta = np.ones(len(mask), dtype=complex)
    first = {}
    for k, s in enumerate(cs.side):
        first.setdefault("r" if s == "reflect" else "t", k)
    for m, mode in enumerate(mask):
        k = first.get(mode)
        if k is None:
            continue
        u, _, vh = np.linalg.svd(cs.Gk[k])
        gain = np.conj(u[:, 0]) @ np.outer(cs.Dk[k][:, m], cs.D[m]) @ np.conj(vh[0])
        if abs(gain) > 0:
            theta[m] = np.exp(-1j * np.angle(gain))
    return StarRisState.from_active(theta, mask)


def initial_beamformers(cs: ChannelSet, ris: StarRisState, cfg: ScenarioConfig,
                        rsma: bool = True) -> BeamformerSet:
    """Matched-filter directions with equal power per message."""
    H = compose_all(cs, ris)
    ws = BeamformerSet.zeros(cfg)
    n_msg = cfg.K + 1 if rsma else cfg.K
    Wk = np.zeros_like(ws.Wk)
    for k in range(cfg.K):
        _, _, vh = np.linalg.svd(H[k])
        m = min(Wk.shape[2], vh.shape[0])
        Wk[k, :, :m] = np.conj(vh[:m].T) * np.sqrt(cfg.P / n_msg / m)
    Wc = np.zeros_like(ws.Wc)
    if rsma:
        _, _, vh = np.linalg.svd(H.reshape(-1, H.shape[-1]))
        m = min(Wc.shape[1], vh.shape[0])
        Wc[:, :m] = np.conj(vh[:m].T) * np.sqrt(cfg.P / n_msg / m)
    return BeamformerSet(Wc, Wk)


def _power_variants(ws: BeamformerSet, rsma: bool):
    """The equal-power start plus rescaled copies with other total powers and,
    for rate splitting, other common-stream shares of the power."""
    out = [ws]
    pc, pk = np.sum(np.abs(ws.Wc) ** 2), np.sum(np.abs(ws.Wk) ** 2)
    total = pc + pk
    fractions = (0.5, 0.8, 0.95) if rsma and pc > 0 else (None,)
    for scale in (1.0, 0.3, 0.1, 0.03, 0.01):
        for frac in fractions:
            if frac is None:
                out.append(ws.scaled(np.sqrt(scale)))
                continue
            out.append(BeamformerSet(ws.Wc * np.sqrt(scale * frac * total / pc),
                                     ws.Wk * np.sqrt(scale * (1 - frac) * total / pk)))
    return out


def true_report(cs, ris, ws, cfg, fbl=None) -> tuple[RateReport, bool]:
    """True rates with the exact optimal shares; second item is min-rate feasibility."""
    fbl = FblParams.from_config(cfg) if fbl is None else fbl
    r_p, r_c = all_rates(compose_all(cs, ris), ws, cfg.sigma2, fbl)
    cap = max(0.0, float(np.min(r_c)))
    alloc = allocate_common_rate(np.maximum(r_p, 0.0), user_powers(ws, cfg.P_C, cfg.beta),
                                 cap, cfg.r_th)
    q = alloc.q if alloc.feasible else np.zeros(ws.K)
    return report_from_rates(r_p, r_c, ws, q, cfg), alloc.feasible


def _default_wiring(cfg):
    return ProblemWiring(scheme="rsma", mask=default_mode_mask(cfg.M))


def _apply_wiring(ws, wiring):
    return ws if wiring.rsma else ws.without_common()


def optimize(cs: ChannelSet, cfg: ScenarioConfig, settings: SolverSettings | None = None,
             wiring: ProblemWiring | None = None,
             init: Sequence[tuple[BeamformerSet, np.ndarray]] | None = None) -> SolveResult:
    """Alternating optimization of the max-min EE problem.

    ``init`` is an optional list of ``(beamformers, theta_active)`` starting
    candidates; the best one by true min-EE is used, with the default
    matched-filter start always included. The recorded trajectory holds true
    (not surrogate) min-EE values and never decreases.
    """
    settings = settings or SolverSettings()
    wiring = wiring or _default_wiring(cfg)
    mask = default_mode_mask(cfg.M) if wiring.mask is None else np.asarray(wiring.mask)
    fbl = FblParams.from_config(cfg)
    csn, cfgn = _normalize(cs, cfg)

    if wiring.optimize_ris:
        ris0 = initial_ris(csn, mask)
    else:
        fixed = np.zeros(len(mask), complex) if wiring.fixed_theta is None else wiring.fixed_theta
        ris0 = StarRisState.from_active(fixed, mask)
    base_ws = initial_beamformers(csn, ris0, cfg, wiring.rsma)
    candidates = [(ws_i, ris0) for ws_i in _power_variants(base_ws, wiring.rsma)]
    for ws_i, th_i in init or ():
        ris_i = StarRisState.from_active(th_i, mask) if wiring.optimize_ris else ris0
        candidates.append((ws_i, ris_i))

    best = None
    for ws_i, ris_i in candidates:
        ws_i = _apply_wiring(ws_i, wiring)
        if ws_i.total_power() > cfg.P * (1 + 1e-9):
            ws_i = ws_i.scaled(np.sqrt(cfg.P / ws_i.total_power()))
        rep, feas = true_report(csn, ris_i, ws_i, cfgn, fbl)
        key = (feas, rep.min_ee, float(rep.r_k.min()))
        if best is None or key > best[0]:
            best = (key, ws_i, ris_i, rep)
    _, ws, ris, report = best

    feas_iters = 0
    if (cfg.r_th > 0 and not np.all(report.r_k >= cfg.r_th)) or np.any(report.r_k <= 0):
        ws, ris, report, feas_iters = _feasibility_phase(csn, cfgn, ws, ris, report, wiring,
                                                         settings, fbl)
    if cfg.r_th > 0 and np.any(report.r_k < cfg.r_th - 1e-9):
        return SolveResult(ws, ris, report.q, report, [report.min_ee], INFEASIBLE, 0, feas_iters)

    trajectory = [report.min_ee]
    status = MAX_ITERS
    it = 0
    for it in range(1, settings.ao_max_iter + 1):
        old = report.min_ee
        eta = update_eta(report)
        ws_prev, ris_prev = ws, ris
        ws, ris, report = _ao_step(csn, cfgn, ws, ris, report, wiring, settings, fbl,
                                   objective="ee", eta=eta)
        if settings.extrapolate:
            ws, ris, report = _extrapolate(csn, cfgn, (ws_prev, ris_prev), (ws, ris), report,
                                           wiring, fbl)
        trajectory.append(report.min_ee)
        if report.min_ee - old <= settings.ao_tol * max(abs(old), 1e-300):
            status = CONVERGED
            break
    return SolveResult(ws, ris, report.q, report, trajectory, status, it, feas_iters)


def _extrapolate(cs, cfg, prev, cur, report, wiring, fbl, max_doublings=6):
    """Search along the last AO step: try ``cur + g (cur - prev)`` for
    ``g = 1, 2, 4, ...`` (projected onto the feasible set) and keep the best
    point by true min-EE."""
    (ws0, ris0), (ws1, ris1) = prev, cur
    dWc, dWk = ws1.Wc - ws0.Wc, ws1.Wk - ws0.Wk
    dth = ris1.active - ris0.active if wiring.optimize_ris else None
    best = (ws1, ris1, report)
    g = 1.0
    for _ in range(max_doublings):
        ws = project_power(BeamformerSet(ws1.Wc + g * dWc, ws1.Wk + g * dWk), cfg.P)
        ris = ris1 if dth is None else StarRisState.from_active(ris1.active + g * dth, ris1.mask)
        rep, feas = true_report(cs, ris, ws, cfg, fbl)
        if not feas or not rep.min_ee > best[2].min_ee:
            break
        best = (ws, ris, rep)
        g *= 2.0
    return best


def _accept(new, old, objective):
    if objective == "ee":
        return new.min_ee >= old.min_ee
    return float(new.r_k.min()) >= float(old.r_k.min())


def _ao_step(cs, cfg, ws, ris, report, wiring, settings, fbl, objective, eta=None):
    """One beamforming update then one RIS update, each kept only if the true
    objective does not decrease."""
    eta = np.ones(cs.K) if eta is None else eta
    accepted = False
    if wiring.rsma:
        ws_c, _ = solve_beamforming(cs, ris, ws, eta, cfg, settings, q=report.q,
                                    common=True, objective=objective)
        if ws_c is not ws:
            rep, feas = true_report(cs, ris, ws_c, cfg, fbl)
            if feas and _accept(rep, report, objective):
                ws, report, accepted = ws_c, rep, True
    # a private-only update; for rate splitting only when the common
    # stream is idle or the update above failed
    if not wiring.rsma or not accepted or report.q.sum() <= 0.05 * report.r_k.sum():
        ws_c, _ = solve_beamforming(cs, ris, ws, eta, cfg, settings, q=report.q,
                                    common=False, objective=objective)
        if ws_c is not ws:
            rep, feas = true_report(cs, ris, ws_c, cfg, fbl)
            if feas and _accept(rep, report, objective):
                ws, report = ws_c, rep
    if wiring.optimize_ris and cfg.M > 0:
        ris_c, _ = solve_ris(cs, ws, ris, cfg, settings, q=report.q, common=wiring.rsma,
                             objective=objective)
        if ris_c is not ris:
            rep, feas = true_report(cs, ris_c, ws, cfg, fbl)
            if feas and _accept(rep, report, objective):
                ris, report = ris_c, rep
    return ws, ris, report


def _feasibility_phase(cs, cfg, ws, ris, report, wiring, settings, fbl):
    """Raise the smallest rate until the minimum-rate constraints hold."""
    target = max(cfg.r_th, 0.0)
    it = 0
    for it in range(1, settings.feasibility_max_iter + 1):
        old = float(report.r_k.min())
        ws, ris, report = _ao_step(cs, cfg, ws, ris, report, wiring, settings, fbl,
                                   objective="rate")
        new = float(report.r_k.min())
        if new > target and (cfg.r_th <= 0 or np.all(report.r_k >= cfg.r_th)):
            break
        if new - old <= settings.ao_tol * max(abs(old), 1e-300):
            break
    return ws, ris, report, it
