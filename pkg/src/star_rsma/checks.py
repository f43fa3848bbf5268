"""
Fast self-checks behind the ``check`` command.

Each check compares a library routine with an independent computation
(scalar closed forms, sampling, grid search) on a handful of instances.
The full suites live in the test tree; these run in a few seconds.
"""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import erfc, erfcinv

from .channel import ScenarioConfig, StarRisState, default_mode_mask, generate_channels
from .rates import BeamformerSet, FblParams, all_rates, common_rate, private_rate
from .solver import allocate_common_rate
from .surrogate import build_bf_constants, build_ris_constants, bf_surrogate, ris_surrogate, side_match
from .numerics import inv_q, q_function


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def _q_ref(x):
    return 0.5 * erfc(x / math.sqrt(2.0))


def check_inv_q() -> CheckResult:
    worst = max(abs(_q_ref(inv_q(e)) - e) / e for e in (1e-2, 1e-5, 5e-6, 1e-9))
    return CheckResult("inverse Q round trip", worst <= 1e-8, f"max rel err {worst:.2e}")


def _scalar_rates(g_own, g_int, g_c, n, eps):
    c = math.sqrt(2.0) * erfcinv(2.0 * eps) / math.sqrt(n)
    s = 1.0 + g_own + g_int
    r_p = math.log(s / (1.0 + g_int)) - c * math.sqrt(2.0 * g_own / s)
    r_c = math.log((s + g_c) / s) - c * math.sqrt(2.0 * g_c / (s + g_c))
    return r_p, r_c


def check_fbl_scalar(n_inst: int = 20, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_inst):
        a, b, c = rng.uniform(0.05, 3.0, 3)
        n = int(rng.integers(64, 2048))
        eps = 10 ** rng.uniform(-8, -2)
        ws = BeamformerSet(np.array([[math.sqrt(c)]], complex),
                           np.array([[[math.sqrt(a)]], [[math.sqrt(b)]]], complex))
        fbl = FblParams(n, n, eps, eps)
        ref_p, ref_c = _scalar_rates(a, b, c, n, eps)
        worst = max(worst, abs(private_rate(np.ones((1, 1)), ws, 1.0, fbl, 0) - ref_p),
                    abs(common_rate(np.ones((1, 1)), ws, 1.0, fbl, 0) - ref_c))
    return CheckResult("FBL scalar oracle", worst <= 1e-9, f"max abs err {worst:.2e}")


def _small_problem(rng):
    cfg = ScenarioConfig(M=8, sigma2=1.0)
    cs = generate_channels(cfg, rng).scaled(1e4)
    def crandn(*s):
        return (rng.standard_normal(s) + 1j * rng.standard_normal(s)) * 0.3
    ws = BeamformerSet(crandn(2, 2), crandn(4, 2, 2))
    mask = default_mode_mask(cfg.M)
    ris = StarRisState.from_active(0.7 * np.exp(2j * np.pi * rng.uniform(size=cfg.M)), mask)
    return cfg, cs, ws, ris


def check_bounds(n_inst: int = 10, seed: int = 1) -> CheckResult:
    """Tightness at the expansion point and minorization at random points."""
    rng = np.random.default_rng(seed)
    gap, viol = 0.0, -np.inf
    fbl = FblParams(256, 256, 5e-6, 5e-6)
    for _ in range(n_inst):
        cfg, cs, ws, ris = _small_problem(rng)
        H = np.einsum("kam,km,mb->kab", cs.Dk,
                      np.stack([ris.for_side(s) for s in cs.side]), cs.D) + cs.Gk
        true = all_rates(H, ws, cfg.sigma2, fbl)
        kb = build_bf_constants(cs, ris, ws, cfg, fbl)
        kr = build_ris_constants(cs, ws, ris, cfg, fbl)
        match = side_match(cs, ris.mask)
        for bound in (bf_surrogate(kb, ws), ris_surrogate(kr, cs, ris.active, match)):
            gap = max(gap, np.max(np.abs(np.concatenate(bound) - np.concatenate(true))))
        ws2 = BeamformerSet(ws.Wc * rng.uniform(0, 2), ws.Wk + 0.3 * rng.standard_normal(ws.Wk.shape))
        th2 = ris.active + 0.5 * rng.standard_normal(cfg.M)
        ris2 = StarRisState.from_active(th2, ris.mask)
        t_bf = np.concatenate(all_rates(H, ws2, cfg.sigma2, fbl))
        viol = max(viol, np.max(np.concatenate(bf_surrogate(kb, ws2)) - t_bf))
        H2 = np.einsum("kam,km,mb->kab", cs.Dk,
                       np.stack([ris2.for_side(s) for s in cs.side]), cs.D) + cs.Gk
        t_ris = np.concatenate(all_rates(H2, ws, cfg.sigma2, fbl))
        viol = max(viol, np.max(np.concatenate(ris_surrogate(kr, cs, ris2.active, match)) - t_ris))
    ok = gap <= 1e-6 and viol <= 1e-8
    return CheckResult("surrogate tightness and lower bound", ok,
                       f"max gap {gap:.1e}, max excess {viol:.1e}")


def check_allocation(n_inst: int = 20, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_inst):
        r = rng.uniform(0, 2, 2)
        p = rng.uniform(0.5, 2, 2)
        cap = rng.uniform(0, 3)
        alloc = allocate_common_rate(r, p, cap)
        q1 = np.linspace(0, cap, 4001)
        best = np.max(np.minimum((r[0] + q1) / p[0], (r[1] + cap - q1) / p[1]))
        worst = max(worst, abs(alloc.value - best))
    return CheckResult("common-rate allocation vs grid", worst <= 1e-3, f"max gap {worst:.1e}")


CHECKS: tuple[Callable[[], CheckResult], ...] = (check_inv_q, check_fbl_scalar, check_bounds,
                                                 check_allocation)


def run_checks() -> list[CheckResult]:
    return [c() for c in CHECKS]
