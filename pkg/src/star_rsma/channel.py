"""
Scenario configuration, channel generation and composite-channel assembly
for a STAR-RIS with mode-switching elements.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .numerics import InvalidInputError, project_unit_disk

REFLECT = "reflect"
TRANSMIT = "transmit"


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and protocol parameters of one experiment.

    Powers are in watts, rates in nats per channel use. Path-loss and
    geometry parameters are flat fields so that a JSON config maps onto
    this class key for key.
    """
    K: int = 4
    N_BS: int = 2
    N_u: int = 2
    M: int = 16
    d_c: int | None = None  # streams of the common message; None -> N_u
    d_p: int | None = None  # streams per private message; None -> N_u
    sigma2: float = 1e-12
    P: float = 1.0
    P_C: float = 0.5
    beta: float = 2.0
    r_th: float = 0.0
    n_c: int = 256
    n_p: int = 256
    eps_total: float = 1e-5
    eps_common_fraction: float = 0.5  # eps_c = fraction * eps_total
    rice_K: float = 3.0
    pl0_dB: float = 30.0
    exponent_direct: float = 3.75
    exponent_ris: float = 2.2
    bs_position: tuple = (0.0, 0.0, 0.0)
    ris_position: tuple = (50.0, 0.0, 0.0)
    reflect_center: tuple = (52.0, 3.0, 0.0)
    transmit_center: tuple = (52.0, -3.0, 0.0)
    user_radius: float = 2.0
    user_positions: tuple | None = None  # explicit (K, 3) positions; None -> random drop
    user_sides: tuple | None = None  # explicit K labels; None -> first half reflect
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise InvalidInputError("K must be at least 1")
        if min(self.N_BS, self.N_u) < 1:
            raise InvalidInputError("antenna counts must be positive")
        if self.M < 0 or self.M % 2:
            raise InvalidInputError("M must be a non-negative even number")
        for name in ("sigma2", "P", "P_C", "beta"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0.0 < self.eps_total < 1.0:
            raise InvalidInputError("eps_total must lie in (0, 1)")
        if not 0.0 < self.eps_common_fraction < 1.0:
            raise InvalidInputError("eps_common_fraction must lie in (0, 1)")
        if self.n_c < 1 or self.n_p < 1:
            raise InvalidInputError("blocklengths must be >= 1")
        if self.rice_K < 0 or self.user_radius < 0:
            raise InvalidInputError("rice_K and user_radius must be >= 0")
        sides = self.sides
        if len(sides) != self.K or any(s not in (REFLECT, TRANSMIT) for s in sides):
            raise InvalidInputError(f"need exactly {self.K} side labels in "
                                    f"{{{REFLECT}, {TRANSMIT}}}")
        if self.user_positions is not None:
            pos = np.asarray(self.user_positions, dtype=float)
            if pos.shape != (self.K, 3):
                raise InvalidInputError("user_positions must have shape (K, 3)")

    @property
    def streams_common(self) -> int:
        return self.N_u if self.d_c is None else self.d_c

    @property
    def streams_private(self) -> int:
        return self.N_u if self.d_p is None else self.d_p

    @property
    def sides(self) -> tuple:
        if self.user_sides is not None:
            return tuple(self.user_sides)
        n_reflect = (self.K + 1) // 2
        return (REFLECT,) * n_reflect + (TRANSMIT,) * (self.K - n_reflect)

    @property
    def eps_c(self) -> float:
        return self.eps_total * self.eps_common_fraction

    @property
    def eps_p(self) -> float:
        return self.eps_total - self.eps_c

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every link.

    D is (M, N_BS), Dk is (K, N_u, M), Gk is (K, N_u, N_BS).
    """
    D: np.ndarray
    Dk: np.ndarray
    Gk: np.ndarray
    side: tuple
    user_positions: np.ndarray = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.Gk.shape[0]

    @property
    def M(self) -> int:
        return self.D.shape[0]

    def scaled(self, factor: float) -> "ChannelSet":
        """Scale the user-side links so every composite channel scales by ``factor``."""
        return dataclasses.replace(self, Dk=self.Dk * factor, Gk=self.Gk * factor)

    def without_ris(self) -> "ChannelSet":
        return dataclasses.replace(self, Dk=np.zeros_like(self.Dk))


@dataclass(frozen=True)
class StarRisState:
    """Transmission/reflection coefficients with the per-element mode mask.

    ``mask[m]`` is ``'t'`` (transmit-only) or ``'r'`` (reflect-only).
    """
    theta_t: np.ndarray
    theta_r: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_active(cls, active: np.ndarray, mask: np.ndarray) -> "StarRisState":
        """Build from one coefficient per element; the mask routes it to t or r."""
        mask = np.asarray(mask)
        active = np.asarray(active, dtype=complex)
        is_t = mask == "t"
        return cls(theta_t=project_unit_disk(active, is_t),
                   theta_r=project_unit_disk(active, ~is_t), mask=mask)

    @classmethod
    def zeros(cls, mask: np.ndarray) -> "StarRisState":
        return cls.from_active(np.zeros(len(mask), dtype=complex), mask)

    @property
    def active(self) -> np.ndarray:
        return np.where(self.mask == "t", self.theta_t, self.theta_r)

    def for_side(self, side: str) -> np.ndarray:
        return self.theta_r if side == REFLECT else self.theta_t

    def is_valid(self, tol: float = 1e-12) -> bool:
        is_t = self.mask == "t"
        return bool(np.all(self.theta_r[is_t] == 0) and np.all(self.theta_t[~is_t] == 0)
                    and np.all(np.abs(self.theta_t) <= 1 + tol)
                    and np.all(np.abs(self.theta_r) <= 1 + tol))


def default_mode_mask(M: int) -> np.ndarray:
    """First half of the elements transmit-only, second half reflect-only."""
    if M < 0 or M % 2:
        raise InvalidInputError(f"M must be even, got {M}")
    return np.array(["t"] * (M // 2) + ["r"] * (M // 2))


def reflect_only_mask(M: int) -> np.ndarray:
    return np.array(["r"] * M)


def path_loss(distance: float, pl0_dB: float, exponent: float) -> float:
    """Log-distance path loss as a linear power gain."""
    if not distance >= 1.0:
        raise InvalidInputError(f"distance must be >= 1 m, got {distance}")
    return 10.0 ** (-(pl0_dB + 10.0 * exponent * np.log10(distance)) / 10.0)


def ula_steering(n: int, angle: float) -> np.ndarray:
    """Half-wavelength uniform linear array response."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def _azimuth(src, dst) -> float:
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return float(np.arctan2(d[1], d[0]))


def _distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def _crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def drop_users(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """User positions: explicit ones from the config, else uniform in a disk per side.

    Draws closer than 1 m to the BS or the RIS are rejected and redrawn.
    """
    if cfg.user_positions is not None:
        return np.asarray(cfg.user_positions, dtype=float)
    out = np.empty((cfg.K, 3))
    for k, side in enumerate(cfg.sides):
        center = np.asarray(cfg.reflect_center if side == REFLECT else cfg.transmit_center,
                            dtype=float)
        for _ in range(1000):
            r = cfg.user_radius * np.sqrt(rng.uniform())
            phi = rng.uniform(0.0, 2.0 * np.pi)
            p = center + np.array([r * np.cos(phi), r * np.sin(phi), 0.0])
            if _distance(p, cfg.bs_position) >= 1.0 and _distance(p, cfg.ris_position) >= 1.0:
                break
        else:
            raise InvalidInputError("user disk lies within 1 m of the BS or RIS")
        out[k] = p
    return out


def _rician(rng, los, kappa):
    if np.isinf(kappa):
        return los
    return np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * _crandn(rng, los.shape)


def generate_channels(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelSet:
    """Draw one channel realization.

    RIS links are Rician with factor ``rice_K`` around a ULA line-of-sight
    component; direct links are Rayleigh. Every link is scaled by the
    amplitude of its log-distance path loss.
    """
    bs, ris = cfg.bs_position, cfg.ris_position
    if _distance(bs, ris) < 1.0:
        raise InvalidInputError("BS and RIS closer than 1 m")
    users = drop_users(cfg, rng)
    for p in users:
        if _distance(p, bs) < 1.0 or _distance(p, ris) < 1.0:
            raise InvalidInputError("a user is closer than 1 m to the BS or RIS")

    M, N_BS, N_u, K = cfg.M, cfg.N_BS, cfg.N_u, cfg.K
    aod = _azimuth(bs, ris)
    los_D = np.outer(ula_steering(M, -aod), np.conj(ula_steering(N_BS, aod)))
    D = _rician(rng, los_D, cfg.rice_K)
    D = D * np.sqrt(path_loss(_distance(bs, ris), cfg.pl0_dB, cfg.exponent_ris))

    Dk = np.empty((K, N_u, M), dtype=complex)
    Gk = np.empty((K, N_u, N_BS), dtype=complex)
    for k in range(K):
        a = _azimuth(ris, users[k])
        los = np.outer(ula_steering(N_u, -a), np.conj(ula_steering(M, a)))
        Dk[k] = _rician(rng, los, cfg.rice_K) * np.sqrt(
            path_loss(_distance(ris, users[k]), cfg.pl0_dB, cfg.exponent_ris))
        Gk[k] = _crandn(rng, (N_u, N_BS)) * np.sqrt(
            path_loss(_distance(bs, users[k]), cfg.pl0_dB, cfg.exponent_direct))
    return ChannelSet(D=D, Dk=Dk, Gk=Gk, side=tuple(cfg.sides), user_positions=users)


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (seed, trial, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(stream)]))


def side_theta(cs: ChannelSet, ris: StarRisState) -> np.ndarray:
    """Per-user coefficient vector actually seen by each user, shape (K, M)."""
    return np.stack([ris.for_side(s) for s in cs.side])


def compose_channel(cs: ChannelSet, ris: StarRisState, k: int) -> np.ndarray:
    """Composite channel ``D_k diag(theta) D + G_k`` of user ``k``."""
    if not 0 <= k < cs.K:
        raise IndexError(f"user index {k} out of range")
    theta = ris.for_side(cs.side[k])
    return (cs.Dk[k] * theta) @ cs.D + cs.Gk[k]


def compose_all(cs: ChannelSet, ris: StarRisState) -> np.ndarray:
    """Composite channels of all users, shape (K, N_u, N_BS)."""
    theta = side_theta(cs, ris)
    return np.einsum("kam,km,mb->kab", cs.Dk, theta, cs.D) + cs.Gk
