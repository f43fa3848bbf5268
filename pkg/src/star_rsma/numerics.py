"""
Hermitian-positive-definite linear algebra, the inverse Gaussian Q-function,
feasibility projections and a finite-difference gradient checker.

All routines accept stacked arrays along leading axes where that makes sense,
so per-user quantities can be evaluated in one call.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.special import erfc, ndtri

if TYPE_CHECKING:  # pragma: no cover
    from .rates import BeamformerSet


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericDomainError(ArithmeticError):
    """Raised when a computation leaves its numerical domain."""


class ConstraintViolationError(ValueError):
    """Raised when a candidate point violates a problem constraint."""


def _check_finite(m, name="matrix"):
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def _cholesky(m):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericDomainError("matrix is not positive definite") from exc


def logdet_hpd(m: np.ndarray) -> np.ndarray | float:
    """Natural-log determinant of a Hermitian positive-definite matrix.

    Works on a single ``(n, n)`` matrix or a stack ``(..., n, n)``.
    """
    m = _check_finite(m)
    chol = _cholesky(m)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    out = 2.0 * np.sum(np.log(diag), axis=-1)
    return float(out) if out.ndim == 0 else out


def solve_hpd(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m @ x = rhs`` for HPD ``m`` through its Cholesky factor."""
    m = _check_finite(m)
    rhs = _check_finite(rhs, "rhs")
    if m.shape[-1] != m.shape[-2] or rhs.shape[-2] != m.shape[-1]:
        raise InvalidInputError(f"cannot solve {m.shape} against {rhs.shape}")
    chol = _cholesky(m)
    y = np.linalg.solve(chol, rhs)
    return np.linalg.solve(np.conj(np.swapaxes(chol, -1, -2)), y)


def inv_hpd(m: np.ndarray) -> np.ndarray:
    """Inverse of an HPD matrix (or stack), Hermitian-symmetrized."""
    eye = np.broadcast_to(np.eye(m.shape[-1], dtype=complex), m.shape)
    x = solve_hpd(m, eye)
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(N(0,1) > x)``."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def inv_q(eps: float) -> float:
    """Inverse of the Gaussian tail function.

    Starts from scipy's ``ndtri`` and applies one Newton step on ``Q(x) - eps``.
    """
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    x = -float(ndtri(eps))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    if pdf > 0.0:
        x += float(q_function(x) - eps) / pdf
    return x


def project_power(ws: "BeamformerSet", P: float) -> "BeamformerSet":
    """Radially project a beamformer set onto ``total power <= P``."""
    if P <= 0:
        raise InvalidInputError("power budget must be positive")
    total = ws.total_power()
    if total <= P:
        return ws
    return ws.scaled(np.sqrt(P / total))


def project_unit_disk(theta: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero the masked-off entries and clamp the rest to modulus <= 1.

    ``mask`` is a boolean array, True where the coefficient is active.
    """
    theta = np.asarray(theta, dtype=complex)
    mask = np.asarray(mask, dtype=bool)
    if theta.shape != mask.shape:
        raise InvalidInputError("mask length must equal vector length")
    out = np.where(mask, theta, 0.0 + 0.0j)
    mag = np.abs(out)
    big = mag > 1.0
    out[big] = out[big] / mag[big]
    return out


def fd_gradient_check(f: Callable[[np.ndarray], float], x: np.ndarray,
                      g: np.ndarray) -> float:
    """Compare a claimed gradient with central differences.

    Step per coordinate is ``1e-6 * (1 + |x_i|)``. The discrepancy of every
    coordinate is divided by the largest gradient magnitude (finite
    difference or claimed), so coordinates with a tiny true derivative do
    not blow the ratio up. Returns the maximum over coordinates.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    fd = np.empty_like(x)
    for i in range(x.size):
        h = 1e-6 * (1.0 + abs(x.flat[i]))
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericDomainError(f"non-finite evaluation at coordinate {i}")
        fd.flat[i] = (fp - fm) / (2.0 * h)
    scale = max(np.max(np.abs(fd), initial=0.0), np.max(np.abs(g), initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(fd - g)) / scale)


def complex_to_real(z: np.ndarray) -> np.ndarray:
    """Stack a complex array into ``[re..., im...]`` real coordinates."""
    z = np.asarray(z, dtype=complex).ravel()
    return np.concatenate([z.real, z.imag])


def real_to_complex(x: np.ndarray, shape=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size // 2
    z = x[:n] + 1j * x[n:]
    return z if shape is None else z.reshape(shape)


def hermitian_part(m):
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
