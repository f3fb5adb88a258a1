"""Dense matrix exponential and phi-function.

``mat_exp`` is a degree-13 Pade approximant with scaling and squaring.
``mat_phi`` evaluates phi(A) = (exp(A) - I) / A through the exponential of
the augmented block matrix ``[[A, I], [0, 0]]``, so singular ``A`` needs no
special treatment.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "DimensionError",
    "DomainError",
    "as_matrix",
    "is_symmetric",
    "is_skew",
    "mat_exp",
    "mat_phi",
    "exp_and_phi",
    "ExpPhiPair",
    "exp_phi_pair",
    "BlockPartition",
    "partition",
    "lemma_b_matrix",
]


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """Operand values are outside the domain of the operation."""


# Pade [13/13] numerator coefficients.
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.4


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a finite, square float64 array.

    Raises
    ------
    DimensionError
        If ``a`` is not a square 2-d array.
    DomainError
        If any entry is NaN or infinite.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return a


def _inf_norm(a: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(a), axis=1)))


def is_symmetric(a, rtol: float = 1e-12) -> bool:
    a = as_matrix(a)
    return _inf_norm(a - a.T) <= rtol * _inf_norm(a)


def is_skew(a, rtol: float = 1e-12) -> bool:
    a = as_matrix(a)
    return _inf_norm(a + a.T) <= rtol * _inf_norm(a)


def _pade13(a: np.ndarray) -> np.ndarray:
    b = _PADE13
    ident = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    return scipy.linalg.solve(v - u, v + u)


def _squarings(a: np.ndarray) -> int:
    norm = _inf_norm(a)
    if norm <= _THETA13:
        return 0
    return max(0, math.ceil(math.log2(norm / _THETA13)))


def mat_exp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring of the [13/13] Pade approximant.

    The scaling exponent is ``ceil(log2(||a||_inf / 5.4))``, clamped at zero.
    """
    a = as_matrix(a)
    s = _squarings(a)
    r = _pade13(a / 2.0**s)
    for _ in range(s):
        r = r @ r
    return r


def exp_and_phi(a) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(exp(a), phi(a))`` from a single augmented exponential."""
    a = as_matrix(a)
    d = a.shape[0]
    aug = np.zeros((2 * d, 2 * d))
    aug[:d, :d] = a
    aug[:d, d:] = np.eye(d)
    e = mat_exp(aug)
    return e[:d, :d].copy(), e[:d, d:].copy()


def mat_phi(a) -> np.ndarray:
    """phi(a) = sum_k a^k / (k+1)!, defined for singular ``a`` as well."""
    return exp_and_phi(a)[1]


def _token(a: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(a).tobytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class ExpPhiPair:
    """``exp(h*A)`` and ``phi(h*A)`` for one matrix ``A`` and stepsize ``h``."""

    exp_v: np.ndarray
    phi_v: np.ndarray
    source_matrix_hash: str
    stepsize: float

    def matches(self, a, h: float) -> bool:
        return self.stepsize == h and self.source_matrix_hash == _token(np.asarray(a, dtype=float))


def exp_phi_pair(a, h: float) -> ExpPhiPair:
    a = as_matrix(a)
    if h == 0.0:
        ident = np.eye(a.shape[0])
        e, p = ident, ident.copy()
    else:
        e, p = exp_and_phi(h * a)
    e.setflags(write=False)
    p.setflags(write=False)
    return ExpPhiPair(e, p, _token(a), float(h))


@dataclass(frozen=True, eq=False)
class BlockPartition:
    """The four equal blocks of a ``2d x 2d`` matrix."""

    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray

    def assemble(self) -> np.ndarray:
        return np.block([[self.b11, self.b12], [self.b21, self.b22]])


def partition(a) -> BlockPartition:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n or n % 2:
        raise DimensionError(f"expected an even-sized square matrix, got shape {a.shape}")
    d = n // 2
    return BlockPartition(a[:d, :d].copy(), a[:d, d:].copy(), a[d:, :d].copy(), a[d:, d:].copy())


def lemma_b_matrix(q, m, h: float) -> np.ndarray:
    """``exp(hQM)^T M exp(hQM) - M``.

    Zero for skew-symmetric ``q``; negative semi-definite when ``q`` is.
    """
    q = as_matrix(q)
    m = as_matrix(m)
    if q.shape != m.shape:
        raise DimensionError(f"shape mismatch {q.shape} vs {m.shape}")
    if not is_symmetric(m):
        raise DomainError("m must be symmetric")
    if h == 0.0:
        return np.zeros_like(m)
    e = mat_exp(h * (q @ m))
    return e.T @ m @ e - m
