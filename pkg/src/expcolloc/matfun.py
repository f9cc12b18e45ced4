"""Dense matrix exponential and the phi-function family.

The functions are

    phi_0(z) = exp(z),
    phi_k(z) = int_0^1 exp((1 - s) z) s**(k-1) / (k-1)! ds,   k >= 1,

which satisfy phi_{k-1}(z) = z phi_k(z) + 1/(k-1)! and phi_k(0) = 1/k!.

General matrices are handled by exponentiating a block upper-triangular
augmented matrix whose first block row holds phi_0(Z), ..., phi_kmax(Z).
Symmetric matrices go through an eigendecomposition with a scalar
evaluator that switches between a Taylor series and the recurrence.
Accuracy target is about 1e-13 relative in norm for ||Z|| <= 50.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "PhiTable",
    "as_square",
    "expm",
    "phi_apply",
    "phi_scalar",
    "phi_table",
]

_TAYLOR_TERMS = 80


def as_square(Z) -> np.ndarray:
    """Return ``Z`` as a finite, square float array (scalars become 1x1)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 0:
        Z = Z.reshape(1, 1)
    if Z.ndim != 2 or Z.shape[0] != Z.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("matrix has non-finite entries")
    return Z


def _is_symmetric(Z: np.ndarray) -> bool:
    return np.array_equal(Z, Z.T)


def expm(Z) -> np.ndarray:
    """Matrix exponential of a dense square matrix."""
    Z = as_square(Z)
    if _is_symmetric(Z):
        return phi_table(Z, 0).values[0]
    return scipy.linalg.expm(Z)


def phi_scalar(z, kmax: int) -> np.ndarray:
    """phi_0..phi_kmax at the real points ``z``; result has shape (kmax+1,) + z.shape.

    For |z| < k + 1 the Taylor series sum_j z**j / (j+k)! is used (its terms
    decrease monotonically there, so no cancellation); otherwise phi_k comes
    from phi_{k-1} through the recurrence, which is benign in that range.
    """
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    z = np.asarray(z, dtype=float)
    out = np.empty((kmax + 1,) + z.shape)
    out[0] = np.exp(z)
    az = np.abs(z)
    for k in range(1, kmax + 1):
        taylor = az < k + 1
        vals = np.empty(z.shape)
        if np.any(taylor):
            zt = z[taylor]
            # Horner on sum_j z^j / (j+k)!  =  (1/k!) (1 + z/(k+1) (1 + z/(k+2) (...)))
            acc = np.ones_like(zt)
            for j in range(_TAYLOR_TERMS, 0, -1):
                acc = 1.0 + acc * zt / (k + j)
            vals[taylor] = acc / math.factorial(k)
        rest = ~taylor
        if np.any(rest):
            vals[rest] = (out[k - 1][rest] - 1.0 / math.factorial(k - 1)) / z[rest]
        out[k] = vals
    return out


@dataclass(frozen=True)
class PhiTable:
    """phi_0(Z), ..., phi_kmax(Z) for one argument matrix."""

    Z: np.ndarray
    kmax: int
    values: tuple

    def __getitem__(self, k: int) -> np.ndarray:
        return self.values[k]

    def residual(self, k: int) -> float:
        """Norm of phi_{k-1}(Z) - I/(k-1)! - Z phi_k(Z); zero in exact arithmetic."""
        if not 1 <= k <= self.kmax:
            raise IndexError(k)
        eye = np.eye(self.Z.shape[0])
        R = self.values[k - 1] - eye / math.factorial(k - 1) - self.Z @ self.values[k]
        return float(np.linalg.norm(R, 2))


def _phi_symmetric(Z: np.ndarray, kmax: int) -> list:
    lam, V = np.linalg.eigh(Z)
    vals = phi_scalar(lam, kmax)
    return [(V * vals[k]) @ V.T for k in range(kmax + 1)]


def _phi_augmented(Z: np.ndarray, kmax: int) -> list:
    d = Z.shape[0]
    n = d * (kmax + 1)
    W = np.zeros((n, n))
    W[:d, :d] = Z
    eye = np.eye(d)
    for i in range(kmax):
        W[i * d:(i + 1) * d, (i + 1) * d:(i + 2) * d] = eye
    E = scipy.linalg.expm(W)
    return [E[:d, k * d:(k + 1) * d].copy() for k in range(kmax + 1)]


def phi_table(Z, kmax: int) -> PhiTable:
    """Evaluate phi_0(Z), ..., phi_kmax(Z)."""
    if kmax < 0:
        raise ValueError("kmax must be >= 0")
    Z = as_square(Z)
    if _is_symmetric(Z):
        values = _phi_symmetric(Z, kmax)
    else:
        values = _phi_augmented(Z, kmax)
    for v in values:
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("non-finite phi-function value")
    Z = Z.copy()
    Z.setflags(write=False)
    for v in values:
        v.setflags(write=False)
    return PhiTable(Z=Z, kmax=kmax, values=tuple(values))


def phi_apply(Z, k: int, v, table: PhiTable | None = None) -> np.ndarray:
    """phi_k(Z) @ v, reusing ``table`` when it covers index ``k``."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if table is None or table.kmax < k:
        table = phi_table(Z, k)
    v = np.asarray(v, dtype=float)
    if v.shape[0] != table.Z.shape[0]:
        raise ValueError(
            f"vector of length {v.shape[0]} does not match matrix of size {table.Z.shape[0]}"
        )
    return table.values[k] @ v
