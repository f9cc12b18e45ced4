"""Shifted Legendre basis on [0, 1], its reproducing kernel, and Gauss rules."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, sqrt

import numpy as np

__all__ = [
    "MAX_ORDER",
    "OrthonormalBasis",
    "QuadratureRule",
    "gauss_rule",
    "lagrange_weights",
    "legendre_basis",
    "projection_kernel",
]

# Monomial coefficients grow like C(2r, r); beyond this they are too ill-conditioned to be useful.
MAX_ORDER = 12


def _check_order(r: int) -> int:
    if int(r) != r or not 1 <= r <= MAX_ORDER:
        raise ValueError(f"order r must be an integer in [1, {MAX_ORDER}], got {r!r}")
    return int(r)


def _legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return (P_n(x), P_{n-1}(x)) for the classical Legendre polynomials on [-1, 1]."""
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for m in range(1, n):
        p, p_prev = ((2 * m + 1) * x * p - m * p_prev) / (m + 1), p
    return p, p_prev


@dataclass(frozen=True)
class OrthonormalBasis:
    """The first ``r`` shifted Legendre polynomials, orthonormal in L2(0, 1).

    ``coeffs[j, k]`` is the coefficient of tau**k in p_j; evaluation uses the
    three-term recurrence, which is better conditioned than the monomial form.
    """

    r: int
    coeffs: np.ndarray

    def __call__(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        x = 2.0 * tau - 1.0
        out = np.empty((self.r,) + tau.shape)
        out[0] = 1.0
        if self.r > 1:
            out[1] = x
        for m in range(1, self.r - 1):
            out[m + 1] = ((2 * m + 1) * x * out[m] - m * out[m - 1]) / (m + 1)
        scale = np.sqrt(2.0 * np.arange(self.r) + 1.0)
        return out * scale.reshape((-1,) + (1,) * tau.ndim)

    def gram(self, rule: QuadratureRule | None = None) -> np.ndarray:
        """Gram matrix int_0^1 p_i p_j, integrated exactly by a Gauss rule."""
        rule = rule or gauss_rule(self.r)
        P = self(rule.nodes)
        return (P * rule.weights) @ P.T


def legendre_basis(r: int) -> OrthonormalBasis:
    """p_j(tau) = (-1)^j sqrt(2j+1) sum_k C(j,k) C(j+k,k) (-tau)^k, j < r."""
    r = _check_order(r)
    coeffs = np.zeros((r, r))
    for j in range(r):
        for k in range(j + 1):
            coeffs[j, k] = (-1) ** (j + k) * sqrt(2 * j + 1) * comb(j, k) * comb(j + k, k)
    coeffs.setflags(write=False)
    return OrthonormalBasis(r=r, coeffs=coeffs)


def projection_kernel(basis: OrthonormalBasis, tau, sigma) -> np.ndarray:
    """P(tau, sigma) = sum_i p_i(tau) p_i(sigma); broadcasts over tau and sigma."""
    tau, sigma = np.broadcast_arrays(np.asarray(tau, float), np.asarray(sigma, float))
    return np.sum(basis(tau) * basis(sigma), axis=0)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def r(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> np.ndarray:
        """Apply the rule to ``f`` on [0, 1]; ``f`` maps an array of nodes to values along axis 0."""
        vals = np.asarray(f(self.nodes))
        return np.tensordot(self.weights, vals, axes=(0, 0))


def gauss_rule(r: int) -> QuadratureRule:
    """r-point Gauss-Legendre rule on [0, 1]; exact for polynomials of degree <= 2r-1."""
    r = _check_order(r)
    i = np.arange(1, r + 1)
    x = np.cos((2 * i - 1) * np.pi / (2 * r))  # Chebyshev points as starting guesses
    for _ in range(100):
        p, pm = _legendre(r, x)
        dp = r * (x * p - pm) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(p)) < 1e-15 or np.max(np.abs(dx)) < 1e-16:
            break
    p, pm = _legendre(r, x)
    dp = r * (x * p - pm) / (x * x - 1.0)
    w = 1.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    nodes = 0.5 * (1.0 + x[order])
    weights = w[order]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes=nodes, weights=weights)


def lagrange_weights(nodes, sigma) -> np.ndarray:
    """Cardinal polynomials l_1..l_r of ``nodes`` evaluated at ``sigma``.

    ``nodes`` may be a QuadratureRule or a 1-D array. The result has shape
    (r,) + shape(sigma).
    """
    c = np.asarray(nodes.nodes if isinstance(nodes, QuadratureRule) else nodes, dtype=float)
    diff = c[:, None] - c[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("interpolation nodes must be distinct")
    sigma = np.asarray(sigma, dtype=float)
    out = np.ones((len(c),) + sigma.shape)
    for m in range(len(c)):
        for j in range(len(c)):
            if j != m:
                out[m] *= (sigma - c[j]) / (c[m] - c[j])
    return out
