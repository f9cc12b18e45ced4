"""Trigonometric (TCr) and RKN-type (RKNCr) collocation for q'' + Omega q = -grad U(q).

TCr is ECr applied to the first-order form with A = [[0, I], [-Omega, 0]],
written so that only functions of K = tau^2 h^2 Omega appear:

    q(tau) = phi0(K) q0 + tau h phi1(K) p0 - tau^2 h^2 int A_{tau,sigma}(K) f(q(sigma)) dsigma
    p(tau) = -tau h Omega phi1(K) q0 + phi0(K) p0 - tau h int B_{tau,sigma}(K) f(q(sigma)) dsigma

with f = grad U, phi0(K) = cos(sqrt K) and phi1(K) = sin(sqrt K)/sqrt K.
RKNCr is the Omega = 0 case with polynomial coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .basis import OrthonormalBasis, QuadratureRule, lagrange_weights, projection_kernel
from .ecr import (CollocationScheme, NumericalError, RunResult, SemilinearSystem, StepInfo,
                  _run, central_gradient, solve_stages, step_sizes)
from .matfun import as_square

__all__ = [
    "SecondOrderSystem",
    "TCrCoefficients",
    "build_tcr_coefficients",
    "hyp0f1_matrix",
    "hyp2f1_terminating",
    "phi_even",
    "rkn_A",
    "rkn_B",
    "rkn_integrate",
    "rkn_step",
    "tcr_A",
    "tcr_A_quadrature",
    "tcr_B",
    "tcr_B_quadrature",
    "tcr_S",
    "tcr_integrate",
    "tcr_p_dense",
    "tcr_step",
]

SERIES_TOL = 1e-16
SERIES_MAX_TERMS = 60
# Above this norm of K the alternating series lose too many digits; use the spectral route.
SPECTRAL_THRESHOLD = 100.0


def _sym_tol(K: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(K))))


def _is_sym(K: np.ndarray) -> bool:
    return bool(np.all(np.abs(K - K.T) <= _sym_tol(K)))


def _eig_psd(K: np.ndarray):
    lam, V = np.linalg.eigh(0.5 * (K + K.T))
    if lam.size and lam.min() < -1e-10 * max(1.0, abs(lam).max()):
        raise ValueError("K must be positive semidefinite")
    return np.clip(lam, 0.0, None), V


def phi_even(K, i: int, symmetric: bool = True) -> np.ndarray:
    """phi_i(K) = sum_l (-1)^l K^l / (2l + i)! for i in {0, 1}.

    For symmetric PSD K this is cos(sqrt K) (i = 0) or sin(sqrt K)/sqrt K
    (i = 1), evaluated spectrally. With ``symmetric=False`` a non-symmetric K
    is accepted and evaluated through the exponential of [[0, I], [-K, 0]].
    """
    if i not in (0, 1):
        raise ValueError("only phi_0 and phi_1 are supported")
    K = as_square(K)
    if _is_sym(K):
        lam, V = _eig_psd(K)
        w = np.sqrt(lam)
        vals = np.cos(w) if i == 0 else np.sinc(w / np.pi)
        return (V * vals) @ V.T
    if symmetric:
        raise ValueError("K must be symmetric (pass symmetric=False for the multi-frequency form)")
    d = K.shape[0]
    E = scipy.linalg.expm(np.block([[np.zeros((d, d)), np.eye(d)], [-K, np.zeros((d, d))]]))
    return E[:d, :d] if i == 0 else E[:d, d:]


def hyp2f1_terminating(n: int, b: float, c: float, x) -> np.ndarray:
    """2F1(-n, b; c; x) for a non-negative integer n (a polynomial of degree n)."""
    x = np.asarray(x, dtype=float)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for m in range(n):
        term = term * (-n + m) * (b + m) / ((c + m) * (m + 1)) * x
        total = total + term
    return total


def hyp0f1_matrix(b: float, Z: np.ndarray) -> np.ndarray:
    """0F1(; b; Z) = sum_l Z^l / ((b)_l l!) for a square matrix Z."""
    Z = np.asarray(Z, dtype=float)
    eye = np.eye(Z.shape[0])
    total = eye.copy()
    term = eye.copy()
    for l in range(SERIES_MAX_TERMS):
        term = term @ Z / ((b + l) * (l + 1))
        total = total + term
        if np.max(np.abs(term)) <= SERIES_TOL * np.max(np.abs(total)):
            return total
    raise NumericalError(f"0F1 series with b={b} did not converge in {SERIES_MAX_TERMS} terms")


def _scalar_xi_integral(kernel, weight, lam: np.ndarray, points: int | None = None) -> np.ndarray:
    """int_0^1 weight((1-xi), omega) kernel(xi) dxi for each eigenvalue, by one Gauss rule.

    The integrand is entire; with more nodes than the oscillation count the
    rule is accurate to roundoff.
    """
    w = np.sqrt(lam)
    n = points or int(np.ceil(np.max(w, initial=0.0))) + 40
    x, wt = np.polynomial.legendre.leggauss(n)
    xi = 0.5 * (x + 1.0)
    wt = 0.5 * wt
    kv = kernel(xi)
    return np.array([np.sum(wt * weight(1.0 - xi, om) * kv) for om in w])


def _sin_weight(s, om):
    return s * np.sinc(s * om / np.pi)


def _cos_weight(s, om):
    return np.cos(s * om)


def tcr_A(K, basis: OrthonormalBasis, tau: float, sigma: float) -> np.ndarray:
    """A_{tau,sigma}(K) through the hypergeometric series in K.

    sum_j sqrt(2j+1) p_j(sigma) sum_l (-1)^(j+l)/(2l+2)! 2F1(-j, j+1; 2l+3; tau) K^l.
    The l-sum stops when the bound on the next term drops below SERIES_TOL
    times the sum (at most SERIES_MAX_TERMS terms); for ||K|| above
    SPECTRAL_THRESHOLD the defining xi-integral is evaluated per eigenvalue.
    """
    K = as_square(K)
    norm = float(np.linalg.norm(K, 2))
    if norm > SPECTRAL_THRESHOLD:
        if not _is_sym(K):
            return tcr_A_quadrature(K, basis, tau, sigma, symmetric=False)
        lam, V = _eig_psd(K)
        vals = _scalar_xi_integral(lambda xi: projection_kernel(basis, xi * tau, sigma), _sin_weight, lam)
        return (V * vals) @ V.T
    P = basis(sigma)
    amp = np.sqrt(2.0 * np.arange(basis.r) + 1.0) * P
    d = K.shape[0]
    total = np.zeros((d, d))
    Kl = np.eye(d)
    bound = float(np.sum(np.abs(amp)))
    for l in range(SERIES_MAX_TERMS):
        c = sum(amp[j] * (-1) ** (j + l) * hyp2f1_terminating(j, j + 1, 2 * l + 3, tau)
                for j in range(basis.r)) / math.factorial(2 * l + 2)
        total = total + c * Kl
        # |2F1(-j, j+1; 2l+3; tau)| <= 2F1(j, j+1; 2l+3; 1)-type bound; C(2j, j) is a safe cap
        nxt = bound * math.comb(2 * basis.r, basis.r) * norm ** (l + 1) / math.factorial(2 * l + 4)
        if nxt <= SERIES_TOL * max(np.max(np.abs(total)), 1e-300):
            return total
        Kl = Kl @ K
    raise NumericalError("A-series did not converge; reduce h or the frequency")


def tcr_S(K, j: int) -> np.ndarray:
    """S_j(K) from products of 0F1 series.

    Equals int_0^1 phi0((1-xi)^2 K) P_j(xi) dxi with P_j the shifted Legendre
    polynomial normalised by P_j(1) = 1 (not the orthonormal p_j).
    """
    K = as_square(K)
    Z = -K / 16.0
    m = j // 2
    if j % 2 == 0:
        coef = (-1) ** m * math.factorial(2 * m) / math.factorial(4 * m + 1)
        F = hyp0f1_matrix(0.5, Z) @ hyp0f1_matrix(2 * m + 1.5, Z)
        power = m
    else:
        coef = (-1) ** m * math.factorial(2 * m + 2) / math.factorial(4 * m + 4)
        F = hyp0f1_matrix(1.5, Z) @ hyp0f1_matrix(2 * m + 2.5, Z)
        power = m + 1
    return coef * np.linalg.matrix_power(K, power) @ F


def tcr_B(K, basis: OrthonormalBasis, sigma: float) -> np.ndarray:
    """B_{1,sigma}(K) = sum_j sqrt(2j+1) p_j(sigma) S_j(K)."""
    K = as_square(K)
    if float(np.linalg.norm(K, 2)) > SPECTRAL_THRESHOLD:
        if not _is_sym(K):
            return tcr_B_quadrature(K, basis, 1.0, sigma, symmetric=False)
        lam, V = _eig_psd(K)
        vals = _scalar_xi_integral(lambda xi: projection_kernel(basis, xi, sigma), _cos_weight, lam)
        return (V * vals) @ V.T
    P = basis(sigma)
    out = np.zeros_like(K)
    for j in range(basis.r):
        out = out + math.sqrt(2 * j + 1) * P[j] * tcr_S(K, j)
    return out


def _composite_xi(fn, panels: int, points: int):
    x, w = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(0.0, 1.0, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        for xk, wk in zip(0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w):
            total = total + wk * fn(xk)
    return total


def tcr_A_quadrature(K, basis: OrthonormalBasis, tau: float, sigma: float, panels: int = 16,
                     points: int = 16, symmetric: bool = True) -> np.ndarray:
    """int_0^1 (1-xi) phi1((1-xi)^2 K) P(xi tau, sigma) dxi by composite Gauss quadrature."""
    K = as_square(K)
    return _composite_xi(
        lambda xi: (1 - xi) * phi_even((1 - xi) ** 2 * K, 1, symmetric)
        * float(projection_kernel(basis, xi * tau, sigma)), panels, points)


def tcr_B_quadrature(K, basis: OrthonormalBasis, tau: float, sigma: float, panels: int = 16,
                     points: int = 16, symmetric: bool = True) -> np.ndarray:
    """int_0^1 phi0((1-xi)^2 K) P(xi tau, sigma) dxi by composite Gauss quadrature."""
    K = as_square(K)
    return _composite_xi(
        lambda xi: phi_even((1 - xi) ** 2 * K, 0, symmetric)
        * float(projection_kernel(basis, xi * tau, sigma)), panels, points)


@dataclass(frozen=True)
class SecondOrderSystem:
    """q'' - N q' + Omega q = -grad U(q), energy H = p.p/2 + q.Omega.q/2 + U(q).

    ``multi_frequency=True`` accepts a non-symmetric Omega (a premultiplied
    Mbar^-1 Kbar); the energy above is then not the conserved quantity.
    """

    Omega: np.ndarray
    grad_U: Callable[[np.ndarray], np.ndarray]
    U: Callable[[np.ndarray], float] | None = None
    N: np.ndarray | None = None
    multi_frequency: bool = False
    name: str = ""

    def __post_init__(self):
        Omega = as_square(self.Omega)
        object.__setattr__(self, "Omega", Omega)
        if not self.multi_frequency:
            if not _is_sym(Omega):
                raise ValueError("Omega must be symmetric")
            _eig_psd(Omega)
        if self.N is not None:
            N = as_square(self.N)
            if N.shape != Omega.shape or not _is_sym(N):
                raise ValueError("N must be symmetric with the shape of Omega")
            if np.linalg.eigvalsh(0.5 * (N + N.T)).max() > 1e-12 * max(1.0, np.abs(N).max()):
                raise ValueError("N must be negative semidefinite")
            object.__setattr__(self, "N", N)

    @property
    def d(self) -> int:
        return self.Omega.shape[0]

    @property
    def damped(self) -> bool:
        return self.N is not None and bool(np.any(self.N != 0))

    def H(self, q, p) -> float:
        if self.U is None:
            raise ValueError("energy needs U")
        return 0.5 * p @ p + 0.5 * q @ (self.Omega @ q) + self.U(q)

    def energy(self, Y) -> np.ndarray:
        Y = np.atleast_2d(Y)
        d = self.d
        return np.array([self.H(y[:d], y[d:]) for y in Y])

    def check_structure(self, rng=None, samples: int = 5, scale: float = 1.0) -> float:
        """Largest relative mismatch between grad U and finite differences of U."""
        rng = np.random.default_rng(rng)
        worst = 0.0
        for _ in range(samples):
            q = scale * rng.standard_normal(self.d)
            g = self.grad_U(q)
            fd = central_gradient(self.U, q)
            worst = max(worst, float(np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g)))))
        if worst > 1e-6:
            raise ValueError(f"grad U disagrees with finite differences of U ({worst:.3e})")
        return worst

    def to_first_order(self) -> SemilinearSystem:
        """y = (q, p), y' = [[0, I], [-I, N]] grad H(y)."""
        d = self.d
        Z = np.zeros((d, d))
        I = np.eye(d)
        N = self.N if self.N is not None else Z

        def grad_V(y):
            return np.concatenate([self.grad_U(y[:d]), np.zeros(d)])

        def V(y):
            return self.U(y[:d])

        if self.multi_frequency:
            def g(y):
                return np.concatenate([np.zeros(d), -self.grad_U(y[:d])])
            return SemilinearSystem(A=np.block([[Z, I], [-self.Omega, N]]), g=g, name=self.name)
        Q = np.block([[Z, I], [-I, N]])
        M = np.block([[self.Omega, Z], [Z, I]])
        cls = "dissipative" if self.damped else "conservative"
        if self.U is None:
            def g(y):
                return Q @ grad_V(y)
            return SemilinearSystem(A=Q @ M, g=g, name=self.name)
        return SemilinearSystem.from_structure(Q, M, grad_V, V, classification=cls, name=self.name)


@dataclass(frozen=True)
class TCrCoefficients:
    """Stage and endpoint tables of TCr for fixed (Omega, h, r)."""

    h: float
    phi0_nodes: np.ndarray  # (r, d, d): phi0(c_i^2 h^2 Omega)
    phi1_nodes: np.ndarray
    phi0_end: np.ndarray
    phi1_end: np.ndarray
    A_stage: np.ndarray  # (r, r, d, d): A_{c_i, c_j}(c_i^2 h^2 Omega)
    A_end: np.ndarray  # (r, d, d): A_{1, c_j}(h^2 Omega)
    B_end: np.ndarray  # (r, d, d): B_{1, c_j}(h^2 Omega)
    W: np.ndarray
    W_q: np.ndarray
    W_p: np.ndarray


def build_tcr_coefficients(system: SecondOrderSystem, scheme: CollocationScheme) -> TCrCoefficients:
    h, r, d = scheme.h, scheme.r, system.d
    c, b = scheme.rule.nodes, scheme.rule.weights
    sym = not system.multi_frequency
    Ks = [ci * ci * h * h * system.Omega for ci in c]
    K1 = h * h * system.Omega
    phi0_nodes = np.stack([phi_even(K, 0, sym) for K in Ks])
    phi1_nodes = np.stack([phi_even(K, 1, sym) for K in Ks])
    A_stage = np.stack([np.stack([tcr_A(Ks[i], scheme.basis, c[i], c[j]) for j in range(r)])
                        for i in range(r)])
    A_end = np.stack([tcr_A(K1, scheme.basis, 1.0, cj) for cj in c])
    B_end = np.stack([tcr_B(K1, scheme.basis, cj) for cj in c])
    W = -(c[:, None, None, None] ** 2 * h * h * b[None, :, None, None] * A_stage)
    W = W.transpose(0, 2, 1, 3).reshape(r * d, r * d)
    W_q = -(h * h * b[:, None, None] * A_end).transpose(1, 0, 2).reshape(d, r * d)
    W_p = -(h * b[:, None, None] * B_end).transpose(1, 0, 2).reshape(d, r * d)
    return TCrCoefficients(h=h, phi0_nodes=phi0_nodes, phi1_nodes=phi1_nodes,
                           phi0_end=phi_even(K1, 0, sym), phi1_end=phi_even(K1, 1, sym),
                           A_stage=A_stage, A_end=A_end, B_end=B_end, W=W, W_q=W_q, W_p=W_p)


def _stack_grad(grad_U):
    return lambda Q: np.stack([grad_U(q) for q in Q])


def _require_undamped(system: SecondOrderSystem):
    if system.damped:
        raise ValueError("damped systems go through ECr on system.to_first_order()")


def tcr_step(system: SecondOrderSystem, scheme: CollocationScheme, q0, p0,
             table: TCrCoefficients | None = None) -> tuple:
    """One TCr step with Gauss quadrature; returns (q1, p1, StepInfo)."""
    _require_undamped(system)
    table = table or build_tcr_coefficients(system, scheme)
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    h, c = scheme.h, scheme.rule.nodes
    base = table.phi0_nodes @ q0 + (c[:, None] * h) * (table.phi1_nodes @ p0)
    Y, F, it, res, conv = solve_stages(_stack_grad(system.grad_U), base, table.W,
                                       scheme.tol, scheme.max_iter)
    q1 = table.phi0_end @ q0 + h * table.phi1_end @ p0 + table.W_q @ F.ravel()
    p1 = -h * system.Omega @ (table.phi1_end @ q0) + table.phi0_end @ p0 + table.W_p @ F.ravel()
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(p1))):
        raise NumericalError("non-finite state after TCr step")
    return q1, p1, StepInfo(iterations=it, residual=res, converged=conv, stages=Y)


def tcr_p_dense(system: SecondOrderSystem, scheme: CollocationScheme, q0, p0, stages,
                tau: float) -> np.ndarray:
    """p(tau) inside a step, with B_{tau,sigma} from its xi-integral."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    h, c, b = scheme.h, scheme.rule.nodes, scheme.rule.weights
    K = tau * tau * h * h * system.Omega
    sym = not system.multi_frequency
    F = np.stack([system.grad_U(q) for q in stages])
    out = -tau * h * system.Omega @ (phi_even(K, 1, sym) @ q0) + phi_even(K, 0, sym) @ p0
    for j in range(scheme.r):
        out = out - tau * h * b[j] * tcr_B_quadrature(K, scheme.basis, tau, c[j], symmetric=sym) @ F[j]
    return out


def tcr_integrate(system: SecondOrderSystem, scheme: CollocationScheme, q0, p0, T: float) -> RunResult:
    _require_undamped(system)
    d = system.d
    tables = {}

    def one(y, hk):
        sch = scheme if hk == scheme.h else scheme.with_h(hk)
        if hk not in tables:
            tables[hk] = build_tcr_coefficients(system, sch)
        q1, p1, info = tcr_step(system, sch, y[:d], y[d:], tables[hk])
        return np.concatenate([q1, p1]), info

    return _run(one, _EnergyAdapter(system), np.concatenate([q0, p0]), step_sizes(scheme.h, T),
                "tcr", scheme.h)


class _EnergyAdapter:
    def __init__(self, system: SecondOrderSystem):
        self.H = system.H if system.U is not None else None
        self._system = system

    def energy(self, Y):
        return self._system.energy(Y)


def rkn_A(basis: OrthonormalBasis, tau: float, sigma) -> np.ndarray:
    """Abar_{tau,sigma} = sum_i int_0^1 (1-xi) p_i(xi tau) dxi p_i(sigma)."""
    k = np.arange(basis.r)
    inner = basis.coeffs @ (tau ** k / ((k + 1) * (k + 2)))
    return np.tensordot(inner, basis(sigma), axes=(0, 0))


def rkn_B(basis: OrthonormalBasis, tau: float, sigma) -> np.ndarray:
    """Bbar_{tau,sigma} = sum_i int_0^1 p_i(xi tau) dxi p_i(sigma)."""
    k = np.arange(basis.r)
    inner = basis.coeffs @ (tau ** k / (k + 1))
    return np.tensordot(inner, basis(sigma), axes=(0, 0))


def rkn_step(system: SecondOrderSystem, scheme: CollocationScheme, q0, p0,
             quadrature: QuadratureRule | None = None) -> tuple:
    """One RKNCr step for q'' = -grad U(q) (Omega must vanish).

    Stages live at the Gauss nodes d_i of ``scheme``; the sigma-integrals use
    ``quadrature`` (default: the same nodes) applied to the Lagrange
    interpolant sum_m q_{d_m} l_m(sigma).
    """
    _require_undamped(system)
    if np.any(system.Omega != 0):
        raise ValueError("RKNCr needs Omega = 0; use tcr_step")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    h, dn, d = scheme.h, scheme.rule.nodes, system.d
    quad = quadrature or scheme.rule
    s, w = quad.nodes, quad.weights
    L = lagrange_weights(dn, s).T  # (n_quad, r)
    Wc = np.stack([-(di * h) ** 2 * w * rkn_A(scheme.basis, di, s) for di in dn])  # (r, n_quad)
    W = np.kron(Wc, np.eye(d))
    base = q0[None, :] + (dn[:, None] * h) * p0[None, :]

    def G_of(Y):
        return np.stack([system.grad_U(q) for q in L @ Y])

    Y, F, it, res, conv = solve_stages(G_of, base, W, scheme.tol, scheme.max_iter)
    q1 = q0 + h * p0 - h * h * (w * rkn_A(scheme.basis, 1.0, s)) @ F
    p1 = p0 - h * (w * rkn_B(scheme.basis, 1.0, s)) @ F
    if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(p1))):
        raise NumericalError("non-finite state after RKNCr step")
    return q1, p1, StepInfo(iterations=it, residual=res, converged=conv, stages=Y)


def rkn_integrate(system: SecondOrderSystem, scheme: CollocationScheme, q0, p0, T: float,
                  quadrature: QuadratureRule | None = None) -> RunResult:
    d = system.d

    def one(y, hk):
        sch = scheme if hk == scheme.h else scheme.with_h(hk)
        q1, p1, info = rkn_step(system, sch, y[:d], y[d:], quadrature)
        return np.concatenate([q1, p1]), info

    return _run(one, _EnergyAdapter(system), np.concatenate([q0, p0]), step_sizes(scheme.h, T),
                "rkn", scheme.h)
