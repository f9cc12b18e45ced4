"""Benchmark problems with their exact or reference solutions.

Every factory returns a ProblemInstance; ``CATALOG`` maps the public names
to the factories.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .ecr import SemilinearSystem
from .elliptic import ellipj_agm
from .oscillatory import SecondOrderSystem

__all__ = [
    "CATALOG",
    "ProblemInstance",
    "duffing",
    "get_problem",
    "linear_oscillator",
    "nls_semidiscrete",
    "pseudospectral_d2",
    "quartic_potential",
    "reference_solution",
    "stiff_gradient",
    "wind",
]


@dataclass
class ProblemInstance:
    name: str
    system: SemilinearSystem
    params: dict
    y0: np.ndarray
    reference: Callable[[float], np.ndarray] | None = None
    reference_kind: str = "self-convergence"
    second_order: SecondOrderSystem | None = None
    extra: dict = field(default_factory=dict)


def reference_solution(system: SemilinearSystem, y0, T: float, rtol: float = 1e-13,
                       atol: float = 1e-13) -> Callable[[float], np.ndarray]:
    """High-accuracy reference by an adaptive eighth-order Runge-Kutta method."""
    sol = solve_ivp(lambda t, y: system.rhs(y), (0.0, T), np.asarray(y0, float), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True)
    if not sol.success:
        raise RuntimeError(f"reference integration failed: {sol.message}")
    return lambda t: sol.sol(t)


def duffing(omega: float = 5.0, k: float = 0.07) -> ProblemInstance:
    """q'' = -(omega^2 + k^2) q + 2 k^2 q^3, q(0) = 0, q'(0) = omega; q(t) = sn(omega t; k/omega)."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    if not 0 <= k < omega:
        raise ValueError("need 0 <= k < omega (elliptic modulus below 1)")
    w2 = omega * omega + k * k
    Q = np.array([[0.0, 1.0], [-1.0, 0.0]])
    M = np.diag([w2, 1.0])

    def V(y):
        return -0.5 * k * k * y[0] ** 4

    def grad_V(y):
        return np.array([-2.0 * k * k * y[0] ** 3, 0.0])

    system = SemilinearSystem.from_structure(Q, M, grad_V, V, "conservative", name="duffing")
    kappa = k / omega

    def exact(t):
        sn, cn, dn = ellipj_agm(omega * np.asarray(t, float), kappa)
        return np.array([sn, omega * cn * dn])

    second = SecondOrderSystem(Omega=[[w2]], grad_U=lambda q: -2.0 * k * k * q ** 3,
                               U=lambda q: -0.5 * k * k * q[0] ** 4, name="duffing")
    return ProblemInstance(name="duffing", system=system, params={"omega": omega, "k": k},
                           y0=np.array([0.0, omega]), reference=exact, reference_kind="elliptic",
                           second_order=second)


def linear_oscillator(omega: float = 1.0) -> ProblemInstance:
    """q'' = -omega^2 q written as y' = A y with g = 0; the flow is a rotation."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    Q = np.array([[0.0, 1.0], [-1.0, 0.0]])
    M = np.diag([omega * omega, 1.0])
    system = SemilinearSystem.from_structure(Q, M, lambda y: np.zeros(2), lambda y: 0.0,
                                             "conservative", name="linear")

    def exact(t):
        return np.array([np.sin(omega * t), omega * np.cos(omega * t)])

    second = SecondOrderSystem(Omega=[[omega * omega]], grad_U=lambda q: np.zeros_like(q),
                               U=lambda q: 0.0, name="linear")
    return ProblemInstance(name="linear", system=system, params={"omega": omega},
                           y0=np.array([0.0, omega]), reference=exact, reference_kind="closed-form",
                           second_order=second)


def wind(theta: float = np.pi / 2, rho: float = 20.0) -> ProblemInstance:
    """Averaged wind-induced oscillation; conservative for theta = pi/2, dissipative below.

    ``rho`` is the scale of M = rho I (called r in the usual statement of the problem).
    """
    if not 0.0 <= theta <= np.pi / 2:
        raise ValueError("theta must lie in [0, pi/2]")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    ct, st = np.cos(theta), np.sin(theta)
    if theta == np.pi / 2:
        ct = 0.0
    Q = np.array([[-ct, -st], [st, -ct]])
    M = rho * np.eye(2)

    def V(x):
        x1, x2 = x
        return -0.5 * st * (x1 * x2 ** 2 - x1 ** 3 / 3) + 0.5 * ct * (-x1 ** 2 * x2 + x2 ** 3 / 3)

    def grad_V(x):
        x1, x2 = x
        return np.array([
            -0.5 * st * (x2 ** 2 - x1 ** 2) - ct * x1 * x2,
            -st * x1 * x2 + 0.5 * ct * (x2 ** 2 - x1 ** 2),
        ])

    cls = "conservative" if ct == 0.0 else "dissipative"
    system = SemilinearSystem.from_structure(Q, M, grad_V, V, cls, name="wind")
    y0 = np.array([0.0, 1.0])
    inst = ProblemInstance(name="wind", system=system, params={"theta": theta, "rho": rho}, y0=y0,
                           reference_kind="reference-integration")
    inst.reference = _lazy_reference(system, y0)
    return inst


def _lazy_reference(system, y0):
    cache = {}

    def ref(t):
        t = float(t)
        if "T" not in cache or cache["T"] < t:
            cache["T"] = max(t, 1.0)
            cache["sol"] = reference_solution(system, y0, cache["T"])
        return cache["sol"](t)

    return ref


def pseudospectral_d2(N: int, L: float) -> np.ndarray:
    """Fourier pseudospectral second-derivative matrix on x_j = j L / N (N even)."""
    mu = 2 * np.pi / L
    j = np.arange(N)
    diff = j[:, None] - j[None, :]
    D = np.empty((N, N))
    off = diff != 0
    D[off] = 0.5 * mu ** 2 * (-1.0) ** (diff[off] + 1) / np.sin(np.pi * diff[off] / N) ** 2
    np.fill_diagonal(D, -mu ** 2 * (2 * (N / 2) ** 2 + 1) / 6)
    return D


def nls_semidiscrete(N: int = 32) -> ProblemInstance:
    """i psi_t + psi_xx + 2|psi|^2 psi = 0 on [0, L), psi = p + i q, realified.

    y = (p, q); y' = [[0, -D2], [D2, 0]] y + (-2(p^2+q^2) q, 2(p^2+q^2) p).
    """
    if int(N) != N or N % 2 or N < 8:
        raise ValueError("N must be an even integer >= 8")
    N = int(N)
    L = 4 * np.sqrt(2) * np.pi
    mu = 2 * np.pi / L
    D2 = pseudospectral_d2(N, L)
    Z = np.zeros((N, N))
    I = np.eye(N)
    Q = np.block([[Z, -I], [I, Z]])
    M = np.block([[D2, Z], [Z, D2]])

    def V(y):
        p, q = y[:N], y[N:]
        return 0.5 * np.sum((p * p + q * q) ** 2)

    def grad_V(y):
        p, q = y[:N], y[N:]
        s = 2.0 * (p * p + q * q)
        return np.concatenate([s * p, s * q])

    system = SemilinearSystem.from_structure(Q, M, grad_V, V, "conservative", name="nls")
    x = np.arange(N) * L / N
    y0 = np.concatenate([0.5 + 0.025 * np.cos(mu * x), np.zeros(N)])
    return ProblemInstance(name="nls", system=system, params={"N": N}, y0=y0,
                           reference_kind="self-convergence", extra={"D2": D2, "x": x, "L": L})


def quartic_potential():
    """V(y) = sum (y_i^2 - 1)^2 / 4 and its gradient."""
    def V(y):
        return 0.25 * np.sum((y * y - 1.0) ** 2)

    def grad_V(y):
        return y * (y * y - 1.0)

    return V, grad_V


def stiff_gradient(spectrum=(1.0, 1e2, 1e4, 1e6), potential=None, y0=None) -> ProblemInstance:
    """y' = -grad U(y), U = y.M.y/2 + V(y), M = diag(spectrum).

    ``potential`` is None (V = 0), "quartic", or a (V, grad_V) pair.
    """
    lam = np.asarray(spectrum, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("spectrum must be a non-empty list")
    if np.any(lam < 0):
        raise ValueError("spectrum entries must be non-negative")
    d = lam.size
    if potential is None:
        V, grad_V = (lambda y: 0.0), (lambda y: np.zeros_like(y))
        kind = "none"
    elif potential == "quartic":
        V, grad_V = quartic_potential()
        kind = "quartic"
    else:
        V, grad_V = potential
        kind = "custom"
    system = SemilinearSystem.from_structure(-np.eye(d), np.diag(lam), grad_V, V, "gradient",
                                             name="stiff-gradient")
    y0 = np.full(d, 0.5) if y0 is None else np.asarray(y0, dtype=float)
    inst = ProblemInstance(name="stiff-gradient", system=system,
                           params={"spectrum": lam.tolist(), "potential": kind}, y0=y0,
                           reference_kind="reference-integration")
    if kind == "none":
        inst.reference = lambda t: np.exp(-lam * t) * y0
        inst.reference_kind = "closed-form"
    return inst


CATALOG = {
    "duffing": duffing,
    "wind": wind,
    "nls": nls_semidiscrete,
    "stiff-gradient": stiff_gradient,
    "linear": linear_oscillator,
}


def get_problem(name: str, **params) -> ProblemInstance:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)
