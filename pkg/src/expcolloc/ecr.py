"""Exponential collocation (ECr) for y' = A y + g(y).

The continuous stage function is

    u(tau) = exp(tau h A) y0 + tau h int_0^1 Abar(tau, sigma) g(u(sigma)) dsigma,

with Abar(tau, sigma) = int_0^1 exp((1 - xi) tau h A) P(xi tau, sigma) dxi and
P the reproducing kernel of polynomials of degree < r. In practice the
sigma-integral is replaced by the r-point Gauss rule, which gives an
implicit r-stage scheme solved by fixed-point iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import OrthonormalBasis, QuadratureRule, gauss_rule, legendre_basis, projection_kernel
from .matfun import as_square, expm, phi_table

__all__ = [
    "Advisory",
    "CoefficientTable",
    "CollocationScheme",
    "NumericalError",
    "RunResult",
    "SemilinearSystem",
    "StepInfo",
    "abar",
    "abar_quadrature",
    "build_coefficients",
    "classify",
    "dense_output",
    "integrate",
    "step",
    "stepsize_guard",
]

CLASSIFICATIONS = ("conservative", "dissipative", "gradient", "generic")

# A fixed-point update this small relative to the stage size is roundoff.
_STALL = 8 * np.finfo(float).eps
# States growing past this factor of the initial size count as a blowup.
BLOWUP_FACTOR = 1e12


class NumericalError(FloatingPointError):
    """Raised when an integrator produces non-finite values."""


def classify(Q: np.ndarray, atol: float = 1e-12) -> str:
    Q = np.asarray(Q, dtype=float)
    if np.allclose(Q, -np.eye(len(Q)), rtol=0, atol=atol):
        return "gradient"
    if np.allclose(Q, -Q.T, rtol=0, atol=atol):
        return "conservative"
    sym = 0.5 * (Q + Q.T)
    if np.max(np.linalg.eigvalsh(sym)) <= atol:
        return "dissipative"
    return "generic"


@dataclass(frozen=True)
class SemilinearSystem:
    """y' = A y + g(y), optionally carrying the structure y' = Q grad H(y).

    With structure, H(y) = y.M.y / 2 + V(y), A = Q M and g = Q grad V.
    """

    A: np.ndarray
    g: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], float] | None = None
    Q: np.ndarray | None = None
    M: np.ndarray | None = None
    grad_V: Callable[[np.ndarray], np.ndarray] | None = None
    V: Callable[[np.ndarray], float] | None = None
    classification: str = "generic"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "A", as_square(self.A))
        if self.classification not in CLASSIFICATIONS:
            raise ValueError(f"unknown classification {self.classification!r}")
        if self.Q is None:
            if self.classification != "generic":
                raise ValueError("a structured classification needs Q")
            return
        Q = as_square(self.Q)
        if Q.shape != self.A.shape:
            raise ValueError("Q and A have different shapes")
        if abs(np.linalg.det(Q)) == 0.0:
            raise ValueError("Q must be invertible")
        expected = classify(Q)
        ok = {
            "conservative": expected == "conservative",
            "dissipative": expected in ("dissipative", "gradient"),
            "gradient": expected == "gradient",
            "generic": True,
        }[self.classification]
        if not ok:
            raise ValueError(f"Q is not compatible with classification {self.classification!r}")

    @classmethod
    def from_structure(cls, Q, M, grad_V, V, classification=None, name="") -> SemilinearSystem:
        Q = as_square(Q)
        M = as_square(M)
        if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(M)))):
            raise ValueError("M must be symmetric")
        classification = classification or classify(Q)

        def g(y):
            return Q @ grad_V(y)

        def H(y):
            return 0.5 * y @ (M @ y) + V(y)

        return cls(A=Q @ M, g=g, H=H, Q=Q, M=M, grad_V=grad_V, V=V,
                   classification=classification, name=name)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    def rhs(self, y: np.ndarray) -> np.ndarray:
        return self.A @ y + self.g(y)

    def energy(self, Y) -> np.ndarray | None:
        if self.H is None:
            return None
        Y = np.atleast_2d(Y)
        return np.array([self.H(y) for y in Y])

    def check_structure(self, rng=None, samples: int = 5, scale: float = 1.0) -> dict:
        """Verify A = QM, g = Q grad V and grad V against finite differences of V.

        Returns the measured discrepancies; raises ValueError if one is out of tolerance.
        """
        if self.Q is None:
            return {}
        rng = np.random.default_rng(rng)
        report = {"A=QM": float(np.max(np.abs(self.A - self.Q @ self.M)))}
        if report["A=QM"] > 1e-12 * max(1.0, np.max(np.abs(self.A))):
            raise ValueError(f"A differs from QM by {report['A=QM']:.3e}")
        g_err = fd_err = 0.0
        for _ in range(samples):
            y = scale * rng.standard_normal(self.d)
            gv = self.grad_V(y)
            g_err = max(g_err, float(np.max(np.abs(self.g(y) - self.Q @ gv))))
            fd = central_gradient(self.V, y)
            fd_err = max(fd_err, float(np.max(np.abs(fd - gv)) / max(1.0, np.max(np.abs(gv)))))
        report["g=QgradV"] = g_err
        report["gradV_fd"] = fd_err
        if g_err > 1e-10:
            raise ValueError(f"g differs from Q grad V by {g_err:.3e}")
        if fd_err > 1e-6:
            raise ValueError(f"grad V disagrees with finite differences of V ({fd_err:.3e})")
        return report


def central_gradient(f, y, eps: float = 1e-5) -> np.ndarray:
    """Fourth-order central-difference gradient of a scalar function."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for i in range(len(y)):
        hi = eps * max(1.0, abs(y[i]))
        e = np.zeros_like(y)
        e[i] = hi
        out[i] = (-f(y + 2 * e) + 8 * f(y + e) - 8 * f(y - e) + f(y - 2 * e)) / (12 * hi)
    return out


@dataclass(frozen=True)
class CollocationScheme:
    """Order parameter r, stepsize h and the fixed-point controls.

    ``tol`` is compared with the max-norm of the stage update; a value below
    double resolution (the default) means "iterate until the update stalls
    at roundoff or ``max_iter`` sweeps are spent".
    """

    r: int
    h: float
    tol: float = 1e-16
    max_iter: int = 5
    rule: QuadratureRule = field(init=False, repr=False, compare=False)
    basis: OrthonormalBasis = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("stepsize h must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        object.__setattr__(self, "rule", gauss_rule(self.r))
        object.__setattr__(self, "basis", legendre_basis(self.r))

    def with_h(self, h: float) -> CollocationScheme:
        return CollocationScheme(r=self.r, h=h, tol=self.tol, max_iter=self.max_iter)


def _closed_form_weights(basis: OrthonormalBasis, sigma) -> np.ndarray:
    """w[k, ...] = sum_{i>=k} sqrt(2i+1) (-1)^(i+k) (i+k)!/(k!(i-k)!) p_i(sigma)."""
    P = basis(sigma)
    w = np.zeros_like(P)
    for i in range(basis.r):
        for k in range(i + 1):
            c = (-1) ** (i + k) * math.sqrt(2 * i + 1) * math.factorial(i + k) / (
                math.factorial(k) * math.factorial(i - k))
            w[k] += c * P[i]
    return w


def abar(A, h: float, basis: OrthonormalBasis, tau: float, sigma) -> np.ndarray:
    """Closed-form Abar(tau, sigma) = sum_k tau^k phi_{k+1}(tau h A) w_k(sigma).

    ``sigma`` may be a scalar or a 1-D array; the result has shape
    shape(sigma) + (d, d).
    """
    A = as_square(A)
    table = phi_table(tau * h * A, basis.r)
    w = _closed_form_weights(basis, np.atleast_1d(np.asarray(sigma, float)))
    out = np.zeros((w.shape[1],) + A.shape)
    for k in range(basis.r):
        out += (w[k] * tau ** k)[:, None, None] * table[k + 1]
    return out[0] if np.ndim(sigma) == 0 else out


def abar_quadrature(A, h: float, basis: OrthonormalBasis, tau: float, sigma: float,
                    panels: int = 16, points: int = 16) -> np.ndarray:
    """Abar(tau, sigma) by composite Gauss quadrature of its defining xi-integral."""
    A = as_square(A)
    x, w = np.polynomial.legendre.leggauss(points)
    out = np.zeros(A.shape)
    edges = np.linspace(0.0, 1.0, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        xi = 0.5 * (b - a) * x + 0.5 * (a + b)
        wi = 0.5 * (b - a) * w
        for xk, wk in zip(xi, wi):
            out += wk * float(projection_kernel(basis, xk * tau, sigma)) * expm((1 - xk) * tau * h * A)
    return out


@dataclass(frozen=True)
class CoefficientTable:
    """Everything one step needs for a fixed (A, h, r).

    ``stage[i, j]`` is Abar(c_i, c_j), ``end[j]`` is Abar(1, c_j); ``W`` and
    ``W_end`` fold in the factors c_i h b_j so a fixed-point sweep is one
    matrix-vector product.
    """

    h: float
    r: int
    nodes: np.ndarray
    weights: np.ndarray
    E_nodes: np.ndarray
    E1: np.ndarray
    stage: np.ndarray
    end: np.ndarray
    W: np.ndarray
    W_end: np.ndarray

    @property
    def d(self) -> int:
        return self.E1.shape[0]


_TABLE_CACHE: dict = {}
_TABLE_CACHE_SIZE = 32


def build_coefficients(system: SemilinearSystem, scheme: CollocationScheme) -> CoefficientTable:
    A = system.A
    key = (A.shape, A.tobytes(), float(scheme.h), scheme.r)
    cached = _TABLE_CACHE.get(key)
    if cached is not None:
        return cached
    h, r, d = scheme.h, scheme.r, system.d
    c, b = scheme.rule.nodes, scheme.rule.weights
    stage = np.stack([abar(A, h, scheme.basis, ci, c) for ci in c])
    end = abar(A, h, scheme.basis, 1.0, c)
    E_nodes = np.stack([expm(ci * h * A) for ci in c])
    E1 = expm(h * A)
    for arr in (stage, end, E_nodes, E1):
        if not np.all(np.isfinite(arr)):
            raise NumericalError("non-finite coefficient table")
    # W[(i, :), (j, :)] = c_i h b_j Abar(c_i, c_j)
    W = (c[:, None, None, None] * h * b[None, :, None, None] * stage).transpose(0, 2, 1, 3).reshape(r * d, r * d)
    W_end = (h * b[:, None, None] * end).transpose(1, 0, 2).reshape(d, r * d)
    table = CoefficientTable(h=h, r=r, nodes=c, weights=b, E_nodes=E_nodes, E1=E1,
                             stage=stage, end=end, W=W, W_end=W_end)
    for arr in (table.E_nodes, table.E1, table.stage, table.end, table.W, table.W_end):
        arr.setflags(write=False)
    if len(_TABLE_CACHE) >= _TABLE_CACHE_SIZE:
        _TABLE_CACHE.pop(next(iter(_TABLE_CACHE)))
    _TABLE_CACHE[key] = table
    return table


@dataclass
class StepInfo:
    iterations: int
    residual: float
    converged: bool
    stages: np.ndarray


def _eval_g(g, Y: np.ndarray) -> np.ndarray:
    return np.stack([g(y) for y in Y])


def solve_stages(G_of, base: np.ndarray, W: np.ndarray, tol: float, max_iter: int):
    """Fixed-point iteration Y = base + W G(Y), all stages updated per sweep.

    ``G_of`` maps the (r, d) stage array to the stacked nonlinearity values
    that ``W`` acts on. Returns (Y, G, iterations, residual, converged) with
    G evaluated at the final stages.
    """
    Y = base
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        G = G_of(Y)
        Ynew = base + (W @ G.ravel()).reshape(base.shape)
        residual = float(np.max(np.abs(Ynew - Y)))
        Y = Ynew
        if residual <= max(tol, _STALL * float(np.max(np.abs(Y)))):
            converged = True
            break
    G = G_of(Y)
    return Y, G, it, residual, converged


def step(system: SemilinearSystem, scheme: CollocationScheme, table: CoefficientTable, y0) -> tuple:
    """One ECr step with Gauss quadrature; returns (y1, StepInfo).

    Non-convergence within ``scheme.max_iter`` sweeps is reported in the
    StepInfo, not raised. Non-finite results raise NumericalError.
    """
    y0 = np.asarray(y0, dtype=float)
    base = table.E_nodes @ y0
    Y, G, it, residual, converged = solve_stages(lambda Y: _eval_g(system.g, Y), base, table.W, scheme.tol, scheme.max_iter)
    y1 = table.E1 @ y0 + table.W_end @ G.ravel()
    if not np.all(np.isfinite(y1)):
        raise NumericalError("non-finite state after ECr step")
    return y1, StepInfo(iterations=it, residual=residual, converged=converged, stages=Y)


def dense_output(system: SemilinearSystem, scheme: CollocationScheme, y0, stages, tau: float,
                 table: CoefficientTable | None = None) -> np.ndarray:
    """u(tau) = exp(tau h A) y0 + tau h sum_j b_j Abar(tau, c_j) g(Y_j)."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    y0 = np.asarray(y0, dtype=float)
    G = _eval_g(system.g, np.asarray(stages))
    if tau == 0.0:
        return y0.copy()
    if tau == 1.0:
        table = table or build_coefficients(system, scheme)
        return table.E1 @ y0 + table.W_end @ G.ravel()
    h, b = scheme.h, scheme.rule.weights
    coef = abar(system.A, h, scheme.basis, tau, scheme.rule.nodes)
    return expm(tau * h * system.A) @ y0 + tau * h * np.einsum("j,jab,jb->a", b, coef, G)


@dataclass
class RunResult:
    """Trajectory and per-step diagnostics of a constant-stepsize run."""

    t: np.ndarray
    y: np.ndarray
    energy: np.ndarray | None
    iterations: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    h: float
    method: str = "ecr"
    blowup: bool = False
    stages: list | None = None

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    @property
    def nonconverged_steps(self) -> np.ndarray:
        return np.flatnonzero(~self.converged)

    def energy_defect(self) -> np.ndarray | None:
        if self.energy is None:
            return None
        return self.energy - self.energy[0]


def step_sizes(h: float, T: float) -> list:
    """Split [0, T] into ceil(T/h) steps of size h, the last one possibly shorter."""
    if not T > 0:
        raise ValueError("T must be positive")
    n = T / h
    full = int(round(n)) if abs(n - round(n)) < 1e-9 * max(1.0, n) else int(math.floor(n))
    sizes = [h] * full
    rest = T - full * h
    if rest > 1e-12 * T:
        sizes.append(rest)
    return sizes


def _run(step_fn, system, y0, sizes, method, h, record_stages=False) -> RunResult:
    y0 = np.asarray(y0, dtype=float)
    n = len(sizes)
    ys = [y0]
    ts = [0.0]
    iters, res, conv, stages = [], [], [], []
    limit = BLOWUP_FACTOR * max(1.0, float(np.max(np.abs(y0))))
    blowup = False
    y = y0
    t = 0.0
    for k in range(n):
        try:
            y, info = step_fn(y, sizes[k])
        except NumericalError:
            blowup = True
            break
        t = t + sizes[k]
        ys.append(y)
        ts.append(t)
        iters.append(info.iterations)
        res.append(info.residual)
        conv.append(info.converged)
        if record_stages:
            stages.append(info.stages)
        if float(np.max(np.abs(y))) > limit:
            blowup = True
            break
    Y = np.array(ys)
    energy = system.energy(Y) if system.H is not None else None
    return RunResult(t=np.array(ts), y=Y, energy=energy, iterations=np.array(iters, dtype=int),
                     residuals=np.array(res, dtype=float), converged=np.array(conv, dtype=bool),
                     h=h, method=method, blowup=blowup, stages=stages if record_stages else None)


def integrate(system: SemilinearSystem, scheme: CollocationScheme, y0, T: float,
              record_stages: bool = False) -> RunResult:
    """Integrate over [0, T] with constant stepsize scheme.h.

    The coefficient table is built once (plus once more for a shorter final
    step). A non-finite state ends the run early with ``blowup`` set.
    """
    sizes = step_sizes(scheme.h, T)
    tables = {}

    def one(y, hk):
        sch = scheme if hk == scheme.h else scheme.with_h(hk)
        if hk not in tables:
            tables[hk] = build_coefficients(system, sch)
        return step(system, sch, tables[hk], y)

    return _run(one, system, y0, sizes, "ecr", scheme.h, record_stages)


@dataclass(frozen=True)
class Advisory:
    """Estimate of the stepsize bound that guarantees a unique stage solution."""

    h: float
    M0: float
    D0: float
    D1: float
    radius: float
    h_limit: float
    beta: float
    unconditional: bool
    warn: bool
    message: str


def _jacobian_fd(g, y: np.ndarray) -> np.ndarray:
    d = len(y)
    J = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1e-6 * max(1.0, abs(y[i]))
        J[:, i] = (g(y + e) - g(y - e)) / (2 * e[i])
    return J


def stepsize_guard(system: SemilinearSystem, scheme: CollocationScheme, y0,
                   table: CoefficientTable | None = None, radius: float = 1.0) -> Advisory:
    """Diagnostic version of the existence condition h < min(1/(M0 D1), R/(M0 D0), 1).

    M0 is the largest infinity-norm of the tabulated Abar; D0 and D1 bound
    |g| and |g'| over a ball of the given radius around the stage seeds,
    sampled along coordinate directions, with g' by finite differences.
    These are estimates, never certified bounds; the guard never blocks.
    """
    table = table or build_coefficients(system, scheme)
    y0 = np.asarray(y0, dtype=float)
    norms = [np.linalg.norm(m, np.inf) for m in table.stage.reshape(-1, system.d, system.d)]
    norms += [np.linalg.norm(m, np.inf) for m in table.end]
    M0 = float(max(norms))
    centers = [y0] + [E @ y0 for E in table.E_nodes]
    points = []
    for c in centers:
        points.append(c)
        for i in range(system.d):
            e = np.zeros(system.d)
            e[i] = radius
            points += [c + e, c - e]
    D0 = max(float(np.linalg.norm(system.g(p), np.inf)) for p in points)
    D1 = max(float(np.linalg.norm(_jacobian_fd(system.g, p), np.inf)) for p in points)
    unconditional = D1 <= 1e-14 * max(1.0, D0)
    lim1 = np.inf if unconditional else 1.0 / (M0 * D1)
    lim2 = np.inf if D0 == 0.0 else radius / (M0 * D0)
    h_limit = float(min(lim1, lim2, 1.0))
    beta = 0.0 if unconditional else scheme.h * M0 * D1
    warn = (not unconditional) and (beta >= 1.0 or scheme.h >= h_limit)
    if unconditional:
        message = "unconditional: g has zero Jacobian near y0"
    elif warn:
        message = (f"warning: h={scheme.h:g} with contraction estimate {beta:.3g}; "
                   f"suggested h < {h_limit:.3g}")
    else:
        message = f"ok: contraction estimate {beta:.3g}, suggested h < {h_limit:.3g}"
    return Advisory(h=scheme.h, M0=M0, D0=D0, D1=D1, radius=radius, h_limit=h_limit,
                    beta=beta, unconditional=unconditional, warn=warn, message=message)
