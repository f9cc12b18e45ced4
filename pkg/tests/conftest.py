import numpy as np
import pytest
from hypothesis import settings
from scipy.linalg import expm as scipy_expm

# fixed example sequence so test runs are reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")


def xi_quadrature(fn, panels=16, points=16):
    """Composite Gauss-Legendre on [0, 1]; fn takes a scalar and returns an array."""
    x, w = np.polynomial.legendre.leggauss(points)
    total = 0.0
    for a in np.arange(panels) / panels:
        for xi, wi in zip(a + (x + 1) / (2 * panels), w / (2 * panels)):
            total = total + wi * fn(xi)
    return total


def phi_bar_oracle(Z, k):
    Z = np.atleast_2d(np.asarray(Z, float))
    if k == 0:
        return scipy_expm(Z)
    from math import factorial
    return xi_quadrature(lambda s: scipy_expm((1 - s) * Z) * s ** (k - 1) / factorial(k - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
