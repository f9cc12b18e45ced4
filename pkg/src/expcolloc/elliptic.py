"""Jacobi elliptic functions by the arithmetic-geometric mean (descending Landen) scheme."""
from __future__ import annotations

import numpy as np

__all__ = ["ellipj_agm", "ellipk_agm"]


def _agm_sequence(kappa: float, tol: float = 1e-16, max_steps: int = 40):
    a, b, c = [1.0], [np.sqrt(1.0 - kappa * kappa)], [kappa]
    while abs(c[-1]) > tol * a[-1] and len(a) <= max_steps:
        an, bn = a[-1], b[-1]
        a.append(0.5 * (an + bn))
        b.append(np.sqrt(an * bn))
        c.append(0.5 * (an - bn))
    return np.array(a), np.array(c)


def ellipk_agm(kappa: float) -> float:
    """Complete elliptic integral K for modulus ``kappa`` (parameter m = kappa**2)."""
    if not 0.0 <= kappa < 1.0:
        raise ValueError("modulus must lie in [0, 1)")
    a, _ = _agm_sequence(kappa)
    return float(np.pi / (2.0 * a[-1]))


def ellipj_agm(u, kappa: float):
    """sn, cn, dn of ``u`` for modulus ``kappa`` in [0, 1).

    Note the argument is the modulus k, not the parameter m = k**2 that
    scipy.special.ellipj takes.
    """
    if not 0.0 <= kappa < 1.0:
        raise ValueError("modulus must lie in [0, 1)")
    u = np.asarray(u, dtype=float)
    if kappa == 0.0:
        return np.sin(u), np.cos(u), np.ones_like(u)
    a, c = _agm_sequence(kappa)
    n = len(a) - 1
    if n == 0:  # kappa below roundoff relative to 1: no Landen steps taken
        sn = np.sin(u)
        return sn, np.cos(u), np.sqrt(1.0 - (kappa * sn) ** 2)
    phi = (2.0 ** n) * a[n] * u
    phi_prev = phi
    for j in range(n, 0, -1):
        phi_prev = phi
        phi = 0.5 * (phi + np.arcsin(c[j] / a[j] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)
    dn = cn / np.cos(phi_prev - phi)
    return sn, cn, dn
