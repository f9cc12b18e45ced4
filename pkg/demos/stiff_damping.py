"""Stiff gradient flow y' = -grad U(y) with eigenvalues up to 1e6 and h = 1.

ECr integrates the linear part exactly, so the stiff modes are damped
instead of amplified. Explicit RK4 blows up on the first step.
"""
import numpy as np

from expcolloc import CollocationScheme, baseline_rk4, build_coefficients, integrate, step, stepsize_guard
from expcolloc.problems import stiff_gradient

lam = [1.0, 1e2, 1e4, 1e6]
lin = stiff_gradient(lam)
scheme = CollocationScheme(r=2, h=1.0)
y1, _ = step(lin.system, scheme, build_coefficients(lin.system, scheme), lin.y0)
print("one step, V = 0:    ", y1)
print("exp(-hM) y0:        ", np.exp(-np.array(lam)) * lin.y0)

quart = stiff_gradient(lam, potential="quartic")
res = integrate(quart.system, scheme, quart.y0, 200.0)
print(f"quartic V: U goes {res.energy[0]:.6f} -> {res.energy[-1]:.6f}, "
      f"largest step change {np.diff(res.energy).max():.2e}")
print(stepsize_guard(quart.system, scheme, quart.y0).message)

rk = baseline_rk4(lin.system, 1.0, 200.0, lin.y0)
print(f"RK4: blowup = {rk.blowup} after {rk.steps} step(s), |y| = {np.abs(rk.y[-1]).max():.2e}")
