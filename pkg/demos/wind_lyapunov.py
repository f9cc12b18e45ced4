"""Wind-induced oscillation: conserved energy for theta = pi/2, decaying Lyapunov function below.

Per-step monotone decay needs the O(h^5) energy error to stay under the
physical dissipation per step; at h = 1/20 it does not, at h = 1/40 it does.
"""
import numpy as np

from expcolloc import CollocationScheme, integrate
from expcolloc.problems import wind

cons = wind(theta=np.pi / 2, rho=20.0)
res = integrate(cons.system, CollocationScheme(r=2, h=1 / 40), cons.y0, 100.0)
print(f"conservative: max |H - H0| over [0, 100] = {np.abs(res.energy - res.energy[0]).max():.2e}")

diss = wind(theta=np.pi / 2 - 1e-4, rho=20.0)
for h in (1 / 20, 1 / 40, 1 / 80):
    res = integrate(diss.system, CollocationScheme(r=2, h=h), diss.y0, 100.0)
    inc = np.diff(res.energy)
    print(f"dissipative, h = 1/{round(1 / h)}: H {res.energy[0]:.3f} -> {res.energy[-1]:.3f}, "
          f"steps with H increasing: {np.sum(inc > 1e-10)} of {res.steps}")
