"""Fourth-order convergence of EC2 on the Duffing oscillator, and sixth order for EC3.

Run:  python demos/duffing_convergence.py
"""
import numpy as np

from expcolloc import CollocationScheme, integrate
from expcolloc.harness import fit_order
from expcolloc.problems import duffing

prob = duffing(omega=5.0, k=0.07)
T = 10.0
exact = prob.reference(T)

for r in (2, 3):
    # EC3 reaches roundoff near h = 0.025, so it gets coarser steps
    hs = 0.1 / 2.0 ** np.arange(4) if r == 2 else 0.2 / 2.0 ** np.arange(3)
    errs = []
    print(f"r = {r}")
    for h in hs:
        res = integrate(prob.system, CollocationScheme(r=r, h=h), prob.y0, T)
        errs.append(np.abs(res.y[-1] - exact).max())
        print(f"  h = {h:<8.5f} error = {errs[-1]:.3e}")
    order, r2 = fit_order(hs, errs, T)
    print(f"  fitted order {order:.2f} (R^2 = {r2:.5f}), expected {2 * r}\n")
