"""Energy over a long Duffing run: EC2 against classical RK4 at the same stepsize.

The collocation method keeps |H - H0| bounded; RK4 drifts steadily.
"""

from expcolloc import CollocationScheme, baseline_rk4, integrate
from expcolloc.problems import duffing

prob = duffing()
T, h = 200.0, 0.01

ec = integrate(prob.system, CollocationScheme(r=2, h=h), prob.y0, T)
rk = baseline_rk4(prob.system, h, T, prob.y0)

print(f"H0 = {ec.energy[0]}")
print("    t        EC2 |H-H0|     RK4 |H-H0|")
for t in (1, 10, 50, 100, 200):
    n = int(round(t / h))
    print(f"{t:6.0f}   {abs(ec.energy[n] - ec.energy[0]):.3e}    {abs(rk.energy[n] - rk.energy[0]):.3e}")
