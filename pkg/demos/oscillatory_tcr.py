"""TCr on a stiff oscillatory system q'' + Omega q = -grad U(q), compared with ECr on the
first-order form and with the frequency-free RKNCr variant."""
import numpy as np

from expcolloc import CollocationScheme, SecondOrderSystem, build_coefficients, rkn_step, step, tcr_step

rng = np.random.default_rng(0)
B = rng.standard_normal((3, 3))
Omega = B @ B.T
Omega *= 400.0 / np.linalg.norm(Omega, 2)  # frequencies up to 20

fpu = SecondOrderSystem(Omega=Omega, grad_U=lambda q: q ** 3, U=lambda q: np.sum(q ** 4) / 4)
first = fpu.to_first_order()
scheme = CollocationScheme(r=3, h=0.05, max_iter=20)
q, p = 0.1 * rng.standard_normal(3), rng.standard_normal(3)
y = np.concatenate([q, p])
H0 = fpu.H(q, p)
table = build_coefficients(first, scheme)
for n in range(200):
    q, p, _ = tcr_step(fpu, scheme, q, p)
    y, _ = step(first, scheme, table, y)
print(f"after 200 steps: |TCr - ECr| = {np.abs(np.concatenate([q, p]) - y).max():.2e}, "
      f"energy error {abs(fpu.H(q, p) - H0):.2e}")

flat = SecondOrderSystem(Omega=np.zeros((1, 1)), grad_U=lambda q: np.sin(q), U=lambda q: 1 - np.cos(q[0]))
q0, p0 = np.array([1.0]), np.array([0.0])
a = tcr_step(flat, scheme, q0, p0)
b = rkn_step(flat, scheme, q0, p0)
print(f"pendulum, Omega = 0: TCr and RKNCr differ by {abs(a[0][0] - b[0][0]):.1e}")
