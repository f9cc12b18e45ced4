"""Cubic Schrodinger equation on 32 Fourier points: self-convergence and energy drift."""
import numpy as np

from expcolloc import CollocationScheme, integrate
from expcolloc.harness import convergence_study
from expcolloc.problems import nls_semidiscrete

prob = nls_semidiscrete(32)
rep = convergence_study(prob, "ecr", CollocationScheme(r=2, h=0.1), [0.1, 0.05, 0.025, 0.0125], 10.0)
for h, e in zip(rep.h, rep.errors):
    print(f"h = {h:<7} error vs h/8 reference = {e:.2e}")
print(f"order {rep.order:.2f}; reference agrees with DOP853 to {rep.cross_check:.1e}")

res = integrate(prob.system, CollocationScheme(r=2, h=0.01), prob.y0, 50.0)
drift = np.abs(res.energy - res.energy[0]).max() / abs(res.energy[0])
print(f"relative energy drift over [0, 50] at h = 0.01: {drift:.1e}")
