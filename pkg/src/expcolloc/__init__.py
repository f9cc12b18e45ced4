"""Exponential collocation integrators for semilinear conservative and dissipative systems."""
from .basis import OrthonormalBasis, QuadratureRule, gauss_rule, lagrange_weights, legendre_basis, projection_kernel
from .ecr import (
    CollocationScheme,
    NumericalError,
    RunResult,
    SemilinearSystem,
    abar,
    build_coefficients,
    classify,
    dense_output,
    integrate,
    step,
    stepsize_guard,
)
from .elliptic import ellipj_agm, ellipk_agm
from .harness import ConfigError, ExperimentConfig, baseline_rk4, converge, energy_study, load_config, run
from .matfun import expm, phi_apply, phi_table
from .oscillatory import SecondOrderSystem, rkn_integrate, rkn_step, tcr_integrate, tcr_step
from .problems import CATALOG, get_problem

__version__ = "0.1.0"
