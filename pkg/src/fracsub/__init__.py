"""Numerical toolkit for the sublinear fractional equation ``(-Lap)^{sigma/2} u = rho u^alpha``.

Modules
-------
core        grids, fields, coefficients, norms, configuration
fraclap     spectral and singular-integral fractional Laplacians
dirichlet   spectral fractional Laplacian on boxes with zero boundary data
riesz       Riesz potential, finiteness and decay diagnostics
extension   sigma-harmonic extension and conormal trace
sublinear   monotone iteration, exhaustion, perturbation experiment
pme         fractional porous-medium evolution and the uniqueness experiment
cli         scenario runner
"""

from .core import (
    AssumptionError,
    CheckFailure,
    ConfigError,
    ConvergenceError,
    Field,
    FracSubError,
    Grid,
    ProblemSpec,
    WeightedNorms,
    energy_seminorm,
    make_coefficient,
    weighted_l1,
    weighted_norms,
)
from .dirichlet import DirichletOperator, dirichlet_apply, dirichlet_solve
from .extension import conormal_trace, extend, linear_uniqueness_check
from .fraclap import Constants, SpectralOperator, apply_singular, apply_spectral, constants
from .pme import evolve_ball, uniqueness_experiment
from .riesz import DecayFit, admissible_exponents, decay_fit, finiteness_check, riesz_convolve
from .sublinear import perturbation_experiment, solve_ball, solve_global

__version__ = "0.1.0"
