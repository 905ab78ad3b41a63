"""Numerical toolkit for decay rates of nonlocal diffusion ``u_t = J * u - chi0 u``.

Modules
-------
regvar    slowly and regularly varying functions, Karamata checks
xseries   Poisson-weighted exponential series, Kummer's function
kernels   kernels on periodic grids, convolution powers, sharp Young bounds
solver    series and spectral solvers, norm tracking
decayfit  decay-exponent fits and reproduction scenarios
cli       config-driven runner
"""

__version__ = "0.1.0"

from .errors import (CostError, DomainError, EvaluationError, FitError,  # noqa: E402
                     PeriodizationError, ResolutionError)
from .regvar import RegVarying, SlowVarying  # noqa: E402

__all__ = [
    "CostError", "DomainError", "EvaluationError", "FitError", "PeriodizationError",
    "ResolutionError", "RegVarying", "SlowVarying",
]
