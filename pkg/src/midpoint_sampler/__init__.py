"""Randomized-midpoint samplers for the probability flow ODE.

Sequential and parallel predictor-corrector algorithms plus a
randomized-midpoint log-concave sampler, with analytic Gaussian/GMM
targets, deterministic keyed randomness, and W2/TV validation metrics.
"""

__version__ = "0.1.0"

from .errors import (BlowUpError, DegenerateNoiseError, InvalidStateError,
                     MetricError, SamplerError)
from .rng import RngStream
from .schedules import (Constants, Schedule, make_logconcave_schedule,
                        make_parallel_schedule, make_sequential_schedule)
from .targets import (NoisedMarginal, TargetModel, anisotropic_gaussian,
                      gaussian_mixture, isotropic_gaussian,
                      quadratic_logconcave)

__all__ = [
    "__version__",
    "BlowUpError", "DegenerateNoiseError", "InvalidStateError", "MetricError",
    "SamplerError", "RngStream", "Constants", "Schedule",
    "make_sequential_schedule", "make_parallel_schedule",
    "make_logconcave_schedule", "TargetModel", "NoisedMarginal",
    "isotropic_gaussian", "anisotropic_gaussian", "gaussian_mixture",
    "quadratic_logconcave",
]
