"""Error types shared across the toolkit."""

from __future__ import annotations


class SamplerError(Exception):
    """Base class for all toolkit errors."""


class InvalidStateError(SamplerError):
    """A particle state contains non-finite entries."""


class BlowUpError(SamplerError):
    """A trajectory exceeded the blow-up threshold.

    Carries provenance (forward time and step index) so that a failing
    run can report where the reverse ODE became unstable.
    """

    def __init__(self, message: str, t: float | None = None, step: int | None = None):
        super().__init__(message)
        self.t = t
        self.step = step


class DegenerateNoiseError(SamplerError):
    """A noise covariance matrix was numerically not positive semidefinite."""


class MetricError(SamplerError):
    """A metric was requested on inputs it cannot handle (e.g. too few samples)."""


#: Infinity-norm threshold above which trajectories abort loudly.
BLOWUP_LIMIT = 1e8
