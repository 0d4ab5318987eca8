"""Sequential underdamped Langevin Monte Carlo corrector.

Discretizes dx = v dt, dv = (s(x_frozen) - gamma v) dt + sqrt(2 gamma) dB with
the exponential integrator: within each step the score is frozen at the step
start and the linear (v, noise) part is solved exactly, which is what the
correlated :class:`~midpoint_sampler.rng.UldNoiseBlock` encodes.  Run for a
short total time, this converts Wasserstein closeness into TV closeness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BLOWUP_LIMIT, BlowUpError
from .rng import RngStream, UldNoiseBlock, sample_uld_noise

__all__ = ["UldState", "uld_step", "run_corrector"]


@dataclass
class UldState:
    """Position-velocity batch inside one corrector invocation."""

    x: np.ndarray          # (n, d)
    v: np.ndarray          # (n, d)
    t_elapsed: float = 0.0


def uld_step(state: UldState, h: float, gamma: float, score_fn,
             noise: UldNoiseBlock) -> UldState:
    """One exponential-integrator ULMC step with pre-scaled noise parts.

    ``score_fn`` maps a position batch to the score at the corrector's fixed
    target time.
    """
    if noise.step != h or noise.gamma != gamma:
        raise ValueError("noise block was generated for different (h, gamma)")
    s = np.asarray(score_fn(state.x))
    if not np.all(np.isfinite(s)):
        raise BlowUpError(f"corrector blow-up at t_elapsed={state.t_elapsed:.6g}")
    decay = np.exp(-gamma * h)
    a1 = -np.expm1(-gamma * h) / gamma        # (1 - e^{-gamma h}) / gamma
    v_new = decay * state.v + a1 * s + noise.zeta_v
    x_new = state.x + a1 * state.v + ((h - a1) / gamma) * s + noise.zeta_x
    if np.abs(x_new).max(initial=0.0) > BLOWUP_LIMIT or not np.all(np.isfinite(x_new)):
        raise BlowUpError(f"corrector blow-up at t_elapsed={state.t_elapsed:.6g}")
    return UldState(x=x_new, v=v_new, t_elapsed=state.t_elapsed + h)


def corrector_steps(T_corr: float, h_corr: float) -> list[float]:
    """Step sizes: round(T_corr/h_corr) steps, the last adjusted to land on T_corr."""
    n = max(1, round(T_corr / h_corr))
    return [h_corr] * (n - 1) + [T_corr - (n - 1) * h_corr]


def run_corrector(x0: np.ndarray, score_fn, T_corr: float, h_corr: float,
                  gamma: float, rng: RngStream) -> np.ndarray:
    """Run ULMC for total time T_corr and return the position batch.

    The velocity is refreshed from N(0, I) on entry and discarded on exit.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n, d = x0.shape
    v0 = rng.child("velocity").normal(size=(n, d))
    state = UldState(x=x0, v=v0)
    for k, h in enumerate(corrector_steps(T_corr, h_corr)):
        noise = sample_uld_noise(rng.child("noise", k), h, gamma, d, n)
        state = uld_step(state, h, gamma, score_fn, noise)
    return state.x
