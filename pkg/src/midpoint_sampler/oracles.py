"""Independent numerical oracles used by the verification suite and tests.

These deliberately avoid the samplers' own discretizations:

* a classical 4th-order Runge-Kutta reference for the exact-score
  probability flow ODE (used to measure discretization error and Picard
  residuals);
* fine-grid Euler-Maruyama simulations of the underdamped noise laws
  (used to validate the closed-form covariance factors in :mod:`rng`).
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream
from .targets import TargetModel, score

__all__ = [
    "reference_ode_solve",
    "reference_ode_solve_durations",
    "fine_grid_uld_cov",
    "fine_grid_shenlee_cov",
]


def reference_ode_solve(model: TargetModel, x0: np.ndarray, t0: float,
                        t1: float, n_steps: int) -> np.ndarray:
    """Integrate the reverse ODE dx/dtau = x + score(t0 - tau, x) from t0 to t1.

    Classical RK4 with ``n_steps`` uniform substeps; ``t0 > t1 >= 0`` are
    forward times.  Vectorized over a batch ``x0`` of shape ``(n, d)``.
    """
    if t1 > t0:
        raise ValueError("need t1 <= t0 (forward time decreases)")
    x = np.array(x0, dtype=float, copy=True)
    total = t0 - t1
    if total == 0 or n_steps == 0:
        return x
    dt = total / n_steps
    for j in range(n_steps):
        tau = j * dt

        def f(tau_loc, xx):
            return xx + score(model, t0 - tau_loc, xx)

        k1 = f(tau, x)
        k2 = f(tau + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = f(tau + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = f(tau + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def reference_ode_solve_durations(model: TargetModel, x0: np.ndarray, t0: float,
                                  durations: np.ndarray, n_steps: int) -> np.ndarray:
    """Same reverse ODE, but each particle integrates its own duration.

    Substituting ``tau = sigma * duration`` turns per-particle horizons into a
    shared unit interval with a per-particle speed factor, so one vectorized
    RK4 sweep covers the whole batch.
    """
    x = np.array(x0, dtype=float, copy=True)
    dur = np.asarray(durations, dtype=float)[:, None]
    if np.any(dur < 0):
        raise ValueError("durations must be non-negative")
    ds = 1.0 / n_steps
    for j in range(n_steps):
        sig = j * ds

        def f(sig_loc, xx):
            t_loc = t0 - sig_loc * dur[:, 0]
            return dur * (xx + score(model, t_loc, xx))

        k1 = f(sig, x)
        k2 = f(sig + 0.5 * ds, x + 0.5 * ds * k1)
        k3 = f(sig + 0.5 * ds, x + 0.5 * ds * k2)
        k4 = f(sig + ds, x + ds * k3)
        x = x + (ds / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def fine_grid_uld_cov(gamma: float, delta: float, n_paths: int,
                      n_sub: int, rng: RngStream) -> np.ndarray:
    """Empirical covariance of (zeta_x, zeta_v) from an Euler-Maruyama grid.

    Simulates dv = -gamma v dt + sqrt(2 gamma) dB, dx = v dt from rest and
    returns the 2x2 sample covariance of (x_delta, v_delta) over ``n_paths``
    scalar paths.
    """
    dt = delta / n_sub
    x = np.zeros(n_paths)
    v = np.zeros(n_paths)
    amp = np.sqrt(2.0 * gamma * dt)
    gen = rng.gen
    for _ in range(n_sub):
        dB = gen.standard_normal(n_paths)
        x = x + v * dt
        v = v - gamma * v * dt + amp * dB
    return np.cov(np.stack([x, v]))


def fine_grid_shenlee_cov(alpha: float, h: float, n_paths: int,
                          n_sub: int, rng: RngStream) -> np.ndarray:
    """Empirical 3x3 covariance of (W1, W2, W3) from a shared Brownian grid.

    Accumulates the three Ito integrals against common increments:
    W1 over [0, alpha*h] with weight 1 - e^{-2(alpha h - s)},
    W2 over [0, h] with weight 1 - e^{-2(h - s)},
    W3 over [0, h] with weight e^{-2(h - s)}.
    """
    a = alpha * h
    dt = h / n_sub
    s_mid = (np.arange(n_sub) + 0.5) * dt
    w1_coef = np.where(s_mid < a, 1.0 - np.exp(-2.0 * (a - s_mid)), 0.0)
    w2_coef = 1.0 - np.exp(-2.0 * (h - s_mid))
    w3_coef = np.exp(-2.0 * (h - s_mid))
    w1 = np.zeros(n_paths)
    w2 = np.zeros(n_paths)
    w3 = np.zeros(n_paths)
    amp = np.sqrt(dt)
    gen = rng.gen
    for j in range(n_sub):
        dB = amp * gen.standard_normal(n_paths)
        w1 += w1_coef[j] * dB
        w2 += w2_coef[j] * dB
        w3 += w3_coef[j] * dB
    return np.cov(np.stack([w1, w2, w3]))
