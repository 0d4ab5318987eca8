"""Parallel predictor and corrector built on collocation / Picard iteration.

Predictor: each window of length ``h`` carries R randomized midpoints
``alpha_i ~ U[(i-1)/R, i/R]``.  Midpoint values are initialized with one
exponential-integrator half step and refined by K Jacobi-style Picard rounds
of the collocation sum

    x_i <- e^{alpha_i h} x_n
           + sum_{j<=i} (e^{alpha_i h - (j-1) d} - max(e^{alpha_i h - j d}, 1))
             * s(t_n - alpha_j h, x_j^{prev}),   d = h/R,

after which the window closes with the R-point quadrature of the drift
integral.  All R updates in a round read only round-(k-1) values, so a round
is one barrier of concurrent score evaluations.

Corrector: the underdamped analogue.  Sub-step states are pinned to the
window start at index 0 and updated by the prefix recursion
``(x, v)_i^{(k)} = substep((x, v)_{i-1}^{(k-1)}, zeta_i)`` with Brownian
blocks ``zeta_i`` drawn once per sub-interval and reused across rounds (the
Picard iteration refines one fixed SDE path).  With K >= R the recursion has
converged and equals the sequential composition of R sub-steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .corrector import UldState
from .errors import BLOWUP_LIMIT, BlowUpError
from .pool import resolve_workers, sharded_score
from .predictor import PredictorState
from .rng import RngStream, sample_uld_noise, uniform_midpoints
from .schedules import Schedule

__all__ = [
    "MidpointLattice",
    "WorkReport",
    "collocation_weight",
    "picard_init",
    "picard_round",
    "parallel_window_close",
    "parallel_corrector_round",
    "run_parallel_predictor",
    "run_parallel",
]


@dataclass
class MidpointLattice:
    """Randomized midpoints of one window and their current estimates.

    ``alphas`` has shape (n, R) with strictly increasing columns per particle;
    ``estimates`` has shape (R, n, d); ``round`` counts completed Picard rounds.
    """

    alphas: np.ndarray
    estimates: np.ndarray
    round: int = 0

    @property
    def R(self) -> int:
        return self.alphas.shape[1]


@dataclass
class WorkReport:
    """Parallel-round and score-evaluation accounting for one run."""

    parallel_rounds: int = 0
    score_evaluations: int = 0
    wall_clock: float = 0.0

    def add(self, rounds: int, evals: int):
        self.parallel_rounds += rounds
        self.score_evaluations += evals

    def as_dict(self) -> dict:
        return {"parallel_rounds": self.parallel_rounds,
                "score_evaluations": self.score_evaluations,
                "wall_clock": self.wall_clock}


def collocation_weight(i: int, j: int, h: float, delta_n: float, alpha_i):
    """Weight of midpoint j in the collocation sum for midpoint i (1-based).

    Zero when the sub-window [ (j-1) delta, j delta ] lies entirely beyond
    ``alpha_i h``; the displayed ``max`` clips the exponential at 1.
    """
    if not 1 <= j <= i:
        raise ValueError("need 1 <= j <= i")
    a = np.asarray(alpha_i, dtype=float) * h
    return np.exp(a - (j - 1) * delta_n) - np.maximum(np.exp(a - j * delta_n), 1.0)


def _guard(x: np.ndarray, where: str, t: float):
    if not np.all(np.isfinite(x)) or np.abs(x).max(initial=0.0) > BLOWUP_LIMIT:
        raise BlowUpError(f"{where} blow-up at (t={t:.6g})", t=t)


def _lattice_scores(lattice: MidpointLattice, t_n: float, h: float, score_fn):
    """Score of every midpoint estimate, one parallel round: (R, n, d)."""
    R, n, d = lattice.estimates.shape
    t_mid = (t_n - lattice.alphas * h).T.reshape(R * n)
    flat = lattice.estimates.reshape(R * n, d)
    s = np.asarray(score_fn(t_mid, flat)).reshape(R, n, d)
    _guard(s, "score", t_n)
    return s


def picard_init(x_n: np.ndarray, t_n: float, alphas: np.ndarray, h: float,
                score_fn) -> MidpointLattice:
    """Exponential-integrator initialization of all R midpoint estimates."""
    s = np.asarray(score_fn(t_n, x_n))
    _guard(s, "score", t_n)
    eah = np.exp(alphas.T[:, :, None] * h)           # (R, n, 1)
    est = eah * x_n[None] + (eah - 1.0) * s[None]
    return MidpointLattice(alphas=alphas, estimates=est, round=0)


def picard_round(lattice: MidpointLattice, x_n: np.ndarray, t_n: float,
                 h: float, score_fn) -> MidpointLattice:
    """One Jacobi round of the collocation fixed-point update.

    Uses the telescoped form of the weights: for j < i the weight factors as
    e^{alpha_i h} (e^{-(j-1) d} - e^{-j d}), so prefix sums over j cost O(R)
    array passes instead of O(R^2).
    """
    R, n, d = lattice.estimates.shape
    delta = h / R
    s = _lattice_scores(lattice, t_n, h, score_fn)
    c = np.exp(-delta * np.arange(R)) - np.exp(-delta * np.arange(1, R + 1))
    new = np.empty_like(lattice.estimates)
    prefix = np.zeros((n, d))
    a_h = lattice.alphas * h                          # (n, R)
    for i in range(R):
        eah = np.exp(a_h[:, i])[:, None]
        own = (np.exp(a_h[:, i] - i * delta)[:, None] - 1.0) * s[i]
        new[i] = eah * (x_n + prefix) + own
        prefix = prefix + c[i] * s[i]
    _guard(new, "picard", t_n)
    return MidpointLattice(alphas=lattice.alphas, estimates=new,
                           round=lattice.round + 1)


def parallel_window_close(lattice: MidpointLattice, x_n: np.ndarray, h: float,
                          t_n: float, score_fn) -> PredictorState:
    """Close the window with the R-point exponential-weighted quadrature."""
    R, n, d = lattice.estimates.shape
    delta = h / R
    s = _lattice_scores(lattice, t_n, h, score_fn)
    w = np.exp(h - lattice.alphas * h).T[:, :, None]   # (R, n, 1)
    x_new = np.exp(h) * x_n + delta * (w * s).sum(axis=0)
    _guard(x_new, "predictor", t_n - h)
    return PredictorState(x=x_new, t=t_n - h)


def run_parallel_predictor(x0: np.ndarray, t0: float, windows, score_fn,
                           rng: RngStream, work: WorkReport | None = None) -> PredictorState:
    """Run a sequence of collocation windows (one predictor invocation)."""
    work = work if work is not None else WorkReport()
    state = PredictorState(x=np.atleast_2d(np.asarray(x0, dtype=float)), t=float(t0))
    n = state.x.shape[0]
    for widx, w in enumerate(windows):
        alphas = uniform_midpoints(rng.child("alpha", widx), w.R, n)
        lattice = picard_init(state.x, state.t, alphas, w.h, score_fn)
        for _ in range(w.K):
            lattice = picard_round(lattice, state.x, state.t, w.h, score_fn)
        state = parallel_window_close(lattice, state.x, w.h, state.t, score_fn)
        # Accounting convention: K Picard rounds plus the closing round; the
        # single window-start evaluation is folded into the first of them.
        work.add(rounds=w.K + 1, evals=w.K * w.R + w.R + 1)
    return state


def parallel_corrector_round(state: UldState, R: int, K: int, h: float,
                             gamma: float, score_fn, rng: RngStream) -> UldState:
    """One outer corrector step of duration ``h`` in K parallel rounds.

    ``score_fn`` maps positions to scores at the corrector's fixed time.
    With R = 1 this reduces to a single sequential ULMC step.
    """
    n, d = state.x.shape
    delta = h / R
    blocks = [sample_uld_noise(rng.child("noise", i), delta, gamma, d, n)
              for i in range(1, R + 1)]
    zx = np.stack([b.zeta_x for b in blocks])          # (R, n, d)
    zv = np.stack([b.zeta_v for b in blocks])
    decay = np.exp(-gamma * delta)
    a1 = -np.expm1(-gamma * delta) / gamma
    bx = (delta - a1) / gamma

    X = np.broadcast_to(state.x, (R + 1, n, d)).copy()
    V = np.broadcast_to(state.v, (R + 1, n, d)).copy()
    for _ in range(K):
        prev_x, prev_v = X[:-1], V[:-1]
        s = np.asarray(score_fn(prev_x.reshape(R * n, d))).reshape(R, n, d)
        _guard(s, "corrector score", state.t_elapsed)
        new_x = prev_x + a1 * prev_v + bx * s + zx
        new_v = decay * prev_v + a1 * s + zv
        X = np.concatenate([X[:1], new_x], axis=0)
        V = np.concatenate([V[:1], new_v], axis=0)
    _guard(X[R], "corrector", state.t_elapsed + h)
    return UldState(x=X[R], v=V[R], t_elapsed=state.t_elapsed + h)


def run_parallel_corrector(x0: np.ndarray, score_fn, steps, R: int, K: int,
                           gamma: float, rng: RngStream,
                           work: WorkReport | None = None) -> np.ndarray:
    """Full parallel corrector: fresh N(0, I) velocity, then one outer step
    per entry of ``steps``; returns positions."""
    work = work if work is not None else WorkReport()
    n, d = x0.shape
    v0 = rng.child("velocity").normal(size=(n, d))
    state = UldState(x=x0, v=v0)
    for sidx, h in enumerate(steps):
        state = parallel_corrector_round(state, R, K, h, gamma, score_fn,
                                         rng.child("step", sidx))
        work.add(rounds=K, evals=K * R)
    return state.x


def run_parallel(x0: np.ndarray, schedule: Schedule, score_fn, rng: RngStream,
                 workers: int | None = None) -> tuple[np.ndarray, WorkReport]:
    """End-to-end parallel algorithm: per block, a predictor invocation over
    its windows followed by the parallel corrector at the block-end time."""
    if schedule.mode != "parallel":
        raise ValueError("run_parallel needs a parallel-mode schedule")
    workers = resolve_workers(workers)
    fn = sharded_score(score_fn, workers)
    work = WorkReport()
    tic = time.perf_counter()
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    for bidx, block in enumerate(schedule.window_blocks):
        brng = rng.child("block", bidx)
        state = run_parallel_predictor(x, block[0].t_start, block, fn,
                                       brng.child("predictor"), work)
        t_end = state.t
        fixed = lambda xx, _t=t_end: fn(_t, xx)
        x = run_parallel_corrector(state.x, fixed, schedule.corr_steps,
                                   schedule.corr_R, schedule.corr_K,
                                   schedule.gamma, brng.child("corrector"), work)
    work.wall_clock = time.perf_counter() - tic
    return x, work
