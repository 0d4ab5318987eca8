"""Time grids and parameter settings for the three sampling algorithms.

Every hidden constant from the asymptotic parameter choices is fixed to 1 by
default and exposed as a named override (``Constants``), so tests and the CLI
can sweep them without touching the formulas.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

__all__ = [
    "Constants",
    "Window",
    "Schedule",
    "make_sequential_schedule",
    "make_parallel_schedule",
    "make_logconcave_schedule",
]


@dataclass(frozen=True)
class Constants:
    """Multiplicative overrides for every Theta(.) constant (default 1)."""

    T: float = 1.0          # start time
    delta: float = 1.0      # end time
    h_pred: float = 1.0     # sequential predictor step
    h_corr: float = 1.0     # corrector step
    T_corr: float = 1.0     # corrector duration
    gamma: float = 1.0      # friction
    h_win: float = 1.0      # parallel window length
    R: float = 1.0          # parallel predictor midpoints
    K: float = 1.0          # parallel predictor Picard depth
    R_corr: float = 1.0     # parallel corrector midpoints
    h_rand: float = 1.0     # log-concave randomized-midpoint step
    N_rand: float = 1.0     # log-concave step count

    @classmethod
    def from_overrides(cls, overrides: dict | None) -> "Constants":
        if not overrides:
            return cls()
        valid = {f for f in cls.__dataclass_fields__}
        bad = set(overrides) - valid
        if bad:
            raise ValueError(f"unknown constant overrides: {sorted(bad)}")
        return cls(**overrides)


class Window(NamedTuple):
    """One parallel predictor window: start time, length, midpoints, depth."""

    t_start: float
    h: float
    R: int
    K: int


@dataclass(frozen=True)
class Schedule:
    """Everything a run needs: grid, step sizes, depths and durations.

    ``mode`` selects which optional fields are populated:

    * ``sequential``: ``block_steps`` (per predictor-corrector block) and
      ``tail_steps`` (the geometric final phase), plus corrector settings.
    * ``parallel``: ``window_blocks`` (windows grouped per corrector
      insertion) and the parallel corrector lattice (``corr_R``/``corr_K``).
    * ``logconcave``: ``h_rand``/``N_rand``/``u`` plus corrector settings.
    """

    mode: str
    T: float
    delta: float
    gamma: float
    T_corr: float
    h_corr: float
    # sequential
    h_pred: float | None = None
    N0: int | None = None
    block_steps: tuple = ()
    tail_steps: tuple = ()
    # parallel
    beta: float | None = None
    window_blocks: tuple = ()
    corr_R: int | None = None
    corr_K: int | None = None
    corr_steps: tuple = ()
    # log-concave
    h_rand: float | None = None
    N_rand: int | None = None
    u: float | None = None
    # provenance
    L: float | None = None
    d: int | None = None
    eps: float | None = None
    m2: float | None = None
    constants: Constants = field(default_factory=Constants)

    # -- grids ---------------------------------------------------------------

    def sequential_grid(self) -> list:
        """All forward-time grid points from T down to delta (sequential mode)."""
        ts = [self.T]
        t = self.T
        for steps in self.block_steps:
            for h in steps:
                t -= h
                ts.append(t)
        if self.tail_steps:
            # Build the tail from the end so the last point is delta exactly.
            rev = [self.delta]
            for h in reversed(self.tail_steps):
                rev.append(rev[-1] + h)
            ts.extend(reversed(rev[:-1]))
        return ts

    def windows(self) -> list:
        return [w for blk in self.window_blocks for w in blk]

    def parallel_rounds(self) -> int:
        """Parallel-round budget: sum(K_n + 1) over windows plus corrector rounds."""
        pred = sum(w.K + 1 for blk in self.window_blocks for w in blk)
        corr = len(self.window_blocks) * len(self.corr_steps) * (self.corr_K or 0)
        return pred + corr

    def total_predictor_steps(self) -> int:
        if self.mode == "sequential":
            return sum(len(s) for s in self.block_steps) + len(self.tail_steps)
        if self.mode == "parallel":
            return len(self.windows())
        return self.N_rand or 0

    # -- serialization ---------------------------------------------------------

    def to_json(self) -> str:
        payload = asdict(self)
        payload["constants"] = asdict(self.constants)
        payload["window_blocks"] = [[list(w) for w in blk]
                                    for blk in self.window_blocks]
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        payload = json.loads(text)
        payload["constants"] = Constants(**payload["constants"])
        payload["window_blocks"] = tuple(
            tuple(Window(*w) for w in blk) for blk in payload["window_blocks"])
        payload["block_steps"] = tuple(tuple(s) for s in payload["block_steps"])
        payload["tail_steps"] = tuple(payload["tail_steps"])
        payload["corr_steps"] = tuple(payload["corr_steps"])
        return cls(**payload)


def _warn_range(L: float, eps: float):
    if eps >= 1 or L < 1:
        warnings.warn("parameter out of theorem range (need L >= 1, 0 < eps < 1); "
                      "run proceeds", RuntimeWarning, stacklevel=3)


def _split_into_steps(total: float, h: float) -> tuple:
    """Steps of size h covering ``total`` exactly, last one shortened."""
    if total <= 0:
        return ()
    n = max(1, math.ceil(total / h - 1e-12))
    last = total - (n - 1) * h
    return tuple([h] * (n - 1) + [last])


def _corrector_steps(T_corr: float, h_corr: float) -> tuple:
    """round(T_corr/h_corr) steps, the final one adjusted to land on T_corr."""
    n = max(1, round(T_corr / h_corr))
    last = T_corr - (n - 1) * h_corr
    return tuple([h_corr] * (n - 1) + [last])


def make_sequential_schedule(L: float, d: int, eps: float, m2: float,
                             overrides: dict | None = None) -> Schedule:
    """Schedule for the sequential predictor-corrector algorithm.

    Instantiates, with unit constants:
    ``T = log((d v m2^2)/eps^2)``, ``delta = eps^2/(L^2 (d v m2^2))``,
    ``h_pred = min(eps^(1/2)/(d^(1/3) L^(3/2)), eps^(2/3)/(d^(5/12) L^(5/3)))
    / max(log m2, 1)``, ``T_corr = 1/(sqrt(L) d^(1/18))``,
    ``h_corr = eps/(d^(17/36) L^(3/2) max(log m2, 1))`` and ``gamma = sqrt(L)``.

    The predictor-corrector blocks each cover reverse time 1/L (the final
    block shortened), after which a geometric tail ``h_pred/2, h_pred/4, ...``
    descends to ``delta`` exactly.
    """
    _warn_range(L, eps)
    c = Constants.from_overrides(overrides)
    scale = max(d, m2 * m2)
    log_m2 = max(math.log(max(m2, 1e-12)), 1.0)  # clamped below by 1

    T = c.T * math.log(scale / eps ** 2)
    delta = c.delta * eps ** 2 / (L ** 2 * scale)
    h_pred = c.h_pred * min(math.sqrt(eps) / (d ** (1 / 3) * L ** 1.5),
                            eps ** (2 / 3) / (d ** (5 / 12) * L ** (5 / 3))) / log_m2
    T_corr = c.T_corr / (math.sqrt(L) * d ** (1 / 18))
    h_corr = c.h_corr * eps / (d ** (17 / 36) * L ** 1.5 * log_m2)
    gamma = c.gamma * math.sqrt(L)
    if T <= delta:
        raise ValueError("degenerate schedule: T <= delta")

    # Geometric tail landing exactly on delta; it defines its own start time.
    n_tail = max(1, math.ceil(math.log2(max(h_pred / delta, 2.0))))
    tail = tuple(h_pred / 2 ** (k + 1) for k in range(n_tail))
    t_tail = delta + sum(tail)
    if t_tail >= T:  # tiny horizons: walk the tail down from T instead
        tail_list = []
        t = T
        k = 1
        while True:
            s = h_pred / 2 ** k
            if t - s <= delta or s <= 0:
                tail_list.append(t - delta)
                break
            tail_list.append(s)
            t -= s
            k += 1
        return Schedule(mode="sequential", T=T, delta=delta, gamma=gamma,
                        T_corr=T_corr, h_corr=h_corr, h_pred=h_pred, N0=0,
                        block_steps=(), tail_steps=tuple(tail_list),
                        L=L, d=d, eps=eps, m2=m2, constants=c)

    block_time = T - t_tail
    n_full = math.floor(block_time * L + 1e-12)
    rem = block_time - n_full / L
    blocks = [_split_into_steps(1.0 / L, h_pred) for _ in range(n_full)]
    if rem > 1e-12:
        blocks.append(_split_into_steps(rem, h_pred))
    return Schedule(mode="sequential", T=T, delta=delta, gamma=gamma,
                    T_corr=T_corr, h_corr=h_corr, h_pred=h_pred,
                    N0=len(blocks), block_steps=tuple(blocks), tail_steps=tail,
                    L=L, d=d, eps=eps, m2=m2, constants=c)


def make_parallel_schedule(L: float, d: int, eps: float, m2: float, beta: float,
                           overrides: dict | None = None) -> Schedule:
    """Schedule for the parallel predictor-corrector algorithm.

    Windows follow ``h_n = min(1/(4L), t_n/2, t_n - delta)`` and tile the
    reverse horizon exactly.  Per window, ``R_n = ceil(h_n beta L sqrt(d)/eps)``
    midpoints are refined by ``K_n = ceil(log(beta sqrt(d)/eps))`` Picard
    rounds.  The parallel corrector uses step ``1/sqrt(8L)``,
    ``R = ceil(beta sqrt(d)/eps)`` midpoints and ``K = ceil(4 log R)`` rounds;
    its default duration is a single step (within the 1/sqrt(L) cap).
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    _warn_range(L, eps)
    c = Constants.from_overrides(overrides)
    scale = max(d, m2 * m2)
    T = c.T * math.log(scale / eps ** 2)
    delta = c.delta * eps ** 2 / (L ** 2 * scale)
    gamma = c.gamma * math.sqrt(L)
    if T <= delta:
        raise ValueError("degenerate schedule: T <= delta")

    K_pred = max(1, math.ceil(c.K * math.log(beta * math.sqrt(d) / eps)))
    h_cap = c.h_win / (4.0 * L)

    blocks = []
    t = T
    tol = 1e-12 * max(T, 1.0)
    while t - delta > tol:
        block_end = max(delta, t - 1.0 / L)
        wins = []
        while t - block_end > tol:
            h = min(h_cap, t / 2.0, t - delta, t - block_end)
            R = max(1, math.ceil(c.R * h * beta * L * math.sqrt(d) / eps))
            wins.append(Window(t_start=t, h=h, R=R, K=K_pred))
            t = delta if h >= t - delta - tol else t - h
        blocks.append(tuple(wins))

    h_pc = c.h_corr / math.sqrt(8.0 * L)
    T_corr = c.T_corr / math.sqrt(8.0 * L)
    corr_steps = _corrector_steps(T_corr, h_pc)
    corr_R = max(1, math.ceil(c.R_corr * beta * math.sqrt(d) / eps))
    corr_K = max(1, math.ceil(4.0 * math.log(corr_R))) if corr_R > 1 else 1
    return Schedule(mode="parallel", T=T, delta=delta, gamma=gamma,
                    T_corr=T_corr, h_corr=h_pc, beta=beta,
                    window_blocks=tuple(blocks), corr_R=corr_R, corr_K=corr_K,
                    corr_steps=corr_steps,
                    L=L, d=d, eps=eps, m2=m2, constants=c)


def make_logconcave_schedule(m: float, L: float, d: int, eps: float,
                             overrides: dict | None = None) -> Schedule:
    """Schedule for the log-concave sampler (randomized midpoint + corrector).

    ``h_rand = eps^(2/3)/(d^(5/12) kappa^(1/3)) * log^(-1/3)(d kappa / eps)``,
    ``N_rand = ceil((4 kappa / h_rand) log(20 d kappa / eps^2))``,
    ``h_corr = eps/(d^(17/36) sqrt(L))``, ``T_corr = 1/(sqrt(L) d^(1/18))``,
    with ``u = 1/L`` and ``gamma = sqrt(L)`` for the corrector.
    """
    if not 0 < m <= L:
        raise ValueError("need 0 < m <= L")
    c = Constants.from_overrides(overrides)
    kappa = L / m
    log_term = max(math.log(d * kappa / eps), 1e-2)
    h_rand = c.h_rand * eps ** (2 / 3) / (d ** (5 / 12) * kappa ** (1 / 3)
                                          * log_term ** (1 / 3))
    N_rand = max(1, math.ceil(c.N_rand * (4.0 * kappa / h_rand)
                              * math.log(20.0 * d * kappa / eps ** 2)))
    T_corr = c.T_corr / (math.sqrt(L) * d ** (1 / 18))
    h_corr = c.h_corr * eps / (d ** (17 / 36) * math.sqrt(L))
    gamma = c.gamma * math.sqrt(L)
    return Schedule(mode="logconcave", T=0.0, delta=0.0, gamma=gamma,
                    T_corr=T_corr, h_corr=h_corr, h_rand=h_rand, N_rand=N_rand,
                    u=1.0 / L, L=L, d=d, eps=eps, m2=None, constants=c)
