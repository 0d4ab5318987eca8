"""Deterministic data-parallel evaluation over particle shards.

Particles are independent, so any map over the batch axis can be sharded
across a thread pool.  Results are concatenated in shard order and every
elementwise operation is unchanged by slicing, so outputs are bit-identical
for any worker count -- the property the determinism suite checks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["resolve_workers", "shard_map", "sharded_score"]

ENV_WORKERS = "MIDPOINT_SAMPLER_THREADS"


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else the MIDPOINT_SAMPLER_THREADS env var, else 1."""
    if workers is not None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        return int(workers)
    env = os.environ.get(ENV_WORKERS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _shard_bounds(n: int, workers: int) -> list[tuple[int, int]]:
    k = min(workers, n) or 1
    base, extra = divmod(n, k)
    bounds, lo = [], 0
    for i in range(k):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def shard_map(fn, n: int, workers: int):
    """Evaluate ``fn(lo, hi) -> array`` over particle shards and concatenate."""
    if workers <= 1 or n < 2 * workers:
        return fn(0, n)
    bounds = _shard_bounds(n, workers)
    with ThreadPoolExecutor(max_workers=len(bounds)) as ex:
        parts = list(ex.map(lambda b: fn(*b), bounds))
    return np.concatenate(parts, axis=0)


def sharded_score(score_fn, workers: int):
    """Wrap a batched score function so it evaluates particle shards in parallel."""
    if workers <= 1:
        return score_fn

    def wrapped(t, x):
        x = np.asarray(x)
        t_arr = np.asarray(t)

        def piece(lo, hi):
            t_piece = t_arr[lo:hi] if t_arr.ndim == 1 else t
            return score_fn(t_piece, x[lo:hi])

        return shard_map(piece, x.shape[0], workers)

    return wrapped
