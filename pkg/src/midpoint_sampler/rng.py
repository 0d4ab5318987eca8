"""Deterministic, hierarchically keyed randomness.

Every source of randomness in the toolkit is an :class:`RngStream`: a
(seed, path) key backed by a counter-based Philox generator.  Distinct
paths give statistically independent streams, and the same key always
reproduces the same output sequence, so results are reproducible and
independent of worker scheduling.

This module also builds the correlated Gaussian blocks needed by the
exponential-integrator discretizations of underdamped Langevin dynamics:

* :class:`UldNoiseBlock` -- the (position, velocity) Brownian contribution
  over one step of the underdamped process with friction ``gamma``,
  including the ``sqrt(2*gamma)`` diffusion factor.
* :class:`ShenLeeNoiseBlock` -- the joint triple of Ito integrals used by
  the randomized-midpoint underdamped step (friction hard-coded to 2,
  unit diffusion; the caller applies the ``sqrt(u)`` scaling).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNoiseError

__all__ = [
    "RngStream",
    "UldNoiseBlock",
    "ShenLeeNoiseBlock",
    "uniform_midpoint",
    "uniform_midpoints",
    "uld_noise_covariance",
    "sample_uld_noise",
    "shenlee_noise_covariance",
    "sample_shenlee_noise",
]


def _coerce_path_part(part) -> int:
    """Map a path component to a non-negative integer key word."""
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"path components must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode()).digest()
        return int.from_bytes(digest[:8], "little")
    if isinstance(part, float):
        # Key on the exact bit pattern so distinct times get distinct streams.
        return int(np.float64(part).view(np.uint64))
    raise TypeError(f"unsupported path component {part!r}")


class RngStream:
    """A keyed randomness source.

    The key is ``(seed, path)`` where ``path`` is a tuple of integers (or
    strings/floats, which are hashed).  ``child`` derives sub-streams
    purely; drawing from ``gen`` advances this stream's own state, so a
    stream should be held by exactly one consumer at a time.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(_coerce_path_part(p) for p in path)
        self._gen = None

    def child(self, *parts) -> "RngStream":
        """Derive an independent sub-stream (pure: does not touch state)."""
        return RngStream(self.seed, self.path + parts)

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def uniform(self, size=None) -> np.ndarray:
        return self.gen.uniform(size=size)

    def normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"


def uniform_midpoint(rng: RngStream, i: int, R: int) -> float:
    """Draw one midpoint fraction uniformly from ``[(i-1)/R, i/R]``.

    With ``R = 1`` this is the plain uniform draw on ``[0, 1]`` used by the
    sequential predictor.
    """
    if not 1 <= i <= R:
        raise ValueError(f"need 1 <= i <= R, got i={i}, R={R}")
    return (i - 1 + rng.uniform()) / R


def uniform_midpoints(rng: RngStream, R: int, n: int) -> np.ndarray:
    """Stratified midpoint fractions, shape ``(n, R)``.

    Column ``i`` is uniform on ``[i/R, (i+1)/R)``; rows are independent
    particles, so columns are strictly increasing within each row.
    """
    u = rng.uniform(size=(n, R))
    return (np.arange(R) + u) / R


# ---------------------------------------------------------------------------
# Underdamped Langevin noise (friction gamma, diffusion sqrt(2*gamma))
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UldNoiseBlock:
    """Brownian contribution to one underdamped step, pre-scaled.

    ``zeta_v = sqrt(2*gamma) * int_0^delta exp(-gamma*(delta-s)) dB_s`` and
    ``zeta_x = sqrt(2*gamma) * int_0^delta (1 - exp(-gamma*(delta-s)))/gamma dB_s``
    per coordinate; the integrator adds them directly.
    """

    zeta_x: np.ndarray
    zeta_v: np.ndarray
    step: float
    gamma: float


def uld_noise_covariance(delta: float, gamma: float) -> tuple[float, float, float]:
    """Per-coordinate ``(var_x, var_v, cov_xv)`` of an :class:`UldNoiseBlock`."""
    if delta <= 0 or gamma <= 0:
        raise ValueError("delta and gamma must be positive")
    e1 = -np.expm1(-gamma * delta)       # 1 - exp(-gamma*delta)
    e2 = -np.expm1(-2 * gamma * delta)   # 1 - exp(-2*gamma*delta)
    var_v = e2
    cov_xv = (2.0 / gamma) * e1 - (1.0 / gamma) * e2
    var_x = (2.0 / gamma) * (delta - (2.0 / gamma) * e1 + (0.5 / gamma) * e2)
    return float(var_x), float(var_v), float(cov_xv)


def sample_uld_noise(rng: RngStream, delta: float, gamma: float, d: int,
                     n: int = 1) -> UldNoiseBlock:
    """Draw ``n`` independent d-dimensional correlated (zeta_x, zeta_v) pairs."""
    var_x, var_v, cov_xv = uld_noise_covariance(delta, gamma)
    # 2x2 Cholesky with the velocity component first.
    l_vv = np.sqrt(var_v)
    l_xv = cov_xv / l_vv
    resid = var_x - l_xv * l_xv
    if resid < -1e-12 * var_x:
        raise DegenerateNoiseError(
            f"degenerate noise covariance at delta={delta}, gamma={gamma}")
    l_xx = np.sqrt(max(resid, 0.0))
    z1 = rng.normal(size=(n, d))
    z2 = rng.normal(size=(n, d))
    zeta_v = l_vv * z1
    zeta_x = l_xv * z1 + l_xx * z2
    return UldNoiseBlock(zeta_x=zeta_x, zeta_v=zeta_v, step=float(delta),
                         gamma=float(gamma))


# ---------------------------------------------------------------------------
# Randomized-midpoint underdamped noise (friction 2, unit diffusion)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShenLeeNoiseBlock:
    """Joint Gaussian triple of Ito integrals for one randomized-midpoint step.

    Conditioned on the midpoint fraction ``alpha`` (with ``a = alpha*h``),
    per coordinate and for a shared standard Brownian motion B:

    ``W1 = int_0^a (1 - exp(-2*(a-s))) dB_s``
    ``W2 = int_0^h (1 - exp(-2*(h-s))) dB_s``
    ``W3 = int_0^h exp(-2*(h-s)) dB_s``

    The step scalings (``sqrt(u)``, ``2*sqrt(u)``) are applied by the caller.
    ``alpha`` may be a scalar or a per-particle array of shape ``(n,)``.
    """

    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    alpha: np.ndarray
    h: float


def shenlee_noise_covariance(alpha, h: float):
    """Per-coordinate 3x3 covariance entries of the (W1, W2, W3) triple.

    Returns ``(c11, c22, c33, c12, c13, c23)``, each broadcast against
    ``alpha`` (so per-particle midpoints are handled vectorially).
    """
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0) or np.any(alpha > 1) or h <= 0:
        raise ValueError("need 0 <= alpha <= 1 and h > 0")
    a = alpha * h
    e1a = -np.expm1(-2.0 * a)        # 1 - e^{-2a}
    e2a = -np.expm1(-4.0 * a)        # 1 - e^{-4a}
    e1h = -np.expm1(-2.0 * h)
    e2h = -np.expm1(-4.0 * h)
    # exp(-2(h-a)) - exp(-2h) and exp(-2(h-a)) - exp(-2(h+a))
    gap1 = np.exp(-2.0 * (h - a)) - np.exp(-2.0 * h)
    gap2 = np.exp(-2.0 * (h - a)) - np.exp(-2.0 * (h + a))
    c11 = a - e1a + 0.25 * e2a
    c22 = h - e1h + 0.25 * e2h      # alpha-free
    c33 = 0.25 * e2h                # alpha-free
    c12 = a - 0.5 * e1a - 0.5 * gap1 + 0.25 * gap2
    c13 = 0.5 * gap1 - 0.25 * gap2
    c23 = 0.5 * e1h - 0.25 * e2h    # alpha-free
    return c11, c22, c33, c12, c13, c23


def _exact_variance_bracket(x):
    """int_0^x (1 - e^{-2u})^2 du = x - (1-e^{-2x}) + (1-e^{-4x})/4, stably.

    The direct form loses everything to cancellation for small x (the result
    is ~(4/3)x^3 from O(x) terms), so switch to the series there.
    """
    x = np.asarray(x, dtype=float)
    direct = x + np.expm1(-2.0 * x) - 0.25 * np.expm1(-4.0 * x)
    x2 = x * x
    series = x2 * x * (4.0 / 3.0 - 2.0 * x + (28.0 / 15.0) * x2
                       - (4.0 / 3.0) * x2 * x)
    return np.where(x < 0.01, series, direct)


def _shenlee_increment_cov(alpha: np.ndarray, h: float):
    """Covariance entries of (W1, D, W3) with D = W2 - W1.

    Writing a = alpha*h and g = h - a, all entries reduce (after doing the
    cancellations symbolically) to sums of same-sign terms, so this
    parameterization stays accurate where the raw (W1, W2, W3) matrix is
    near-singular (alpha -> 1 makes W2 -> W1):

    ``var(W1)    = a - E1a + E2a/4``
    ``cov(W1,D)  = E1g (E1a/2 - E2a/4)``
    ``var(D)     = E1g^2 E2a/4 + (g - E1g + E2g/4)``
    ``cov(W1,W3) = e^{-2g} (E1a/2 - E2a/4)``
    ``cov(D,W3)  = E1g e^{-2g} E2a/4 + (E1g/2 - E2g/4)``
    ``var(W3)    = E2h/4``

    with ``Ekx = 1 - exp(-2k x)`` evaluated via ``expm1``.
    """
    a = alpha * h
    g = h - a
    e1a = -np.expm1(-2.0 * a)
    e2a = -np.expm1(-4.0 * a)
    e1g = -np.expm1(-2.0 * g)
    e2g = -np.expm1(-4.0 * g)
    e2h = -np.expm1(-4.0 * h)
    half_a = 0.5 * e1a - 0.25 * e2a          # int_0^a (1-e^{-2u}) e^{-2u} du
    var_w1 = _exact_variance_bracket(a)
    cov_w1_d = e1g * half_a
    var_d = e1g * e1g * 0.25 * e2a + _exact_variance_bracket(g)
    cov_w1_w3 = np.exp(-2.0 * g) * half_a
    cov_d_w3 = e1g * np.exp(-2.0 * g) * 0.25 * e2a + (0.5 * e1g - 0.25 * e2g)
    var_w3 = np.broadcast_to(np.asarray(0.25 * e2h), np.shape(a))
    return var_w1, cov_w1_d, var_d, cov_w1_w3, cov_d_w3, var_w3


def sample_shenlee_noise(rng: RngStream, alpha, h: float, u: float, d: int,
                         n: int | None = None) -> ShenLeeNoiseBlock:
    """Draw the correlated (W1, W2, W3) triple for midpoint fractions ``alpha``.

    ``u`` is validated (it scales the step, not the integrals themselves).
    When ``alpha`` has shape ``(n,)`` the result arrays have shape ``(n, d)``
    with row ``i`` using that particle's own covariance factor.  Sampling
    goes through the well-conditioned (W1, W2 - W1, W3) parameterization.
    """
    if u <= 0:
        raise ValueError("u must be positive")
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any(alpha < 0) or np.any(alpha > 1) or h <= 0:
        raise ValueError("need 0 <= alpha <= 1 and h > 0")
    if n is None:
        n = alpha.shape[0]
    if alpha.shape[0] == 1 and n > 1:
        alpha = np.full(n, alpha[0])
    c11, c1d, cdd, c13, cd3, c33 = _shenlee_increment_cov(alpha, h)

    # Negative pivot residuals up to rounding noise on the scale of the full
    # step variance are clamped; anything larger is a real degeneracy.
    tiny = 1e-300
    tol = 1e-8 * float(np.max(c33))
    l11 = np.sqrt(np.maximum(c11, 0.0))
    safe1 = l11 > tiny
    inv_l11 = np.where(safe1, 1.0 / np.where(safe1, l11, 1.0), 0.0)
    l21 = c1d * inv_l11
    l31 = c13 * inv_l11
    r22 = cdd - l21 * l21
    if np.any(r22 < -tol):
        raise DegenerateNoiseError("degenerate noise covariance (increment block)")
    l22 = np.sqrt(np.maximum(r22, 0.0))
    safe2 = l22 > tiny
    inv_l22 = np.where(safe2, 1.0 / np.where(safe2, l22, 1.0), 0.0)
    l32 = (cd3 - l31 * l21) * inv_l22
    r33 = c33 - l31 * l31 - l32 * l32
    if np.any(r33 < -tol):
        raise DegenerateNoiseError("degenerate noise covariance (W3 block)")
    l33 = np.sqrt(np.maximum(r33, 0.0))

    z1 = rng.normal(size=(n, d))
    z2 = rng.normal(size=(n, d))
    z3 = rng.normal(size=(n, d))
    col = lambda v: v[:, None]
    w1 = col(l11) * z1
    w2 = w1 + col(l21) * z1 + col(l22) * z2          # W2 = W1 + D
    w3 = col(l31) * z1 + col(l32) * z2 + col(l33) * z3
    return ShenLeeNoiseBlock(w1=w1, w2=w2, w3=w3, alpha=alpha, h=float(h))
