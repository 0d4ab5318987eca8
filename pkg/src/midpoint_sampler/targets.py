"""Analytic target distributions with exact scores along the OU forward process.

A :class:`TargetModel` is a (mixture of) Gaussian(s); its noised marginal at
forward time ``t`` follows the closed form ``mean_t = exp(-t)*mean_0`` and
``cov_t = exp(-2t)*cov_0 + (1 - exp(-2t))*I``, so log-densities, scores and
exact samples are available at every ``t``.  These serve as ground truth for
all sampler tests and metrics.

Scores accept per-particle times (shape ``(n,)``) as well as scalars: per
component we precompute an eigendecomposition of the base covariance, so the
time dependence reduces to elementwise operations in the eigenbasis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError
from .rng import RngStream

__all__ = [
    "TargetModel",
    "NoisedMarginal",
    "isotropic_gaussian",
    "anisotropic_gaussian",
    "gaussian_mixture",
    "quadratic_logconcave",
    "score",
    "log_density",
    "sample_exact",
    "corrupt_score",
    "CorruptedScore",
    "ExactScore",
    "target_from_config",
    "target_to_config",
]

KINDS = ("IsotropicGaussian", "AnisotropicGaussian", "GaussianMixture",
         "QuadraticLogConcave")

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TargetModel:
    """A Gaussian or Gaussian-mixture data distribution.

    Attributes:
        kind: one of ``KINDS``.
        dim: dimension d.
        means: component means, shape ``(K, d)``.
        covs: component covariances, shape ``(K, d, d)``, each symmetric PD.
        weights: mixture weights, shape ``(K,)``, summing to 1.
        m: strong-convexity constant of the potential (QuadraticLogConcave).
        L: smoothness constant of the potential (QuadraticLogConcave).
    """

    kind: str
    dim: int
    means: np.ndarray
    covs: np.ndarray
    weights: np.ndarray
    m: float | None = None
    L: float | None = None
    # Per-component eigendecompositions, filled in __post_init__.
    _eigvals: np.ndarray = field(default=None, repr=False, compare=False)
    _eigvecs: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "weights", weights)

        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        K, d = means.shape
        if covs.shape != (K, d, d) or weights.shape != (K,):
            raise ValueError("inconsistent component shapes")
        if d != self.dim:
            raise ValueError(f"dim mismatch: dim={self.dim}, means have d={d}")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must sum to 1 within 1e-12")
        if np.any(weights < 0):
            raise ValueError("mixture weights must be non-negative")

        eigvals = np.empty((K, d))
        eigvecs = np.empty((K, d, d))
        for k in range(K):
            if not np.allclose(covs[k], covs[k].T, atol=1e-12):
                raise ValueError(f"covariance {k} is not symmetric")
            lam, vec = np.linalg.eigh(covs[k])
            if lam.min() <= 0:
                raise ValueError(f"covariance {k} is not positive definite")
            eigvals[k], eigvecs[k] = lam, vec
        object.__setattr__(self, "_eigvals", eigvals)
        object.__setattr__(self, "_eigvecs", eigvecs)

        if self.kind == "QuadraticLogConcave":
            if K != 1:
                raise ValueError("QuadraticLogConcave must be a single Gaussian")
            m_eff = 1.0 / eigvals[0].max()
            L_eff = 1.0 / eigvals[0].min()
            m = self.m if self.m is not None else m_eff
            L = self.L if self.L is not None else L_eff
            if not 0 < m <= L:
                raise ValueError("need 0 < m <= L")
            # The declared constants must actually bracket the potential Hessian.
            if m > m_eff * (1 + 1e-9) or L < L_eff * (1 - 1e-9):
                raise ValueError("declared (m, L) do not bracket the Hessian spectrum")
            object.__setattr__(self, "m", float(m))
            object.__setattr__(self, "L", float(L))

    # -- summary quantities -------------------------------------------------

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def second_moment(self) -> float:
        """E||x||^2 under the data distribution, in closed form."""
        per = (self.means ** 2).sum(axis=1) + self._eigvals.sum(axis=1)
        return float(np.dot(self.weights, per))

    @property
    def m2(self) -> float:
        """sqrt(E||x||^2), the second-moment scale used by schedules."""
        return math.sqrt(self.second_moment())

    def lipschitz_bound(self) -> float:
        """An upper bound on sup_t ||Hess log q_t||.

        For a single Gaussian this is 1/lambda_min (attained at t=0).  For a
        mixture we add the standard separation term coming from the
        responsibility covariance.
        """
        lam_min = self._eigvals.min()
        bound = 1.0 / lam_min
        if self.n_components > 1:
            diffs = self.means[:, None, :] - self.means[None, :, :]
            sep = np.sqrt((diffs ** 2).sum(axis=-1)).max() / 2.0
            bound += (sep / lam_min) ** 2
        return float(max(bound, 1.0))

    def mode(self) -> np.ndarray:
        """Root of the score (QuadraticLogConcave only)."""
        if self.kind != "QuadraticLogConcave":
            raise ValueError("mode is only available for QuadraticLogConcave")
        return self.means[0].copy()

    def noised(self, t: float) -> "NoisedMarginal":
        return NoisedMarginal(self, t)


# -- factories ---------------------------------------------------------------

def isotropic_gaussian(dim: int, var: float = 1.0, mean=None) -> TargetModel:
    mu = np.zeros(dim) if mean is None else np.asarray(mean, dtype=float)
    cov = var * np.eye(dim)
    return TargetModel("IsotropicGaussian", dim, mu[None], cov[None], np.ones(1))


def anisotropic_gaussian(cov, mean=None) -> TargetModel:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    d = cov.shape[0]
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    return TargetModel("AnisotropicGaussian", d, mu[None], cov[None], np.ones(1))


def gaussian_mixture(means, covs, weights) -> TargetModel:
    means = np.atleast_2d(np.asarray(means, dtype=float))
    K, d = means.shape
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 1:  # per-component isotropic variances
        covs = np.stack([v * np.eye(d) for v in covs])
    elif covs.ndim == 2 and covs.shape == (K, d):  # per-component diagonals
        covs = np.stack([np.diag(v) for v in covs])
    return TargetModel("GaussianMixture", d, means, covs,
                       np.asarray(weights, dtype=float))


def quadratic_logconcave(cov, mean=None, m: float | None = None,
                         L: float | None = None) -> TargetModel:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    d = cov.shape[0]
    mu = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
    return TargetModel("QuadraticLogConcave", d, mu[None], cov[None],
                       np.ones(1), m=m, L=L)


# -- noised-marginal computations ---------------------------------------------

def _check_state(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidStateError("invalid state: non-finite entries")
    return np.atleast_2d(x)


def _time_factors(t):
    """Broadcastable (e^-t, e^-2t) columns for scalar or per-particle t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("forward time must be non-negative")
    if t.ndim == 0:
        t = np.full(1, float(t))
    et = np.exp(-t)[:, None]
    return et, et * et


def _component_stats(model: TargetModel, x: np.ndarray, t):
    """Per-component log-densities and eigen-space whitened residuals.

    Returns ``(logp, ys, inv_lams)`` with shapes ``(K, n)``, ``(K, n, d)``,
    ``(K, n, d)``; ``ys[k]`` is the residual rotated into component k's
    eigenbasis and ``inv_lams[k]`` the per-particle inverse noised eigenvalues.
    """
    n, d = x.shape
    et, e2t = _time_factors(t)
    K = model.n_components
    logp = np.empty((K, n))
    ys = np.empty((K, n, d))
    inv_lams = np.empty((K, n, d))
    logw = np.log(model.weights)
    for k in range(K):
        lam_t = e2t * model._eigvals[k] + (1.0 - e2t)      # (n or 1, d)
        resid = x - et * model.means[k]
        y = resid @ model._eigvecs[k]                      # rotate to eigenbasis
        inv = 1.0 / lam_t
        ys[k] = y
        inv_lams[k] = inv
        logp[k] = (-0.5 * np.sum(y * y * inv, axis=1)
                   - 0.5 * np.sum(np.log(lam_t), axis=1)
                   - 0.5 * d * _LOG_2PI + logw[k])
    return logp, ys, inv_lams


def log_density(model: TargetModel, t, x) -> np.ndarray:
    """log q_t(x) for a batch x of shape (n, d); t scalar or shape (n,)."""
    x = _check_state(x)
    logp, _, _ = _component_stats(model, x, t)
    mx = logp.max(axis=0)
    return mx + np.log(np.exp(logp - mx).sum(axis=0))


def score(model: TargetModel, t, x) -> np.ndarray:
    """grad log q_t(x): responsibility-weighted Gaussian scores, via log-sum-exp."""
    x = _check_state(x)
    if model.n_components == 1:
        # single Gaussian: responsibilities are 1, skip the log-density pass
        et, e2t = _time_factors(t)
        lam_t = e2t * model._eigvals[0] + (1.0 - e2t)
        y = (x - et * model.means[0]) @ model._eigvecs[0]
        return -(y / lam_t) @ model._eigvecs[0].T
    logp, ys, inv_lams = _component_stats(model, x, t)
    mx = logp.max(axis=0)
    r = np.exp(logp - mx)
    r /= r.sum(axis=0)                                     # (K, n)
    out = np.zeros_like(x)
    for k in range(model.n_components):
        comp = -(ys[k] * inv_lams[k]) @ model._eigvecs[k].T
        out += r[k][:, None] * comp
    return out


def sample_exact(model: TargetModel, t: float, n: int, rng: RngStream) -> np.ndarray:
    """n i.i.d. exact samples from q_t, deterministic given the rng key."""
    if n < 1:
        raise ValueError("n must be >= 1")
    et = math.exp(-t)
    e2t = et * et
    gen = rng.gen
    if model.n_components == 1:
        comps = np.zeros(n, dtype=int)
    else:
        comps = gen.choice(model.n_components, size=n, p=model.weights)
    z = gen.standard_normal((n, model.dim))
    out = np.empty((n, model.dim))
    for k in range(model.n_components):
        idx = comps == k
        if not idx.any():
            continue
        lam_t = e2t * model._eigvals[k] + (1.0 - e2t)
        out[idx] = (et * model.means[k]
                    + (z[idx] * np.sqrt(lam_t)) @ model._eigvecs[k].T)
    return out


class NoisedMarginal:
    """The law q_t of the OU forward process at a fixed time ``t``."""

    def __init__(self, base: TargetModel, t: float):
        if t < 0:
            raise ValueError("forward time must be non-negative")
        self.base = base
        self.t = float(t)

    @property
    def dim(self) -> int:
        return self.base.dim

    def component_params(self):
        """Noised (means, covs, weights) at time t."""
        et = math.exp(-self.t)
        e2t = et * et
        means = et * self.base.means
        covs = e2t * self.base.covs + (1.0 - e2t) * np.eye(self.dim)
        return means, covs, self.base.weights

    @property
    def is_gaussian(self) -> bool:
        return self.base.n_components == 1

    def mean(self) -> np.ndarray:
        means, _, w = self.component_params()
        return w @ means

    def cov(self) -> np.ndarray:
        means, covs, w = self.component_params()
        mu = w @ means
        out = np.einsum("k,kij->ij", w, covs)
        cent = means - mu
        out += np.einsum("k,ki,kj->ij", w, cent, cent)
        return out

    def log_density(self, x) -> np.ndarray:
        return log_density(self.base, self.t, x)

    def score(self, x) -> np.ndarray:
        return score(self.base, self.t, x)

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        return sample_exact(self.base, self.t, n, rng)

    def projected_1d(self, direction: np.ndarray):
        """1-D mixture parameters of <direction, x>: (means, vars, weights)."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        means, covs, w = self.component_params()
        mu = means @ u
        var = np.einsum("i,kij,j->k", u, covs, u)
        return mu, var, w

    def char_fn_real(self, w_vec: np.ndarray, phase) -> np.ndarray:
        """Re E[exp(i(<w, x> + phase))] in closed form (Gaussian mixture CF)."""
        means, covs, wts = self.component_params()
        quad = np.einsum("i,kij,j->k", w_vec, covs, w_vec)
        arg = means @ w_vec
        val = np.exp(-0.5 * quad)[None, :] * np.cos(
            np.atleast_1d(phase)[:, None] + arg[None, :])
        return val @ wts


# -- score sources ------------------------------------------------------------

class ExactScore:
    """Callable (t, x) -> grad log q_t(x) for an analytic target."""

    def __init__(self, model: TargetModel):
        self.model = model

    def __call__(self, t, x) -> np.ndarray:
        return score(self.model, t, x)


class CorruptedScore:
    """Exact score plus a fixed smooth perturbation field of L2(q_t) norm eps_sc.

    The field is a sum of at most five low-frequency sinusoidal bumps whose
    parameters are drawn once from the stream key, so two instances built
    from the same key produce identical output (determinism per (seed, t)).
    The per-time amplitude is calibrated in closed form from the mixture
    characteristic function, so E_{q_t} ||shat - score||^2 ~= eps_sc^2 at
    every t.
    """

    N_BUMPS = 5

    def __init__(self, model: TargetModel, eps_sc: float, stream: RngStream):
        if eps_sc < 0:
            raise ValueError("eps_sc must be non-negative")
        self.model = model
        self.eps_sc = float(eps_sc)
        gen = stream.child("corruption-field").gen
        d = model.dim
        dirs = gen.standard_normal((self.N_BUMPS, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        freq_dirs = gen.standard_normal((self.N_BUMPS, d))
        freq_dirs /= np.linalg.norm(freq_dirs, axis=1, keepdims=True)
        omega = gen.uniform(0.3, 1.0, size=self.N_BUMPS)
        self.units = dirs
        self.freqs = omega[:, None] * freq_dirs
        self.phases = gen.uniform(0.0, 2.0 * np.pi, size=self.N_BUMPS)

    def _field_norm2(self, t) -> np.ndarray:
        """E_{q_t} || sum_k u_k sin(<w_k,x>+phi_k) ||^2, exactly.

        Uses sin a sin b = (cos(a-b) - cos(a+b))/2 and the closed-form
        characteristic function of the noised mixture.
        """
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        # Work per unique time is tiny; vectorize over bump pairs instead.
        total = np.zeros(t_arr.shape)
        for j in range(self.N_BUMPS):
            for k in range(self.N_BUMPS):
                dot = float(self.units[j] @ self.units[k])
                if abs(dot) < 1e-15:
                    continue
                total += dot * 0.5 * (
                    self._cos_moment(t_arr, self.freqs[j] - self.freqs[k],
                                     self.phases[j] - self.phases[k])
                    - self._cos_moment(t_arr, self.freqs[j] + self.freqs[k],
                                       self.phases[j] + self.phases[k]))
        return total

    def _cos_moment(self, t_arr, w_vec, phase) -> np.ndarray:
        """E_{q_t} cos(<w,x> + phase), vectorized over times."""
        model = self.model
        et = np.exp(-t_arr)[:, None]
        e2t = et * et
        out = np.zeros(t_arr.shape)
        for k in range(model.n_components):
            lam_t = e2t * model._eigvals[k] + (1.0 - e2t)       # (nt, d)
            wrot = model._eigvecs[k].T @ w_vec
            quad = (lam_t * wrot ** 2).sum(axis=1)
            arg = (et[:, 0]) * float(model.means[k] @ w_vec)
            out += model.weights[k] * np.exp(-0.5 * quad) * np.cos(arg + phase)
        return out

    def perturbation(self, t, x) -> np.ndarray:
        x = _check_state(x)
        if self.eps_sc == 0.0:
            return np.zeros_like(x)
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        norm2 = self._field_norm2(t_arr)
        amp = self.eps_sc / np.sqrt(np.maximum(norm2, 1e-30))
        if amp.shape[0] == 1 and x.shape[0] > 1:
            amp = np.full(x.shape[0], amp[0])
        field = np.zeros_like(x)
        for k in range(self.N_BUMPS):
            s = np.sin(x @ self.freqs[k] + self.phases[k])
            field += s[:, None] * self.units[k]
        return amp[:, None] * field

    def __call__(self, t, x) -> np.ndarray:
        return score(self.model, t, x) + self.perturbation(t, x)


def corrupt_score(model: TargetModel, t, x, eps_sc: float,
                  stream: RngStream) -> np.ndarray:
    """Score plus the reproducible perturbation field (see CorruptedScore)."""
    return CorruptedScore(model, eps_sc, stream)(t, x)


# -- config I/O ----------------------------------------------------------------

def target_to_config(model: TargetModel) -> dict:
    cfg = {
        "kind": model.kind,
        "dim": model.dim,
        "means": model.means.tolist(),
        "covs": model.covs.tolist(),
        "weights": model.weights.tolist(),
    }
    if model.m is not None:
        cfg["m"] = model.m
    if model.L is not None:
        cfg["L"] = model.L
    return cfg


def target_from_config(cfg: dict) -> TargetModel:
    try:
        return TargetModel(
            kind=cfg["kind"],
            dim=int(cfg["dim"]),
            means=np.asarray(cfg["means"], dtype=float),
            covs=np.asarray(cfg["covs"], dtype=float),
            weights=np.asarray(cfg["weights"], dtype=float),
            m=cfg.get("m"),
            L=cfg.get("L"),
        )
    except KeyError as exc:
        raise ValueError(f"target config missing field {exc}") from exc
