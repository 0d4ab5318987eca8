"""W2 and TV estimators, order fitting, helper-lemma checks."""

import math

import numpy as np
import pytest

from midpoint_sampler.errors import MetricError
from midpoint_sampler.metrics import (check_helper_lemmas, coupled_w2,
                                      fit_order, gaussian_tv_1d,
                                      gaussian_w2, mixture_quantiles,
                                      tv_estimate, w2_empirical)
from midpoint_sampler.rng import RngStream
from midpoint_sampler.targets import (anisotropic_gaussian, gaussian_mixture,
                                      isotropic_gaussian, sample_exact)


def normal(seed, n, d=1, scale=1.0, loc=0.0):
    return loc + scale * RngStream(seed, ("n",)).normal(size=(n, d))


def test_identical_batches_zero():
    a = normal(1, 10_000)
    assert w2_empirical(a, a).value == 0.0
    assert coupled_w2(a, a) == 0.0


def test_mean_shift_w2():
    a = normal(2, 100_000)
    b = normal(3, 100_000) + 1.0
    assert 0.97 <= w2_empirical(a, b).value <= 1.03


def test_scale_w2():
    a = normal(4, 100_000)
    b = 2.0 * normal(5, 100_000)
    assert w2_empirical(a, b).value == pytest.approx(1.0, rel=0.03)


def test_w2_sample_size_guard():
    with pytest.raises(MetricError):
        w2_empirical(np.zeros((50, 1)), np.zeros((50, 1)))


def test_w2_against_analytic_target():
    m = isotropic_gaussian(1, var=4.0)
    xs = sample_exact(m, 0.0, 100_000, RngStream(6))
    res = w2_empirical(xs, target=m.noised(0.0))
    assert res.value <= 0.03
    assert res.gaussian_exact is not None and res.gaussian_exact <= 0.03


def test_sliced_w2_lower_bounds_gaussian_w2():
    rng = np.random.default_rng(7)
    for trial in range(5):
        d = int(rng.integers(2, 5))
        A, B = rng.standard_normal((2, d, d))
        cov1 = A @ A.T + d * np.eye(d)
        cov2 = B @ B.T + d * np.eye(d)
        mu1, mu2 = rng.standard_normal((2, d))
        exact = gaussian_w2(mu1, cov1, mu2, cov2)
        n = 60_000
        a = mu1 + rng.multivariate_normal(np.zeros(d), cov1, size=n)
        b = mu2 + rng.multivariate_normal(np.zeros(d), cov2, size=n)
        sliced = w2_empirical(a, b).value
        assert sliced <= exact * 1.02 + 0.02


def test_bures_closed_form_1d():
    # 1-D sanity: W2(N(0,1), N(1,4)) = sqrt(1 + (2-1)^2)
    assert gaussian_w2([0.0], [[1.0]], [1.0], [[4.0]]) == pytest.approx(
        math.sqrt(2.0))


def test_tv_self_distance_floor():
    m = isotropic_gaussian(2)
    xs = sample_exact(m, 0.0, 100_000, RngStream(8))
    res = tv_estimate(xs, m.noised(0.0))
    assert res.value <= 0.02


def test_tv_mean_shift_exact_value():
    m = isotropic_gaussian(1)
    xs = sample_exact(m, 0.0, 100_000, RngStream(9)) + 0.5
    res = tv_estimate(xs, m.noised(0.0))
    truth = 2.0 * 0.5 * (math.erf(0.25 / math.sqrt(2)) + 1) - 1  # 2 Phi(.25)-1
    truth = gaussian_tv_1d(0.5, 1.0, 0.0, 1.0)
    assert abs(res.value - truth) <= 0.02
    assert res.gaussian_anchor == pytest.approx(truth, abs=0.02)


def test_tv_disjoint_supports():
    m = isotropic_gaussian(1, var=0.01)
    xs = 10.0 + 0.1 * RngStream(10).normal(size=(10_000, 1))
    res = tv_estimate(xs, m.noised(0.0))
    assert res.value >= 0.99
    assert res.value <= 1.0


def test_tv_monotone_under_separation():
    m = isotropic_gaussian(1)
    base = RngStream(11).normal(size=(20_000, 1))
    vals = [tv_estimate(base + sep, m.noised(0.0)).value
            for sep in (0.0, 0.5, 1.0, 2.0, 4.0)]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))
    assert all(v <= 1.0 for v in vals)


def test_gaussian_tv_exact_against_numerical():
    from scipy.integrate import quad
    from scipy.stats import norm
    cases = [(0.5, 1.0, 0.0, 1.0), (0.0, 2.104, 0.0, 1.0), (1.0, 0.5, -0.5, 2.0)]
    for mu1, v1, mu2, v2 in cases:
        ref = 0.5 * quad(lambda x: abs(norm.pdf(x, mu1, math.sqrt(v1))
                                       - norm.pdf(x, mu2, math.sqrt(v2))),
                         -30, 30, limit=400)[0]
        # quad's kinks at the density crossings limit its own accuracy
        assert gaussian_tv_1d(mu1, v1, mu2, v2) == pytest.approx(ref, abs=1e-7)


def test_gaussian_tv_upper_dominates_estimate():
    m = anisotropic_gaussian(np.diag([1.0, 0.5]))
    xs = sample_exact(m, 0.0, 50_000, RngStream(12)) + np.array([0.3, 0.0])
    res = tv_estimate(xs, m.noised(0.0))
    assert res.gaussian_anchor is not None
    assert res.value <= res.gaussian_anchor + 0.02


def test_mixture_quantiles_roundtrip():
    probs = np.linspace(0.001, 0.999, 101)
    q = mixture_quantiles(probs, [0.0], [4.0], [1.0])
    from scipy.stats import norm
    assert np.allclose(q, norm.ppf(probs, scale=2.0), atol=1e-3)


def test_fit_order_exact_power_laws():
    fit = fit_order([0.1, 0.05, 0.025, 0.0125], [1e-2, 2.5e-3, 6.25e-4, 1.5625e-4])
    assert fit.slope == pytest.approx(2.0, abs=1e-9)
    assert fit.ci_high - fit.ci_low <= 1e-6
    fit = fit_order([0.1, 0.05, 0.025], [0.3, 0.15, 0.075])
    assert fit.slope == pytest.approx(1.0, abs=1e-9)


def test_fit_order_recovers_noisy_slope():
    rng = np.random.default_rng(13)
    h = np.geomspace(0.2, 0.0125, 8)
    err = 3.0 * h ** 1.5 * np.exp(0.05 * rng.standard_normal(8))
    fit = fit_order(h, err)
    assert fit.ci_low <= 1.5 <= fit.ci_high


def test_fit_order_input_validation():
    with pytest.raises(ValueError):
        fit_order([0.1], [0.2])
    with pytest.raises(ValueError):
        fit_order([0.1, 0.05], [0.0, 0.1])


def test_check_helper_lemmas_pass_on_var4():
    m = isotropic_gaussian(1, var=4.0)
    rows = check_helper_lemmas(m, n=50_000, rng=RngStream(14))
    assert all(r["ok"] for r in rows)
    kinds = {r["check"] for r in rows}
    assert kinds == {"score_norm", "tv_decay"}


def test_check_helper_lemmas_on_gmm():
    gm = gaussian_mixture([[-2.0, 0.0], [2.0, 0.0]], [1.0, 1.0], [0.5, 0.5])
    rows = check_helper_lemmas(gm, n=50_000, rng=RngStream(15))
    assert all(r["ok"] for r in rows)
