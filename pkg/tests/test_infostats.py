from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import norm

from helpers import ratio_se, stochastic_round
from olaq.bfp import dequantize, quantize_block
from olaq.errors import ConfigError, DegenerateVariance, EmptyComponent, InvalidInput
from olaq.infostats import (
    analyze,
    chi2_estimate,
    dithered_mixture_law_check,
    hcr_lower_bound,
    mixture_law_check,
    mixture_variance_decomposition,
    sensitivity_ratio,
)


def test_sensitivity_identity(rng):
    x = rng.standard_normal(100)
    assert sensitivity_ratio(x, x) == 1.0


def test_sensitivity_additive_noise(rng):
    n = 100_000
    x = rng.normal(0, 2, n)
    delta = rng.normal(0, 1, n)
    assert sensitivity_ratio(x, x + delta) == pytest.approx(0.8, abs=0.05)


@pytest.mark.parametrize("seed", range(10))
def test_sensitivity_unbiased_rounding(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 3, 20_000)
    x_hat = stochastic_round(x, 0.5, rng)
    assert sensitivity_ratio(x, x_hat) <= 1 + 3 * ratio_se(x, x_hat)


def test_sensitivity_errors():
    with pytest.raises(DegenerateVariance):
        sensitivity_ratio([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(InvalidInput):
        sensitivity_ratio([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInput):
        sensitivity_ratio([1.0], [1.0])
    with pytest.raises(InvalidInput):
        sensitivity_ratio([1.0, np.inf], [1.0, 2.0])


def test_hcr_examples():
    assert hcr_lower_bound([1.0, 3.0], [1.0, 3.0]) == 0.0
    # mean gap 1, V(x_hat) = 4
    assert hcr_lower_bound([0.0, 0.0], [-1.0, 3.0]) == 0.25
    with pytest.raises(DegenerateVariance):
        hcr_lower_bound([0.0, 1.0], [2.0, 2.0])


def test_chi2_identical_and_disjoint(rng):
    x = rng.standard_normal(1000)
    assert chi2_estimate(x, x) == 0.0
    far = chi2_estimate(rng.uniform(0, 1, 1000), rng.uniform(10, 11, 1000), bins=64)
    assert far > 100
    with pytest.raises(ConfigError):
        chi2_estimate(x, x, bins=1)


def test_chi2_single_point_range():
    assert chi2_estimate([2.0, 2.0], [2.0, 2.0]) == 0.0


def _binned_chi2_oracle(p, q, mu_p, mu_q, bins):
    """Closed-form chi2 of the two Gaussians binned on the estimator's shared range."""
    lo, hi = min(p.min(), q.min()), max(p.max(), q.max())
    edges = np.linspace(lo, hi, bins + 1)
    # mass beyond the sample range is negligible at n = 1e5; fold it into the end bins anyway
    edges[0], edges[-1] = -np.inf, np.inf
    pi = np.diff(norm.cdf(edges, mu_p))
    qi = np.diff(norm.cdf(edges, mu_q))
    return float(np.sum((pi - qi) ** 2 / qi))


def test_chi2_gaussian_shift_debiased():
    est, ref = [], []
    for seed in range(10):
        rng = np.random.default_rng(seed)
        p, q = rng.normal(0.0, 1.0, 100_000), rng.normal(0.1, 1.0, 100_000)
        est.append(chi2_estimate(p, q, 64, debias=True))
        ref.append(_binned_chi2_oracle(p, q, 0.0, 0.1, 64))
    assert np.mean(est) == pytest.approx(np.mean(ref), rel=0.10)


def test_chi2_plugin_bias_is_upward():
    rng = np.random.default_rng(0)
    p, q = rng.normal(0.0, 1.0, 100_000), rng.normal(0.1, 1.0, 100_000)
    assert chi2_estimate(p, q) > chi2_estimate(p, q, debias=True) >= 0


@pytest.mark.parametrize("seed", range(20))
def test_hcr_below_chi2(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, 5000)
    x_hat = dequantize(quantize_block(x, 8)).astype(np.float64)
    assert hcr_lower_bound(x, x_hat) <= chi2_estimate(x, x_hat)


def test_mixture_example():
    m = mixture_variance_decomposition([1, 2, 9, 11], 5)
    assert (m.p, m.variance, m.variance_low, m.variance_high) == (0.5, 18.6875, 0.25, 1.0)
    assert (m.within, m.between) == (0.625, 18.0625)


def test_mixture_empty_component():
    with pytest.raises(EmptyComponent):
        mixture_variance_decomposition([1, 2, 3], 5)
    with pytest.raises(EmptyComponent):
        mixture_variance_decomposition([1, 2, 9], 5)
    with pytest.raises(EmptyComponent):
        mixture_law_check([1, 2, 3], 5, 0.5)


def test_mixture_split_is_one_sided():
    m = mixture_variance_decomposition([-20.0, -19.0, 6.0, 7.0], 5)
    assert m.p == 0.5


def _exact_total_variance(x, gamma):
    xs = [Fraction(float(v)) for v in x]
    n = len(xs)
    low, high = [v for v in xs if v <= gamma], [v for v in xs if v > gamma]

    def var(vals):
        mu = sum(vals) / len(vals)
        return sum((v - mu) ** 2 for v in vals) / len(vals)

    p = Fraction(len(low), n)
    within = p * var(low) + (1 - p) * var(high)
    between = p * (1 - p) * (sum(low) / len(low) - sum(high) / len(high)) ** 2
    return var(xs), within, between


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(4, 40), elements=st.floats(-50, 50, allow_nan=False)))
def test_total_variance_identity(x):
    gamma = 0.0
    if (x <= gamma).sum() < 2 or (x > gamma).sum() < 2:
        return
    m = mixture_variance_decomposition(x, gamma)
    v, within, between = _exact_total_variance(x, gamma)
    # the rational identity holds exactly; the float evaluation to rounding error
    assert v == within + between
    scale = max(m.variance, 1e-300)
    assert abs(m.variance - (m.within + m.between)) <= 1e-12 * scale
    assert m.variance >= m.within * (1 - 1e-12)
    assert abs(m.within - float(within)) <= 1e-12 * scale


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.integers(4, 200), elements=st.floats(-100, 100, allow_nan=False)),
       st.floats(0.01, 10))
def test_mixture_law_shared_grid_is_zero(x, step):
    if (x <= 5).sum() < 2 or (x > 5).sum() < 2:
        return
    assert mixture_law_check(x, 5, step) == 0.0


def test_mixture_law_bad_grid():
    with pytest.raises(ConfigError):
        mixture_law_check([1, 2, 9, 11], 5, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_dithered_mixture_law_within_noise(seed):
    rng = np.random.default_rng(seed)
    n = 100_000
    x = np.where(rng.random(n) < 0.9, rng.normal(0, 1, n), rng.normal(20, 2, n))
    dist, se = dithered_mixture_law_check(x, 5, 0.25, rng)
    assert se > 0
    assert dist <= 3 * se


def test_separate_grids_reduce_error_variance():
    rng = np.random.default_rng(7)
    n = 4000
    low = rng.normal(0, 1, n)
    high = rng.normal(200, 1, n // 20)
    x = np.concatenate([low, high]).astype(np.float32)
    single = dequantize(quantize_block(x, 8)) - x
    separate = np.concatenate([dequantize(quantize_block(x[:n], 8)) - x[:n],
                               dequantize(quantize_block(x[n:], 8)) - x[n:]])
    assert np.var(separate.astype(np.float64)) <= np.var(single.astype(np.float64))


def test_analyze_report(rng):
    x = rng.standard_normal(5000)
    x[:50] += 40
    rep = analyze(x, gamma=5, bins=32, bits=8)
    assert rep.n == 5000 and rep.bits == 8
    assert rep.mixture_tv_distance == 0.0
    assert 0 <= rep.p_mixture <= 1
    assert rep.variance_total == pytest.approx(rep.variance_within + rep.variance_between, rel=1e-12)
    assert rep.outlier_fraction == pytest.approx(0.01)
    assert 0 < rep.sensitivity_ratio <= 1.01
    assert "sensitivity_ratio = " in rep.to_text()


def test_analyze_empty_component_gives_nan(rng):
    rep = analyze(rng.standard_normal(100))
    assert np.isnan(rep.variance_within) and np.isnan(rep.mixture_tv_distance)
    assert rep.variance_total > 0
