import math
import warnings
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal, norm

from primerace.covariance import covariance_model_from_matrix, covariance_model_synthetic
from primerace.density import (
    DensityModel, bias_factor, bias_verify, density_exact, density_structured, log_density_exact,
    ordering_quadrature, race_bias_factor, smoothing_oracle_check, tail_check, tail_log_bound,
    total_mass,
)
from primerace.errors import DimensionTooLarge, HypothesisWarning
from primerace.model import GaussianSampler, estimate_ordering, make_ordering


def dm(n, k=0, xi=0.0, noise=0.0, seed=None):
    return DensityModel(covariance_model_synthetic(n, k, xi, noise, rng=seed))


# ---------------------------------------------------------------- densities


def test_standard_normal_at_zero():
    assert density_exact(dm(1), np.array([0.0])) == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert density_exact(dm(1), np.array([0.0])) == pytest.approx(0.398942, abs=1e-6)


def test_bivariate_closed_form():
    v = density_exact(dm(2, 1, -0.5), np.array([1.0, 1.0]))
    assert v == pytest.approx(math.exp(-3 / 1.5) / (2 * math.pi * math.sqrt(0.75)), rel=1e-13)
    assert v == pytest.approx(0.024872, abs=1e-6)


@settings(max_examples=40)
@given(st.lists(st.floats(-4, 4), min_size=4, max_size=4))
def test_independent_product(x):
    x = np.array(x)
    assert density_exact(dm(4), x) == pytest.approx(np.prod(norm.pdf(x)), rel=1e-12)


def test_matches_scipy_for_noisy_model():
    d = dm(5, 2, -0.3, 0.02, seed=4)
    x = np.random.default_rng(1).standard_normal((50, 5))
    want = multivariate_normal(np.zeros(5), d.model.C).logpdf(x)
    assert np.allclose(log_density_exact(d, x), want, atol=1e-11)


def test_structured_identity_case():
    d = dm(3)
    x = np.random.default_rng(2).standard_normal((20, 3))
    s = density_structured(d, x)
    assert np.array_equal(s.value, density_exact(d, x))
    assert np.all(s.log_band == 0)


@pytest.mark.parametrize("xi", [-0.1, -0.05, 0.05, 0.1])
def test_structured_two_by_two_within_band(xi):
    d = dm(2, 1, xi)
    g = np.linspace(-3, 3, 31)
    X = np.array([(a, b) for a in g for b in g])
    s = density_structured(d, X)
    # exact log ratio: xi x1 x2 - 1/2|x|^2 against the true quadratic form and determinant
    diff = np.log(s.value) - log_density_exact(d, X)
    x1, x2 = X[:, 0], X[:, 1]
    want = (xi * x1 * x2 - 0.5 * (x1**2 + x2**2)
            + 0.5 * (x1**2 + x2**2 - 2 * xi * x1 * x2) / (1 - xi**2)
            + 0.5 * math.log(1 - xi**2))
    assert np.allclose(diff, want, atol=1e-12)
    assert np.all(np.abs(diff) <= s.log_band)


def test_structured_at_origin():
    d = dm(6, 2, -0.2)
    s = density_structured(d, np.zeros(6))
    assert s.value == pytest.approx((2 * math.pi) ** -3)
    exact = density_exact(d, np.zeros(6))
    assert exact == pytest.approx((2 * math.pi) ** -3 * (1 - 0.04) ** -1)
    assert s.lower <= exact <= s.upper


def test_structured_warns():
    with pytest.warns(HypothesisWarning):
        density_structured(dm(4, 1, 0.6), np.zeros(4))
    with pytest.warns(HypothesisWarning):
        density_structured(dm(4, 1, 0.1, 0.2, seed=1), np.zeros(4))


@pytest.mark.parametrize("n,k,xi", [(1, 0, 0.0), (2, 1, -0.5), (3, 1, 0.3), (3, 1, -0.45)])
def test_total_mass(n, k, xi):
    assert total_mass(dm(n, k, xi)) == pytest.approx(1.0, abs=1e-6)


def test_total_mass_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        total_mass(dm(4))


# ---------------------------------------------------------------- quadrature


def test_quadrature_independent_chain():
    assert ordering_quadrature(dm(3), make_ordering("full_chain", 3)) == pytest.approx(1 / 6, abs=1e-5)


@pytest.mark.parametrize("rho", [-0.5, 0.0, 0.5])
def test_quadrature_pair(rho):
    d = DensityModel(covariance_model_from_matrix([[1, rho], [rho, 1]]))
    assert ordering_quadrature(d, make_ordering("full_chain", 2)) == pytest.approx(0.5, abs=1e-5)


def test_quadrature_orthant():
    d = dm(2, 1, -0.5)
    p = ordering_quadrature(d, make_ordering("custom", 2, pairs=[]),
                            bounds={1: (0, math.inf), 2: (0, math.inf)})
    assert p == pytest.approx(0.25 + math.asin(-0.5) / (2 * math.pi), abs=1e-7)
    assert p == pytest.approx(1 / 6, abs=1e-7)


@pytest.mark.parametrize("kind,n,k", [("full_chain", 4, None), ("S_2k", 4, 1),
                                      ("S_2k_sharp", 4, 1), ("top_chain_k", 4, 2)])
def test_quadrature_independent_matches_counting(kind, n, k):
    spec = make_ordering(kind, n, k)
    x = np.array(list(permutations(range(n))), dtype=float)
    frac = spec.contains(x).mean()
    assert ordering_quadrature(dm(n), spec) == pytest.approx(frac, abs=1e-6)


def test_quadrature_agrees_with_monte_carlo():
    d = dm(4, 2, -0.3, 0.01, seed=3)
    spec = make_ordering("S_2k_sharp", 4, 1)
    p = ordering_quadrature(d, spec)
    est = estimate_ordering(GaussianSampler(d.model), spec, 10**6, 12)
    assert abs(est.estimate - p) <= 3 * est.stderr + 1e-5


def test_quadrature_dimension_cap():
    with pytest.raises(DimensionTooLarge):
        ordering_quadrature(dm(5), make_ordering("full_chain", 5))


# ---------------------------------------------------------------- bias factors


def test_bias_factor_values():
    assert bias_factor(10, 8, 1, -1) == pytest.approx(math.exp(-math.log(8) / 20))
    assert bias_factor(10, 8, 1, -1) == pytest.approx(0.9012, abs=1e-4)
    assert bias_factor(7.0, 5, 5, 1) == 1.0


@given(st.floats(0.5, 50), st.integers(2, 40), st.data())
def test_bias_factor_symmetry(lq, n, data):
    k = data.draw(st.integers(1, n // 2))
    assert bias_factor(lq, n, k, 1) * bias_factor(lq, n, k, -1) == pytest.approx(1.0)


def test_race_bias_factor():
    lq = math.log(10**6)
    up = race_bias_factor(lq, 10, 10**6, 1)
    assert up == pytest.approx(math.exp(min(10, (10**6) ** (1 / 50)) / lq))
    assert up * race_bias_factor(lq, 10, 10**6, -1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        bias_factor(-1.0, 4, 1, 1)


# ---------------------------------------------------------------- tails


def test_tail_check_independent():
    r = tail_check(dm(6), N=10**6, seed=1, log_q=10.0)
    assert r.rest.threshold == pytest.approx(60 * math.log(60))
    assert r.rest.exceedances == 0 and r.rest.bound >= r.rest.frequency
    # k = 0: the head event is an empty sum and never exceeds
    assert r.head.exceedances == 0
    assert r.ok


def test_tail_bound_decreasing_in_n():
    vals = [tail_log_bound(n, 10.0, n) for n in range(2, 40)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_tail_check_needs_log_q():
    with pytest.raises(ValueError):
        tail_check(dm(3), N=100, seed=1)


# ---------------------------------------------------------------- smoothing oracles


@pytest.fixture(scope="module")
def smoothing_runs():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        return {d: smoothing_oracle_check(6, 1, d, 10**6, 3) for d in (1e-3, 1e-4, 1e-5)}


def test_smoothing_oracle(smoothing_runs):
    r = smoothing_runs[1e-4]
    assert r.baseline == pytest.approx(1 / 30)
    assert 0.9 <= r.upper_ratio <= 1.1
    assert r.ordered
    assert r.upper_ok and r.lower_ok


def test_smoothing_trend(smoothing_runs):
    up = [abs(smoothing_runs[d].upper_ratio - 1) for d in (1e-3, 1e-4, 1e-5)]
    lo = [abs(smoothing_runs[d].lower_ratio - 1) for d in (1e-3, 1e-4, 1e-5)]
    assert up[0] > up[1] and lo[0] > lo[1] > lo[2]
    last = smoothing_runs[1e-5]
    assert up[2] <= 3 * last.upper.stderr / last.baseline
    assert lo[2] <= 3 * last.lower.stderr / last.baseline


def test_smoothing_hypothesis_flag():
    with pytest.warns(HypothesisWarning):
        r = smoothing_oracle_check(6, 1, 0.1, 1000, 1)
    assert not r.hypothesis_ok


# ---------------------------------------------------------------- bias direction


def test_bias_verify_small():
    a, b = bias_verify(6, 1, -0.3, 4 * 10**5, 2)
    assert a.kind == "S_2k" and b.kind == "S_2k_sharp"
    assert a.ratio < 1 < b.ratio
    assert a.exact_baseline == pytest.approx(1 / 30)
    assert a.predicted_factor == pytest.approx(math.exp(-0.3 * math.log(6)))
    assert a.baseline.seed == a.estimate.seed
