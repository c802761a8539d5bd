import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heatbvm.prior import (
    LinkFunction,
    PriorConfig,
    RegularityParams,
    rescale_factor,
    rescale_for_n,
    rkhs_norm,
    sample_base_prior,
    theta_prior_logdensity,
)
from heatbvm.rng import make_rng
from heatbvm.spectral import TorusField, TorusGrid, norm_l2, sobolev_norm, spectral_basis

LINK = LinkFunction(0.5)


def test_link_examples():
    assert LINK(0.0) == pytest.approx(0.5 + math.log(2), abs=1e-15)
    assert LINK.prime(0.0) == 0.5
    # Phi(-50) - f_min is e^-50 up to e^-100/2; the subtraction itself would cancel
    assert abs(LINK.excess(-50.0) - math.exp(-50.0)) <= 1e-30
    assert LINK.excess(-50.0) == pytest.approx(math.exp(-50.0), rel=1e-15)
    big = LINK(1000.0)
    assert np.isfinite(big) and big == pytest.approx(1000.5)
    with pytest.raises(ValueError):
        LinkFunction(0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-700, 700))
def test_link_bounds(x):
    assert LINK(x) > 0.5 or LINK.excess(x) > 0
    assert LINK.excess(x) > 0
    d = LINK.prime(x)
    assert 0 <= d <= LinkFunction.PRIME_BOUND
    assert 0 <= LINK.second(x) <= LinkFunction.SECOND_BOUND


def test_link_derivatives_match_differences():
    x = np.linspace(-6, 6, 41)
    h = 1e-5
    assert np.allclose((LINK(x + h) - LINK(x - h)) / (2 * h), LINK.prime(x), atol=1e-9)
    assert np.allclose((LINK.prime(x + h) - LINK.prime(x - h)) / (2 * h), LINK.second(x), atol=1e-9)


def test_regularity_constraints():
    RegularityParams(4, 5, 12, 1)
    for bad in ((3, 5, 12, 1), (4, 4.4, 12, 1), (4, 8, 12, 1), (4.5, 5, 12, 2)):
        with pytest.raises(ValueError):
            RegularityParams(*bad)
    r = RegularityParams(4, 5, 12, 1)
    assert r.direct_rate_exponent == pytest.approx(-7 / 15)
    assert r.contraction_exponent == pytest.approx(-14 / 45)


def test_rescale_factor():
    cfg = PriorConfig(alpha=5)
    assert rescale_factor(1, cfg, 1) == 1.0
    assert rescale_factor(1e6, cfg, 1) == pytest.approx(1e6 ** (-1 / 30))
    assert rescale_factor(1e6, cfg, 1) == pytest.approx(0.6310, abs=5e-5)
    vals = [rescale_factor(n, cfg, 1) for n in (1, 10, 1e3, 1e5)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        rescale_factor(0.5, cfg, 1)


def test_theta_prior():
    cfg = PriorConfig(theta_min=1.0, theta_max=3.0)
    assert theta_prior_logdensity(2.0, cfg) == pytest.approx(-math.log(2))
    assert theta_prior_logdensity(0.99, cfg) == -math.inf
    assert theta_prior_logdensity(3.01, cfg) == -math.inf
    total, _ = integrate.quad(lambda t: math.exp(theta_prior_logdensity(t, cfg)), 0, 4, points=[1, 3])
    assert total == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        PriorConfig(theta_min=3, theta_max=1)


def test_base_prior_coefficient_variances():
    grid = TorusGrid(1, 16)
    alpha = 5.0
    rng = make_rng(3, "var")
    draws = np.array([sample_base_prior(grid, alpha, rng=rng).coeffs for _ in range(100_000)])
    target = PriorConfig(alpha=alpha).coefficient_std(grid) ** 2
    emp = draws.var(axis=0)
    se = target * math.sqrt(2 / (len(draws) - 1))
    # 4 standard errors jointly over the 16 coordinates
    assert np.all(np.abs(emp - target) <= 4 * se)
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 * np.sqrt(target / len(draws)))


def test_base_prior_determinism_and_truncation():
    grid = TorusGrid(2, 8)
    a = sample_base_prior(grid, 5, seed=11)
    b = sample_base_prior(grid, 5, seed=11)
    assert np.array_equal(a.values, b.values)
    c = sample_base_prior(grid, 5, seed=11, n_modes=5)
    assert np.max(np.abs(c.coeffs[5:])) < 1e-14
    assert np.allclose(c.coeffs[:5], a.coeffs[:5])
    with pytest.raises(ValueError):
        sample_base_prior(grid, 1.0, seed=1)
    with pytest.raises(ValueError):
        sample_base_prior(grid, 5)


def test_sobolev_moment_stable_under_refinement():
    alpha, beta = 5.0, 4.0
    coarse, fine = TorusGrid(1, 64), TorusGrid(1, 128)
    mc = []
    for grid in (coarse, fine):
        vals = [sobolev_norm(sample_base_prior(grid, alpha, seed=s), beta) ** 2 for s in range(1000)]
        mc.append(np.mean(vals))
    assert abs(mc[0] / mc[1] - 1) < 0.05
    lam = spectral_basis(fine).eigenvalues
    exact = np.sum((1 + lam) ** (beta - alpha))
    assert mc[1] == pytest.approx(exact, rel=0.15)


def test_rescaled_prior_shrinks_norm():
    grid = TorusGrid(1, 32)
    cfg = PriorConfig(alpha=5)
    n = 1e4
    base = np.array([norm_l2(sample_base_prior(grid, 5, rng=make_rng(1, "a", i))) ** 2 for i in range(4000)])
    resc = np.array([norm_l2(rescale_for_n(sample_base_prior(grid, 5, rng=make_rng(1, "b", i)), n, cfg)) ** 2
                     for i in range(4000)])
    ratio = rescale_factor(n, cfg, 1) ** 2
    diff = resc.mean() - ratio * base.mean()
    se = math.sqrt(resc.var() / len(resc) + ratio ** 2 * base.var() / len(base))
    assert abs(diff) <= 3 * se
    assert resc.mean() < base.mean()


def test_rkhs_norm_is_alpha_sobolev():
    grid = TorusGrid(1, 32)
    h = TorusField.basis_function(grid, 2)
    lam = spectral_basis(grid).eigenvalues[2]
    assert rkhs_norm(h, 5) == pytest.approx((1 + lam) ** 2.5)
