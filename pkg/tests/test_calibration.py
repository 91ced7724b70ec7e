import math

import numpy as np
import pytest
from scipy import stats

from riskbacktest.calibration import (
    average_calibration_test,
    binomial_var_test,
    bonferroni,
    hac_covariance,
    hommel,
    make_test_functions,
    mcneil_frey_statistic,
    one_sided_cct,
    two_sided_cct,
)
from riskbacktest.identification import IdentificationSpec, identify


def test_hommel_two_components():
    reject, p = hommel([0.01, 0.5], eta=0.05)
    # q C_q min p_(m)/m = 2 * 1.5 * 0.01
    assert p == pytest.approx(0.03)
    assert reject
    reject, p = hommel([0.04, 0.5])
    assert not reject and p == pytest.approx(0.12)


def test_bonferroni():
    reject, p = bonferroni([0.02, 0.3, 0.9])
    assert p == pytest.approx(0.06) and not reject


def test_binomial_examples():
    # 10 exceedances at the 99% level over 250 days: the Basel red zone
    rep = binomial_var_test(10, 250, 0.99, side="super")
    assert rep.p_value == pytest.approx(stats.binom.sf(9, 250, 0.01))
    assert rep.reject
    rep = binomial_var_test(2, 250, 0.99, side="two")
    assert not rep.reject
    assert binomial_var_test(0, 250, 0.99, side="sub").p_value == pytest.approx(0.99**250)


def test_two_sided_constant_design_matches_mean_test():
    rng = np.random.default_rng(0)
    v = rng.normal(0.1, 1.0, 500)
    rep = two_sided_cct(v)
    n = v.size
    t = n * v.mean() ** 2 / np.mean(v * v)
    assert rep.statistic == pytest.approx(t)
    assert rep.p_value == pytest.approx(stats.chi2.sf(t, 1))


def test_two_sided_degenerate_on_collinear_design():
    v = np.random.default_rng(1).normal(size=(100, 1))
    h = np.ones((100, 2, 1))
    rep = two_sided_cct(v, h)
    assert rep.degenerate and rep.p_value is None


def test_one_sided_directions():
    rng = np.random.default_rng(2)
    v = rng.normal(-0.3, 1.0, 400)
    sup = one_sided_cct(v, direction="super")
    sub = one_sided_cct(v, direction="sub")
    assert sup.reject and not sub.reject
    assert sup.p_value == pytest.approx(stats.norm.cdf(math.sqrt(400) * v.mean() / math.sqrt(np.mean(v * v))))


def test_one_sided_rejects_negative_test_functions():
    with pytest.raises(ValueError):
        one_sided_cct(np.ones(50), -np.ones((50, 1, 1)))


def test_hac_lag_zero_is_sample_covariance():
    x = np.random.default_rng(3).normal(size=(200, 2))
    assert np.allclose(hac_covariance(x, 0), np.cov(x.T, bias=True))


def test_hac_increases_for_positive_autocorrelation():
    rng = np.random.default_rng(4)
    e = rng.normal(size=2000)
    x = np.convolve(e, np.ones(5), mode="valid")
    assert hac_covariance(x, "auto")[0, 0] > 2 * hac_covariance(x, 0)[0, 0]


def test_average_calibration_accepts_calibrated_var():
    rng = np.random.default_rng(5)
    x = rng.normal(size=2000)
    v = identify(IdentificationSpec("var", 0.95), stats.norm.ppf(0.95), x)
    assert not average_calibration_test(v).reject


def test_dynamic_quantile_design_drops_unavailable_lags():
    n = 300
    r = np.ones(n)
    v = np.random.default_rng(6).normal(size=n)
    h = make_test_functions("dynamic_quantile", "var", r, values=v, lags=2)
    assert h.shape == (n, 4, 1)
    assert np.isnan(h[:2, 1:3]).any() and not np.isnan(h[2:]).any()


def test_mcneil_frey_statistic_and_approximation():
    rng = np.random.default_rng(7)
    n, a = 5000, 0.975
    sigma = np.exp(rng.normal(0, 0.2, n))
    z = rng.standard_t(5, n) * math.sqrt(3 / 5)
    x = sigma * z
    q = stats.t.ppf(a, 5) * math.sqrt(3 / 5)
    es = stats.t.pdf(stats.t.ppf(a, 5), 5) / (1 - a) * (5 + stats.t.ppf(a, 5) ** 2) / 4 * math.sqrt(3 / 5)
    res = mcneil_frey_statistic(x, sigma * q, sigma * es, sigma, a)
    assert res.n_exceedances > 0
    assert abs(res.statistic) < 0.25
    # h V collapses to 1{x > r1} (x - r2) / ((1 - a) sigma)
    frac = res.n_exceedances / n
    assert res.approximation == pytest.approx(frac / (1 - a) * res.statistic, rel=1e-10)
