import math
import warnings

import numpy as np
import pytest

from riskbacktest.distributions import GPD, StudentT
from riskbacktest.forecasting import (
    REFERENCE_DGP,
    ArGarchFilter,
    ArGarchParams,
    EvtRisk,
    HistoricalSimulationRisk,
    default_tail_count,
    empirical_expectile,
    empirical_quantile,
    evt_es,
    evt_expectile,
    evt_expectile_curve,
    evt_fit,
    evt_var,
    fhs_risk,
    fit_ar_garch_mle,
    fp_risk,
    _unpack,
    gpd_fit_mle,
    innovation_spec,
    simulate_ar_garch,
)


@pytest.fixture(scope="module")
def path():
    return simulate_ar_garch(REFERENCE_DGP, 2000, rng=np.random.default_rng(42))


def test_simulation_is_seeded_and_consistent(path):
    again = simulate_ar_garch(REFERENCE_DGP, 2000, rng=np.random.default_rng(42))
    assert np.array_equal(path.x, again.x)
    assert np.allclose(path.x, path.mu + path.sigma * path.z)
    p = REFERENCE_DGP
    assert np.allclose(path.mu[1:], p.ar_intercept + p.ar_coef * path.x[:-1])


def test_params_validation():
    with pytest.raises(ValueError):
        ArGarchParams(0.0, 0.3, 0.01, 0.2, 0.85, StudentT(5.0, standardized=True))


@pytest.mark.parametrize("family", ["normal", "t", "skewed_t"])
def test_filter_recovers_dynamics(path, family):
    est = ArGarchFilter(family=family).fit(path.x[:1500])
    p = est.params_
    assert est.converged_
    assert p.ar_coef == pytest.approx(0.3, abs=0.1)
    # the normal family is misspecified for skewed-t data and shrinks persistence
    assert p.persistence == pytest.approx(0.95, abs=0.1 if family == "normal" else 0.06)
    assert np.corrcoef(est.sigma_[200:], path.sigma[200:1500])[0, 1] > 0.9
    mu, s = est.forecast_one_step()
    assert mu == pytest.approx(p.ar_intercept + p.ar_coef * path.x[1499])
    assert s > 0


def test_skewed_t_fit_finds_shape(path):
    est = ArGarchFilter(family="skewed_t").fit(path.x)
    nu, gamma = est.shape_
    assert 3.0 < nu < 12.0
    assert 1.1 < gamma < 2.2


def test_warm_start_reuses_parameters(path):
    first = fit_ar_garch_mle(path.x[:500], "t")
    theta = first.theta_.copy()
    second = fit_ar_garch_mle(path.x[1:501], "t", previous=first)
    assert second.warm_start
    assert np.linalg.norm(second.theta_ - theta) < 1.0


def test_boundary_fits_stay_inside_parameter_space():
    theta = np.array([0.0, 40.0, -4.0, 45.0, 60.0, 1.0, -900.0])
    c, phi, omega, alpha, beta, shape = _unpack(theta, "skewed_t")
    assert alpha + beta < 1 and abs(phi) < 1 and shape[1] > 0
    ArGarchParams(c, phi, omega, alpha, beta, innovation_spec("skewed_t", shape))


def test_short_windows_rejected(path):
    with pytest.raises(ValueError):
        fit_ar_garch_mle(path.x[:100])


def test_fp_risk_of_innovation():
    st = REFERENCE_DGP.innovation
    q, es = fp_risk(st, "vares", 0.975)
    assert es > q > 0
    assert fp_risk(st, "var", 0.975) == q


def test_empirical_quantile_convention():
    z = np.arange(1.0, 101.0)
    assert empirical_quantile(z, 0.95) == 95.0
    assert empirical_quantile(z, 0.951) == 96.0


def test_empirical_expectile_methods_agree():
    z = np.random.default_rng(1).standard_t(5, 1000)
    for tau in (0.5, 0.9, 0.99):
        assert empirical_expectile(z, tau) == pytest.approx(empirical_expectile(z, tau, method="exact"), abs=1e-8)
    assert empirical_expectile(z, 0.5) == pytest.approx(z.mean(), abs=1e-10)


def test_fhs_is_reproducible():
    z = np.random.default_rng(2).normal(size=500)
    a = HistoricalSimulationRisk(10000, random_state=7).fit(z).risk("var", 0.99)
    b = HistoricalSimulationRisk(10000, random_state=7).fit(z).risk("var", 0.99)
    assert a == b
    q, es = fhs_risk(z, "vares", 0.975, n_resample=None)
    assert es > q


def test_gpd_fit_recovers_parameters():
    y = GPD(1.0, 0.2).sample(20000, np.random.default_rng(3))
    fit = gpd_fit_mle(y)
    se_b, se_x = fit.stderr
    assert abs(fit.scale - 1.0) < 3 * se_b
    assert abs(fit.shape - 0.2) < 3 * se_x


def test_gpd_fit_handles_light_tails():
    y = GPD(1.0, -0.3).sample(5000, np.random.default_rng(4))
    assert gpd_fit_mle(y).shape == pytest.approx(-0.3, abs=0.06)


def test_default_tail_count():
    assert default_tail_count(500) == 60
    assert default_tail_count(1000) == 120


def test_evt_tail_estimates_for_student_t():
    rng = np.random.default_rng(5)
    z = StudentT(5.0).sample(100000, rng)
    fit = evt_fit(z, 2000)
    t = StudentT(5.0)
    assert evt_var(fit, 0.999) == pytest.approx(t.quantile(0.999), rel=0.05)
    assert evt_expectile(fit, 0.999) == pytest.approx(t.expectile(0.999), rel=0.1)
    assert evt_es(fit, 0.99) > evt_var(fit, 0.99)


def test_evt_expectile_curve_continuity_at_threshold():
    z = np.random.default_rng(6).standard_t(5, 2000)
    fit = evt_fit(z, 200)
    g = evt_expectile_curve(fit, np.array([fit.threshold, fit.threshold + 1e-9]))
    assert abs(g[1] - g[0]) < 1e-6
    assert 0.0 < g[0] < 1.0


def test_evt_expectile_falls_back_below_threshold():
    z = np.random.default_rng(7).normal(size=500)
    fit = evt_fit(z)
    tau = 0.6
    assert evt_expectile(fit, tau) == pytest.approx(empirical_expectile(z, tau))


def test_evt_var_zero_shape_limit():
    z = np.random.default_rng(8).exponential(size=5000)
    fit = evt_fit(z, 500)
    assert math.isfinite(evt_var(fit, 0.999))
    r = EvtRisk(500).fit(z)
    assert r.risk("var", 0.999) == evt_var(fit, 0.999)


def test_filter_warning_on_failure_reuses_previous(path):
    est = ArGarchFilter(family="normal", warm_start=True).fit(path.x[:500])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est.set_params(max_fev=3).fit(path.x[1:501])
    assert not est.converged_
    assert any("reusing" in str(w.message) for w in caught)


def test_first_window_failure_raises(path):
    with pytest.raises(RuntimeError):
        ArGarchFilter(family="normal", max_fev=3).fit(path.x[:500])
