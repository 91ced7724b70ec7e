"""AR(1)-GARCH(1,1) simulation and filtering plus the second-stage risk
estimators for standardized residuals.

Risk forecasts are composed as ``mu_t + sigma_t * rho(Z)`` where ``rho(Z)``
comes from a fully parametric fit (FP), filtered historical simulation (FHS)
or a peaks-over-threshold GPD tail (EVT).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize, signal, special
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .distributions import (
    GPD,
    DistributionSpec,
    Normal,
    SkewedT,
    StudentT,
    warn_if_heavy_shape,
)

__all__ = [
    "ArGarchParams",
    "SimulatedPath",
    "simulate_ar_garch",
    "ArGarchFilter",
    "FilterFitWarning",
    "FAMILIES",
    "innovation_spec",
    "fit_ar_garch_mle",
    "forecast_one_step",
    "fp_risk",
    "empirical_quantile",
    "empirical_expectile",
    "fhs_risk",
    "GpdFit",
    "gpd_fit_mle",
    "EvtFit",
    "evt_fit",
    "evt_var",
    "evt_es",
    "evt_expectile_curve",
    "evt_expectile",
    "evt_risk",
    "default_tail_count",
    "ParametricRisk",
    "HistoricalSimulationRisk",
    "EvtRisk",
    "REFERENCE_DGP",
]

FAMILIES = ("normal", "t", "skewed_t")


class FilterFitWarning(RuntimeWarning):
    """The likelihood optimizer did not converge for a window."""


@dataclass(frozen=True)
class ArGarchParams:
    ar_intercept: float
    ar_coef: float
    garch_omega: float
    garch_alpha: float
    garch_beta: float
    innovation: DistributionSpec = field(default_factory=lambda: Normal())

    def __post_init__(self):
        if not abs(self.ar_coef) < 1:
            raise ValueError("|ar_coef| must be below 1")
        if not self.garch_omega > 0:
            raise ValueError("garch_omega must be positive")
        if self.garch_alpha < 0 or self.garch_beta < 0:
            raise ValueError("GARCH coefficients must be non-negative")
        if not self.garch_alpha + self.garch_beta < 1:
            raise ValueError("garch_alpha + garch_beta must be below 1")
        m, v = self.innovation.mean(), self.innovation.variance()
        if abs(m) > 1e-8 or abs(v - 1.0) > 1e-8:
            raise ValueError("innovations must have mean 0 and variance 1")

    @property
    def persistence(self) -> float:
        return self.garch_alpha + self.garch_beta

    @property
    def unconditional_variance(self) -> float:
        """Stationary variance of the GARCH shocks."""
        return self.garch_omega / (1.0 - self.persistence)


REFERENCE_DGP = ArGarchParams(-0.05, 0.3, 0.01, 0.1, 0.85, SkewedT(5.0, 1.5, standardized=True))


@dataclass(frozen=True)
class SimulatedPath:
    """Losses with the true conditional mean, volatility and innovations."""

    x: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray


def simulate_ar_garch(params: ArGarchParams, n: int, burnin: int = 1000, rng: np.random.Generator | None = None) -> SimulatedPath:
    """Simulate ``n`` observations after discarding ``burnin`` start-up values.

    The recursion starts at the stationary mean and variance.
    """
    if n < 1 or burnin < 0:
        raise ValueError("n must be >= 1 and burnin >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    total = n + burnin
    z = params.innovation.sample(total, rng)
    c, phi = params.ar_intercept, params.ar_coef
    om, a, b = params.garch_omega, params.garch_alpha, params.garch_beta
    x = np.empty(total)
    mu = np.empty(total)
    s2 = np.empty(total)
    x_prev = c / (1.0 - phi)
    s2_prev = params.unconditional_variance
    eps_prev = 0.0
    for t in range(total):
        mu[t] = c + phi * x_prev
        s2[t] = om + a * eps_prev * eps_prev + b * s2_prev
        eps = math.sqrt(s2[t]) * z[t]
        x[t] = mu[t] + eps
        x_prev, s2_prev, eps_prev = x[t], s2[t], eps
    sl = slice(burnin, None)
    return SimulatedPath(x[sl].copy(), mu[sl].copy(), np.sqrt(s2[sl]), z[sl].copy())


# -- likelihood machinery --------------------------------------------------


def innovation_spec(family: str, shape=()) -> DistributionSpec:
    """Standardized innovation distribution for a family and its shape parameters."""
    if family == "normal":
        return Normal(standardized=True)
    if family == "t":
        return StudentT(float(shape[0]), standardized=True)
    if family == "skewed_t":
        return SkewedT(float(shape[0]), float(shape[1]), standardized=True)
    raise ValueError(f"unknown innovation family {family!r}; choose from {FAMILIES}")


_LOG_2PI = math.log(2.0 * math.pi)


def _unpack(theta: np.ndarray, family: str):
    c = theta[0]
    # transforms capped so boundary fits stay strictly inside the parameter space
    phi = math.tanh(min(max(theta[1], -15.0), 15.0))
    omega = math.exp(theta[2])
    e1, e2 = math.exp(min(theta[3], 30.0)), math.exp(min(theta[4], 30.0))
    den = 1.0 + e1 + e2
    alpha, beta = e1 / den, e2 / den
    shape = ()
    if family != "normal":
        shape = (2.0 + math.exp(min(theta[5], 8.0)),)
        if family == "skewed_t":
            shape = shape + (math.exp(min(max(theta[6], -20.0), 20.0)),)
    return c, phi, omega, alpha, beta, shape


def _pack(c, phi, omega, alpha, beta, shape, family) -> np.ndarray:
    rest = max(1.0 - alpha - beta, 1e-8)
    theta = [c, math.atanh(np.clip(phi, -0.999, 0.999)), math.log(omega), math.log(max(alpha, 1e-8) / rest), math.log(max(beta, 1e-8) / rest)]
    if family != "normal":
        theta.append(math.log(max(shape[0] - 2.0, 1e-3)))
        if family == "skewed_t":
            theta.append(math.log(shape[1]))
    return np.asarray(theta, dtype=float)


def _filter(x: np.ndarray, c, phi, omega, alpha, beta, presample_x: float, s2_init: float):
    """Conditional means, variances and shocks over a window."""
    x_lag = np.empty_like(x)
    x_lag[0] = presample_x
    x_lag[1:] = x[:-1]
    mu = c + phi * x_lag
    eps = x - mu
    u = omega + alpha * eps[:-1] ** 2
    s2 = np.empty_like(x)
    s2[0] = s2_init
    if x.size > 1:
        s2[1:], _ = signal.lfilter([1.0], [1.0, -beta], u, zi=[beta * s2_init])
    return mu, s2, eps


@njit(cache=True)
def _negloglik_kernel(x, c, phi, omega, alpha, beta, presample_x, s2_init, code, nu, g, const, loc, scale):
    # code: 0 normal, 1 standardized t, 2 standardized skewed t
    n = x.shape[0]
    total = 0.0
    x_prev = presample_x
    s2 = s2_init
    eps_prev = 0.0
    for t in range(n):
        if t > 0:
            s2 = omega + alpha * eps_prev * eps_prev + beta * s2
        if not s2 > 0.0:
            return 1e12
        eps = x[t] - c - phi * x_prev
        sd = math.sqrt(s2)
        z = eps / sd
        if code == 0:
            lp = -0.5 * z * z
        elif code == 1:
            lp = -(nu + 1.0) / 2.0 * math.log1p(z * z / (nu - 2.0))
        else:
            y = loc + scale * z
            a = g * y if y <= 0.0 else y / g
            lp = -(nu + 1.0) / 2.0 * math.log1p(a * a / nu)
        total += lp - math.log(sd)
        x_prev = x[t]
        eps_prev = eps
    total += n * const
    if not math.isfinite(total):
        return 1e12
    return -total


def _density_constants(family: str, shape):
    """(code, nu, gamma, additive log-constant, raw location, raw scale)."""
    if family == "normal":
        return 0, 0.0, 1.0, -0.5 * _LOG_2PI, 0.0, 1.0
    nu = float(shape[0])
    lg = math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)
    if family == "t":
        return 1, nu, 1.0, lg - 0.5 * math.log(math.pi * (nu - 2)), 0.0, 1.0
    g = float(shape[1])
    # raw skewed-t moments, same closed forms as distributions.SkewedT
    k = math.exp(lg - 0.5 * math.log(nu * math.pi))
    m = 2 * k * nu / (nu - 1) * (g - 1 / g)
    var = (nu / (nu - 2) * (1 - 3 * g**2 / (1 + g**2) ** 2) - 4 * k**2 * (nu / (nu - 1)) ** 2 * (1 - 2 / (1 + g**2)) ** 2) * (g + 1 / g) ** 2
    sd = math.sqrt(var)
    return 2, nu, g, math.log(k) + math.log(sd) + math.log(2.0 / (g + 1.0 / g)), m, sd


def _negloglik(theta, x, family, presample_x, s2_init):
    c, phi, omega, alpha, beta, shape = _unpack(theta, family)
    code, nu, g, const, loc, scale = _density_constants(family, shape)
    return _negloglik_kernel(x, c, phi, omega, alpha, beta, presample_x, s2_init, code, nu, g, const, loc, scale)


def _moment_start(x: np.ndarray, family: str) -> np.ndarray:
    xl, xc = x[:-1], x[1:]
    vx = np.var(xl)
    phi = float(np.clip(np.cov(xl, xc, bias=True)[0, 1] / vx, -0.9, 0.9)) if vx > 0 else 0.0
    c = float(xc.mean() - phi * xl.mean())
    resid_var = float(np.var(xc - c - phi * xl))
    alpha, beta = 0.05, 0.90
    omega = max(resid_var * (1.0 - alpha - beta), 1e-10)
    shape = {"normal": (), "t": (8.0,), "skewed_t": (8.0, 1.0)}[family]
    return _pack(c, phi, omega, alpha, beta, shape, family)


class ArGarchFilter(BaseEstimator):
    """AR(1)-GARCH(1,1) filter fitted by maximum likelihood.

    Parameters
    ----------
    family : {"normal", "t", "skewed_t"}
        Innovation density, used in its unit-variance form.
    warm_start : bool
        Reuse the previous fit as an additional optimizer start, and fall back
        to it if the new fit does not converge.
    tol : float
        Convergence tolerance on the negative log-likelihood.
    max_fev : int
        Function-evaluation budget per optimizer start.

    The window's first observation uses the window mean as its presample
    value; the first conditional variance is the window's sample variance.
    """

    def __init__(self, family: str = "skewed_t", warm_start: bool = False, tol: float = 1e-8, max_fev: int = 4000):
        self.family = family
        self.warm_start = warm_start
        self.tol = tol
        self.max_fev = max_fev

    def _check_window(self, X):
        x = np.asarray(X, dtype=float).ravel()
        if x.size < 30:
            raise ValueError("window too short for an AR-GARCH fit")
        if not np.all(np.isfinite(x)):
            raise ValueError("window contains non-finite values")
        if np.var(x) <= 0:
            raise ValueError("window has zero variance; the likelihood is degenerate")
        return x

    def fit(self, X, y=None):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown innovation family {self.family!r}; choose from {FAMILIES}")
        x = self._check_window(X)
        presample = float(x.mean())
        s2_init = float(np.var(x))
        args = (x, self.family, presample, s2_init)
        starts = [_moment_start(x, self.family)]
        previous = getattr(self, "theta_", None) if self.warm_start else None
        if previous is not None and previous.size == starts[0].size:
            starts.insert(0, previous)
        best = None
        for s in starts:
            res = optimize.minimize(
                _negloglik, s, args=args, method="Nelder-Mead",
                options={"fatol": self.tol, "xatol": 1e-7, "maxfev": self.max_fev, "adaptive": True},
            )
            if best is None or res.fun < best.fun:
                best = res
        converged = bool(best.success and math.isfinite(best.fun) and best.fun < 1e11)
        self.n_fev_ = int(best.nfev)
        if not converged and previous is not None:
            warnings.warn("AR-GARCH fit did not converge; reusing the previous window's parameters", FilterFitWarning, stacklevel=2)
            theta = previous
        elif not converged:
            raise RuntimeError("AR-GARCH fit did not converge on the first window")
        else:
            theta = best.x
        self.converged_ = converged
        self.theta_ = np.asarray(theta, dtype=float)
        c, phi, omega, alpha, beta, shape = _unpack(self.theta_, self.family)
        self.params_ = ArGarchParams(c, phi, omega, alpha, beta, innovation_spec(self.family, shape))
        self.shape_ = shape
        mu, s2, eps = _filter(x, c, phi, omega, alpha, beta, presample, s2_init)
        self.mu_ = mu
        self.sigma_ = np.sqrt(s2)
        self.residuals_ = eps / self.sigma_
        self.loglik_ = -float(_negloglik(self.theta_, *args))
        self.last_x_ = float(x[-1])
        self.last_eps_ = float(eps[-1])
        self.last_s2_ = float(s2[-1])
        return self

    def transform(self, X):
        """Standardized residuals of a window under the fitted parameters."""
        check_is_fitted(self, "params_")
        x = self._check_window(X)
        p = self.params_
        mu, s2, eps = _filter(x, p.ar_intercept, p.ar_coef, p.garch_omega, p.garch_alpha, p.garch_beta, float(x.mean()), float(np.var(x)))
        return eps / np.sqrt(s2)

    def forecast_one_step(self) -> tuple[float, float]:
        """(mu, sigma) for the observation after the fitted window."""
        check_is_fitted(self, "params_")
        return forecast_one_step(self.params_, self.last_x_, self.last_eps_, self.last_s2_)


def forecast_one_step(params: ArGarchParams, last_x: float, last_eps: float, last_s2: float) -> tuple[float, float]:
    mu = params.ar_intercept + params.ar_coef * last_x
    s2 = params.garch_omega + params.garch_alpha * last_eps**2 + params.garch_beta * last_s2
    return mu, math.sqrt(s2)


def fit_ar_garch_mle(window, family: str = "skewed_t", previous: ArGarchFilter | None = None) -> ArGarchFilter:
    """Fit a filter to one window, optionally warm-started from a previous fit."""
    if np.asarray(window).size < 250:
        raise ValueError("AR-GARCH windows must contain at least 250 observations")
    if previous is not None:
        est = previous
        est.set_params(warm_start=True)
    else:
        est = ArGarchFilter(family=family)
    return est.fit(window)


# -- second stage: risk of the standardized innovations --------------------


def _level(level: float) -> float:
    if not (0.0 < level < 1.0):
        raise ValueError("level must lie strictly inside (0, 1)")
    return float(level)


def fp_risk(spec: DistributionSpec, functional: str, level: float):
    """Risk of a fitted innovation distribution: quantile, expectile, or
    (quantile, ES) for ``functional="vares"``."""
    level = _level(level)
    if functional == "var":
        return float(spec.quantile(level))
    if functional == "expectile":
        return float(spec.expectile(level))
    if functional == "vares":
        return float(spec.quantile(level)), float(spec.expected_shortfall(level))
    raise ValueError(f"unknown functional {functional!r}")


def empirical_quantile(z, level: float) -> float:
    """Inverse of the empirical CDF: the ceil(n * level)-th smallest value."""
    z = np.sort(np.asarray(z, dtype=float))
    n = z.size
    k = max(int(math.ceil(n * _level(level) - 1e-12)), 1)
    return float(z[k - 1])


def empirical_expectile(z, tau: float, method: str = "fixed_point", tol: float = 1e-10, max_iter: int = 500) -> float:
    """Sample tau-expectile.

    ``fixed_point`` iterates the asymmetric-weighted mean; ``exact`` solves the
    piecewise-linear first-order condition between order statistics.
    """
    tau = _level(tau)
    z = np.asarray(z, dtype=float).ravel()
    if z.size < 1:
        raise ValueError("need at least one observation")
    if method == "fixed_point":
        e = float(z.mean())
        for _ in range(max_iter):
            w = np.where(z > e, tau, 1.0 - tau)
            e_new = float(np.dot(w, z) / w.sum())
            if abs(e_new - e) <= tol:
                return e_new
            e = e_new
        raise ArithmeticError("expectile fixed-point iteration did not converge")
    if method == "exact":
        s = np.sort(z)
        n = s.size
        csum = np.concatenate([[0.0], np.cumsum(s)])
        total = csum[-1]
        # with j points at or below e: (1-tau)(j e - S_j) = tau((T - S_j) - (n - j) e)
        for j in range(1, n + 1):
            sj = csum[j]
            e = ((1 - tau) * sj + tau * (total - sj)) / ((1 - tau) * j + tau * (n - j))
            upper = s[j] if j < n else math.inf
            if s[j - 1] <= e <= upper:
                return float(e)
        raise ArithmeticError("no exact expectile bracket found")
    raise ValueError("method must be 'fixed_point' or 'exact'")


def fhs_risk(residuals, functional: str, level: float, n_resample: int | None = 10000, rng: np.random.Generator | None = None):
    """Filtered historical simulation on a bootstrap resample of the residuals.

    ``n_resample=None`` uses the residuals directly.
    """
    level = _level(level)
    z = np.asarray(residuals, dtype=float).ravel()
    if z.size < 2:
        raise ValueError("need at least two residuals")
    if n_resample is not None:
        rng = rng if rng is not None else np.random.default_rng()
        z = rng.choice(z, size=int(n_resample), replace=True)
    if functional == "var":
        return empirical_quantile(z, level)
    if functional == "expectile":
        return empirical_expectile(z, level)
    if functional == "vares":
        q = empirical_quantile(z, level)
        tail = z[z > q]
        if tail.size == 0:
            raise ValueError("no resampled residual exceeds the VaR estimate")
        return q, float(tail.mean())
    raise ValueError(f"unknown functional {functional!r}")


@dataclass(frozen=True)
class GpdFit:
    scale: float
    shape: float
    n: int
    loglik: float

    @property
    def stderr(self) -> tuple[float, float]:
        """Asymptotic standard errors of (scale, shape), valid for shape > -1/2."""
        xi = self.shape
        if xi <= -0.5:
            return math.nan, math.nan
        return self.scale * math.sqrt(2.0 * (1.0 + xi) / self.n), (1.0 + xi) / math.sqrt(self.n)


def _gpd_profile(theta: float, y: np.ndarray, ybar: float) -> tuple[float, float, float]:
    """Profile log-likelihood in theta = shape/scale; returns (loglik, scale, shape)."""
    n = y.size
    if abs(theta) * y.max() < 1e-10:
        return -n * math.log(ybar) - n, ybar, 0.0
    lg = np.log1p(theta * y)
    xi = float(lg.mean())
    scale = xi / theta
    if not scale > 0:
        return -math.inf, math.nan, math.nan
    return -n * math.log(scale) - n * (1.0 + xi), scale, xi


def gpd_fit_mle(excesses) -> GpdFit:
    """Maximum likelihood GPD fit, profiling the likelihood over shape/scale.

    The shape is kept above -1, where the likelihood is bounded.
    """
    y = np.asarray(excesses, dtype=float).ravel()
    if y.size < 10:
        raise ValueError("need at least 10 excesses for a GPD fit")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("excesses must be positive and finite")
    ybar, ymax = float(y.mean()), float(y.max())
    lo = -1.0 / ymax * (1.0 - 1e-6)
    hi = 50.0 / ybar

    def objective(t):
        ll, _, xi = _gpd_profile(t, y, ybar)
        if not math.isfinite(ll) or xi < -1.0:
            return math.inf
        return -ll

    # coarse grid in an asinh scale, then bounded refinement around the best cell
    grid = np.sinh(np.linspace(math.asinh(lo * ybar), math.asinh(hi * ybar), 241)) / ybar
    grid = np.clip(grid, lo, hi)
    vals = np.array([objective(t) for t in grid])
    i = int(np.argmin(vals))
    if not math.isfinite(vals[i]):
        raise ArithmeticError("GPD likelihood is not finite anywhere on the search grid")
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(objective, bounds=(a, b), method="bounded", options={"xatol": 1e-12 / ybar})
    t = res.x if res.fun <= vals[i] else grid[i]
    ll, scale, xi = _gpd_profile(t, y, ybar)
    return GpdFit(scale=scale, shape=xi, n=y.size, loglik=ll)


def default_tail_count(n: int) -> int:
    """60 exceedances for windows of 500, otherwise 12% of the sample."""
    return 60 if n == 500 else int(math.floor(0.12 * n))


@dataclass(frozen=True)
class EvtFit:
    threshold: float
    k: int
    n: int
    scale: float
    shape: float
    mean_below: float  # (1/n) * sum of residuals at or below the threshold
    residuals: np.ndarray = field(repr=False)

    @property
    def tail_fraction(self) -> float:
        return self.k / self.n


def evt_fit(residuals, k: int | None = None) -> EvtFit:
    """Fit a GPD to the k largest excesses over u = z_(k+1), the (k+1)-th largest value."""
    z = np.asarray(residuals, dtype=float).ravel()
    n = z.size
    k = default_tail_count(n) if k is None else int(k)
    if not (10 <= k < n):
        raise ValueError("tail count k must satisfy 10 <= k < n")
    desc = np.sort(z)[::-1]
    u = float(desc[k])
    excess = desc[:k] - u
    if np.any(excess <= 0):
        # ties at the threshold carry no tail information
        excess = excess[excess > 0]
    fit = gpd_fit_mle(excess)
    warn_if_heavy_shape(fit.shape)
    mean_below = float(desc[k:].sum() / n)
    return EvtFit(u, k, n, fit.scale, fit.shape, mean_below, z)


_XI_ZERO = 1e-8


def evt_var(fit: EvtFit, level: float) -> float:
    level = _level(level)
    ratio = fit.k / ((1.0 - level) * fit.n)
    xi = fit.shape
    if abs(xi) < _XI_ZERO:
        return fit.threshold + fit.scale * math.log(ratio)
    return fit.threshold + fit.scale / xi * (ratio**xi - 1.0)


def evt_es(fit: EvtFit, level: float) -> float:
    xi = fit.shape
    if xi >= 1:
        raise ValueError("EVT expected shortfall needs a tail shape below 1")
    v = evt_var(fit, level)
    return v / (1.0 - xi) + (fit.scale - xi * fit.threshold) / (1.0 - xi)


def evt_expectile_curve(fit: EvtFit, z):
    """Tail estimate of G(z) for z above the threshold."""
    xi, beta, u, p = fit.shape, fit.scale, fit.threshold, fit.tail_fraction
    if xi >= 1:
        raise ValueError("EVT expectile needs a tail shape below 1")
    z = np.asarray(z, dtype=float)
    y = np.maximum(z - u, 0.0)
    surv = GPD(beta, xi)._tail(y)
    c = fit.mean_below + p * (u + beta / (1.0 - xi))
    upper = p * surv * (beta + xi * y) / (1.0 - xi)
    lower = z - c + upper
    g = lower / (lower + upper)
    return float(g) if g.ndim == 0 else g


def evt_expectile(fit: EvtFit, tau: float) -> float:
    """Invert the tail estimate of G above the threshold; fall back to the
    sample expectile when G(u) >= tau or the curve is not monotone."""
    tau = _level(tau)
    u = fit.threshold
    g_u = float(evt_expectile_curve(fit, u))
    if g_u >= tau:
        return empirical_expectile(fit.residuals, tau)
    hi_end = u + fit.scale
    for _ in range(200):
        if float(evt_expectile_curve(fit, hi_end)) >= tau:
            break
        hi_end = u + 2.0 * (hi_end - u)
    else:
        return empirical_expectile(fit.residuals, tau)
    grid = np.linspace(u, hi_end, 64)
    if np.any(np.diff(evt_expectile_curve(fit, grid)) < 0):
        return empirical_expectile(fit.residuals, tau)
    return float(optimize.brentq(lambda s: float(evt_expectile_curve(fit, s)) - tau, u, hi_end, xtol=1e-12, rtol=1e-12))


def evt_risk(residuals, functional: str, level: float, k: int | None = None):
    fit = evt_fit(residuals, k)
    if functional == "var":
        return evt_var(fit, level)
    if functional == "expectile":
        return evt_expectile(fit, level)
    if functional == "vares":
        return evt_var(fit, level), evt_es(fit, level)
    raise ValueError(f"unknown functional {functional!r}")


# -- estimator wrappers ------------------------------------------------------


class ParametricRisk(BaseEstimator):
    """Risk of a given standardized innovation distribution (no estimation)."""

    def __init__(self, innovation: DistributionSpec | None = None):
        self.innovation = innovation

    def fit(self, X=None, y=None):
        self.innovation_ = self.innovation if self.innovation is not None else Normal(standardized=True)
        return self

    def risk(self, functional: str, level: float):
        check_is_fitted(self, "innovation_")
        return fp_risk(self.innovation_, functional, level)


class HistoricalSimulationRisk(BaseEstimator):
    """Empirical risk of (resampled) standardized residuals."""

    def __init__(self, n_resample: int | None = 10000, random_state=None):
        self.n_resample = n_resample
        self.random_state = random_state

    def fit(self, X, y=None):
        z = np.asarray(X, dtype=float).ravel()
        if z.size < 2:
            raise ValueError("need at least two residuals")
        if self.n_resample is not None:
            rng = np.random.default_rng(self.random_state)
            z = rng.choice(z, size=int(self.n_resample), replace=True)
        self.sample_ = z
        return self

    def risk(self, functional: str, level: float):
        check_is_fitted(self, "sample_")
        return fhs_risk(self.sample_, functional, level, n_resample=None)


class EvtRisk(BaseEstimator):
    """Peaks-over-threshold GPD tail fitted to standardized residuals."""

    def __init__(self, tail_count: int | None = None):
        self.tail_count = tail_count

    def fit(self, X, y=None):
        self.fit_ = evt_fit(X, self.tail_count)
        return self

    def risk(self, functional: str, level: float):
        check_is_fitted(self, "fit_")
        f = self.fit_
        if functional == "var":
            return evt_var(f, level)
        if functional == "expectile":
            return evt_expectile(f, level)
        if functional == "vares":
            return evt_var(f, level), evt_es(f, level)
        raise ValueError(f"unknown functional {functional!r}")
