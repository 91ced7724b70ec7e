"""Parametric loss/innovation distributions with the quantities needed for
risk-measure work: quantiles, partial moments, expectile curves and expected
shortfall.

Every family is a frozen dataclass. Setting ``standardized=True`` applies the
location-scale map to mean zero and unit variance; all methods then refer to
the standardized variable.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

__all__ = [
    "DistributionSpec",
    "Normal",
    "Exponential",
    "StudentT",
    "Pareto",
    "GPD",
    "SkewedT",
    "AST",
    "MomentError",
    "pdf",
    "cdf",
    "quantile",
    "partial_moment",
    "mean",
    "variance",
    "expectile_curve",
    "generic_expectile_curve",
    "omega_ratio",
    "expectile",
    "expected_shortfall",
    "sample",
]

_ROOT_TOL = 1e-10
_ROOT_MAXITER = 200
_QUAD_EPSREL = 1e-9


class MomentError(ValueError):
    """Raised when a requested moment does not exist for the distribution."""


def _t_pdf(x, df):
    x = np.asarray(x, dtype=float)
    logc = special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi)
    return np.exp(logc - (df + 1) / 2 * np.log1p(x * x / df))


def _t_const(df):
    # K(nu) = Gamma((nu+1)/2) / (sqrt(pi nu) Gamma(nu/2))
    return math.exp(special.gammaln((df + 1) / 2) - special.gammaln(df / 2) - 0.5 * math.log(df * math.pi))


def _t_partial_moment(z, df):
    z = np.asarray(z, dtype=float)
    return -(df + z * z) / (df - 1) * _t_pdf(z, df)


def _check_prob(p, name="p"):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any(np.isnan(p)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return p


def _scalar_or_array(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class DistributionSpec:
    """Base class; concrete families implement the raw (unstandardized) hooks."""

    standardized: bool = field(default=False, kw_only=True)

    # -- hooks implemented by families, on the raw scale -------------------
    def _pdf(self, x):
        raise NotImplementedError

    def _cdf(self, x):
        raise NotImplementedError

    def _ppf(self, p):
        raise NotImplementedError

    def _pm(self, z):
        raise NotImplementedError

    def _mean(self) -> float:
        raise NotImplementedError

    def _var(self) -> float:
        raise NotImplementedError

    def _support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def _has_mean(self) -> bool:
        return True

    def _g(self, z):
        # generic formula via partial moments; families override with closed forms
        return _g_from_parts(z, self._cdf(z), self._pm(z), self._mean())

    # -- standardization ---------------------------------------------------
    @cached_property
    def _loc_scale(self) -> tuple[float, float]:
        if not self.standardized:
            return 0.0, 1.0
        m = self._mean()
        v = self._var()
        if not np.isfinite(v):
            raise MomentError("standardization requires a finite variance")
        return m, math.sqrt(v)

    def _to_raw(self, x):
        m, s = self._loc_scale
        return m + s * np.asarray(x, dtype=float)

    # -- public API ----------------------------------------------------------
    def support(self) -> tuple[float, float]:
        lo, hi = self._support()
        m, s = self._loc_scale
        return (lo - m) / s, (hi - m) / s

    def pdf(self, x):
        _, s = self._loc_scale
        return _scalar_or_array(s * self._pdf(self._to_raw(x)))

    def cdf(self, x):
        return _scalar_or_array(self._cdf(self._to_raw(x)))

    def quantile(self, p):
        p = _check_prob(p)
        m, s = self._loc_scale
        return _scalar_or_array((self._ppf(p) - m) / s)

    def mean(self) -> float:
        if not self._has_mean():
            raise MomentError(f"{type(self).__name__} has no finite mean for these parameters")
        return 0.0 if self.standardized else float(self._mean())

    def variance(self) -> float:
        if not self._has_mean():
            raise MomentError(f"{type(self).__name__} has no finite mean for these parameters")
        if self.standardized:
            return 1.0
        v = self._var()
        if not np.isfinite(v):
            raise MomentError(f"{type(self).__name__} has no finite variance for these parameters")
        return float(v)

    def partial_moment(self, z):
        """M(z) = E[X 1{X <= z}]."""
        if not self._has_mean():
            raise MomentError("partial moment requires a finite mean")
        m, s = self._loc_scale
        y = self._to_raw(z)
        return _scalar_or_array((self._pm(y) - m * self._cdf(y)) / s)

    def expectile_curve(self, z):
        """G(z), whose inverse is the expectile function."""
        if not self._has_mean():
            raise MomentError("expectile curve requires a finite mean")
        return _scalar_or_array(self._g(self._to_raw(z)))

    def omega_ratio(self, z):
        return _scalar_or_array(1.0 / np.asarray(self.expectile_curve(z)) - 1.0)

    def expectile(self, tau: float) -> float:
        tau = float(_check_prob(tau, "tau"))
        if not self._has_mean():
            raise MomentError("expectile requires a finite mean")
        m, s = self._loc_scale
        return (_invert_g(self, tau) - m) / s

    def expected_shortfall(self, level: float) -> float:
        """E(X | X >= VaR_level) by adaptive quadrature of the upper tail."""
        level = float(_check_prob(level, "level"))
        if not self._has_mean():
            raise MomentError("expected shortfall requires a finite mean")
        q = float(self._ppf(level))
        _, hi = self._support()
        val, err = integrate.quad(
            lambda y: y * self._pdf(y), q, hi, epsabs=0.0, epsrel=_QUAD_EPSREL, limit=500
        )
        if not np.isfinite(val):
            raise ArithmeticError("expected shortfall integral did not converge")
        es = val / (1.0 - level)
        m, s = self._loc_scale
        return (es - m) / s

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        u = rng.random(n)
        # guard the open interval required by quantile
        u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
        return np.asarray(self.quantile(u), dtype=float)


def _g_from_parts(z, F, M, mu):
    z = np.asarray(z, dtype=float)
    lower = z * F - M
    with np.errstate(invalid="ignore", divide="ignore"):
        g = lower / (2.0 * lower + mu - z)
    return np.clip(np.where(np.isfinite(g), g, np.where(z > mu, 1.0, 0.0)), 0.0, 1.0)


def _invert_g(spec: DistributionSpec, tau: float) -> float:
    """Bisection on the raw-scale G curve with geometric bracket expansion."""
    mu = spec._mean()
    v = spec._var()
    sd = math.sqrt(v) if np.isfinite(v) and v > 0 else 1.0
    lo_s, hi_s = spec._support()
    lo, hi = mu - sd, mu + sd
    step = sd
    for _ in range(200):
        if lo <= lo_s or float(spec._g(lo)) <= tau:
            break
        step *= 2.0
        lo = mu - step
    else:
        raise ArithmeticError("could not bracket the expectile from below")
    step = sd
    for _ in range(200):
        if hi >= hi_s or float(spec._g(hi)) >= tau:
            break
        step *= 2.0
        hi = mu + step
    else:
        raise ArithmeticError("could not bracket the expectile from above")
    lo, hi = max(lo, lo_s), min(hi, hi_s)
    for _ in range(_ROOT_MAXITER):
        mid = 0.5 * (lo + hi)
        if float(spec._g(mid)) < tau:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _ROOT_TOL:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Normal(DistributionSpec):
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError("Normal sigma must be positive")

    def _pdf(self, x):
        u = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * u * u) / (math.sqrt(2 * math.pi) * self.sigma)

    def _cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    def _ppf(self, p):
        return self.mu + self.sigma * special.ndtri(p)

    def _pm(self, z):
        u = (np.asarray(z, dtype=float) - self.mu) / self.sigma
        phi = np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        return self.mu * special.ndtr(u) - self.sigma * phi

    def _mean(self):
        return self.mu

    def _var(self):
        return self.sigma**2

    def _g(self, z):
        d = np.asarray(z, dtype=float) - self.mu
        u = d / self.sigma
        phi = np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        Phi = special.ndtr(u)
        num = self.sigma * phi + d * Phi
        return np.clip(num / (2 * self.sigma * phi + d * (2 * Phi - 1)), 0.0, 1.0)


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float = 1.0

    def __post_init__(self):
        if not (self.rate > 0):
            raise ValueError("Exponential rate must be positive")

    def _support(self):
        return (0.0, math.inf)

    def _pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    def _ppf(self, p):
        return -np.log1p(-p) / self.rate

    def _pm(self, z):
        z = np.maximum(np.asarray(z, dtype=float), 0.0)
        inv = 1.0 / self.rate
        return inv - (z + inv) * np.exp(-self.rate * z)

    def _mean(self):
        return 1.0 / self.rate

    def _var(self):
        return 1.0 / self.rate**2

    def _g(self, z):
        z = np.asarray(z, dtype=float)
        zz = np.maximum(z, 0.0)
        inv = 1.0 / self.rate
        e = np.exp(-self.rate * zz)
        g = (zz - inv + inv * e) / (zz - inv + 2 * inv * e)
        return np.where(z > 0, np.clip(g, 0.0, 1.0), 0.0)


@dataclass(frozen=True)
class StudentT(DistributionSpec):
    df: float

    def __post_init__(self):
        if not (self.df > 1):
            raise ValueError("StudentT requires df > 1")

    def _pdf(self, x):
        return _t_pdf(x, self.df)

    def _cdf(self, x):
        return special.stdtr(self.df, np.asarray(x, dtype=float))

    def _ppf(self, p):
        return special.stdtrit(self.df, p)

    def _pm(self, z):
        return _t_partial_moment(z, self.df)

    def _mean(self):
        return 0.0

    def _var(self):
        return self.df / (self.df - 2) if self.df > 2 else math.inf

    def _g(self, z):
        z = np.asarray(z, dtype=float)
        nu = self.df
        a = (nu + z * z) / (nu - 1) * _t_pdf(z, nu)
        T = special.stdtr(nu, z)
        return np.clip((a + z * T) / (2 * a + z * (2 * T - 1)), 0.0, 1.0)


@dataclass(frozen=True)
class Pareto(DistributionSpec):
    """Pareto with density alpha / x**(alpha + 1) on x >= 1."""

    alpha: float

    def __post_init__(self):
        if not (self.alpha > 1):
            raise ValueError("Pareto requires alpha > 1")

    def _support(self):
        return (1.0, math.inf)

    def _pdf(self, x):
        x = np.asarray(x, dtype=float)
        xx = np.maximum(x, 1.0)
        return np.where(x >= 1, self.alpha * xx ** (-self.alpha - 1), 0.0)

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 1, 1.0 - np.maximum(x, 1.0) ** (-self.alpha), 0.0)

    def _ppf(self, p):
        return (1.0 - p) ** (-1.0 / self.alpha)

    def _pm(self, z):
        z = np.maximum(np.asarray(z, dtype=float), 1.0)
        a = self.alpha
        return a / (a - 1) * (1.0 - z ** (1 - a))

    def _mean(self):
        return self.alpha / (self.alpha - 1)

    def _var(self):
        a = self.alpha
        return a / ((a - 1) ** 2 * (a - 2)) if a > 2 else math.inf

    def _g(self, z):
        z = np.asarray(z, dtype=float)
        zz = np.maximum(z, 1.0)
        a = self.alpha
        F = 1.0 - zz ** (-a)
        g = (a * (1 - zz) + zz * F) / (a * (1 - zz) + zz * (2 * F - 1))
        return np.where(z > 1, np.clip(g, 0.0, 1.0), 0.0)


@dataclass(frozen=True)
class GPD(DistributionSpec):
    """Generalized Pareto GP(scale, shape); shape -> 0 is the exponential limit."""

    scale: float
    shape: float

    _XI_ZERO = 1e-8

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError("GPD scale must be positive")

    @property
    def _expo(self) -> bool:
        return abs(self.shape) < self._XI_ZERO

    def _support(self):
        if self.shape < 0 and not self._expo:
            return (0.0, -self.scale / self.shape)
        return (0.0, math.inf)

    def _has_mean(self):
        return self.shape < 1

    def _tail(self, y):
        # survival function on the support
        y = np.asarray(y, dtype=float)
        lo, hi = self._support()
        yy = np.clip(y, lo, hi)
        if self._expo:
            s = np.exp(-yy / self.scale)
        else:
            s = np.maximum(1.0 + self.shape * yy / self.scale, 0.0) ** (-1.0 / self.shape)
        return np.where(y <= 0, 1.0, np.where(y >= hi, 0.0, s))

    def _pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self._support()
        xx = np.clip(x, lo, hi)
        if self._expo:
            d = np.exp(-xx / self.scale) / self.scale
        else:
            base = np.maximum(1.0 + self.shape * xx / self.scale, 1e-300)
            d = base ** (-1.0 / self.shape - 1.0) / self.scale
        return np.where((x >= 0) & (x <= hi), d, 0.0)

    def _cdf(self, x):
        return 1.0 - self._tail(x)

    def _ppf(self, p):
        if self._expo:
            return -self.scale * np.log1p(-p)
        return self.scale / self.shape * ((1.0 - p) ** (-self.shape) - 1.0)

    def _pm(self, z):
        # E[Y 1{Y <= z}] = scale/(1-xi) * (1 - (1 + z/scale) * Hbar(z))
        z = np.asarray(z, dtype=float)
        lo, hi = self._support()
        zz = np.clip(z, lo, hi)
        return self.scale / (1 - self.shape) * (1.0 - (1.0 + zz / self.scale) * self._tail(zz))

    def _mean(self):
        return self.scale / (1 - self.shape) if self.shape < 1 else math.inf

    def _var(self):
        xi = self.shape
        if xi >= 0.5:
            return math.inf
        return self.scale**2 / ((1 - xi) ** 2 * (1 - 2 * xi))

    def _g(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = self._support()
        zz = np.clip(z, lo, hi)
        s, xi = self.scale, self.shape
        H = 1.0 - self._tail(zz)
        g = (zz - (s + xi * zz) * H) / (s + zz * (1 + xi) - 2 * (s + xi * zz) * H)
        return np.where(z <= 0, 0.0, np.where(z >= hi, 1.0, np.clip(g, 0.0, 1.0)))


@dataclass(frozen=True)
class SkewedT(DistributionSpec):
    """Fernandez-Steel skewed Student t with shape ``df`` and skewness ``gamma``."""

    df: float
    gamma: float

    def __post_init__(self):
        if not (self.df > 2):
            raise ValueError("SkewedT requires df > 2")
        if not (self.gamma > 0):
            raise ValueError("SkewedT requires gamma > 0")

    @property
    def _norm(self):
        return 2.0 / (self.gamma + 1.0 / self.gamma)

    def _pdf(self, x):
        x = np.asarray(x, dtype=float)
        g = self.gamma
        return self._norm * np.where(x <= 0, _t_pdf(g * x, self.df), _t_pdf(x / g, self.df))

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        g, nu = self.gamma, self.df
        lower = 2.0 / (g * g + 1) * special.stdtr(nu, g * x)
        upper = 1.0 / (1 + g * g) + 2 * g * g / (g * g + 1) * (special.stdtr(nu, x / g) - 0.5)
        return np.where(x <= 0, lower, upper)

    def _ppf(self, p):
        p = np.asarray(p, dtype=float)
        g, nu = self.gamma, self.df
        p0 = 1.0 / (1 + g * g)
        lo = special.stdtrit(nu, np.minimum(p, p0) * (1 + g * g) / 2) / g
        hi = g * special.stdtrit(nu, 0.5 + np.maximum(p - p0, 0.0) * (1 + g * g) / (2 * g * g))
        return np.where(p <= p0, lo, hi)

    def _f0(self):
        return self._norm * _t_const(self.df)

    def _pm(self, z):
        z = np.asarray(z, dtype=float)
        g, nu = self.gamma, self.df
        f = self._pdf(z)
        neg = -(nu / g**2 + z * z) / (nu - 1) * f
        pos = -(nu * g**2 + z * z) / (nu - 1) * f + nu / (nu - 1) * (g**2 - 1 / g**2) * self._f0()
        return np.where(z < 0, neg, pos)

    def _mean(self):
        nu, g = self.df, self.gamma
        return 2 * _t_const(nu) * nu / (nu - 1) * (g - 1 / g)

    def _var(self):
        nu, g = self.df, self.gamma
        if nu <= 2:
            return math.inf
        K = _t_const(nu)
        return (
            nu / (nu - 2) * (1 - 3 * g**2 / (1 + g**2) ** 2)
            - 4 * K**2 * (nu / (nu - 1)) ** 2 * (1 - 2 / (1 + g**2)) ** 2
        ) * (g + 1 / g) ** 2

    def _g(self, z):
        z = np.asarray(z, dtype=float)
        g, nu = self.gamma, self.df
        F, f, mu = self._cdf(z), self._pdf(z), self._mean()
        a_neg = z * F + (nu / g**2 + z * z) / (nu - 1) * f
        a_pos = z * F + (nu * g**2 + z * z) / (nu - 1) * f - nu / (nu - 1) * (g**2 - 1 / g**2) * self._f0()
        a = np.where(z < 0, a_neg, a_pos)
        return np.clip(a / (2 * a + mu - z), 0.0, 1.0)


@dataclass(frozen=True)
class AST(DistributionSpec):
    """Asymmetric Student t with skewness ``skew`` in (0,1) and tail shapes
    ``df_lower``/``df_upper``."""

    skew: float
    df_lower: float
    df_upper: float

    def __post_init__(self):
        if not (0 < self.skew < 1):
            raise ValueError("AST skew must lie in (0, 1)")
        if not (self.df_lower > 2 and self.df_upper > 2):
            raise ValueError("AST shape parameters must exceed 2")

    @cached_property
    def _consts(self):
        a = self.skew
        k1, k2 = _t_const(self.df_lower), _t_const(self.df_upper)
        B = a * k1 + (1 - a) * k2
        return a * k1 / B, B

    def _pdf(self, x):
        x = np.asarray(x, dtype=float)
        a = self.skew
        astar, _ = self._consts
        lo = a / astar * _t_pdf(x / (2 * astar), self.df_lower)
        hi = (1 - a) / (1 - astar) * _t_pdf(x / (2 * (1 - astar)), self.df_upper)
        return np.where(x <= 0, lo, hi)

    def _cdf(self, x):
        x = np.asarray(x, dtype=float)
        a = self.skew
        astar, _ = self._consts
        lo = 2 * a * special.stdtr(self.df_lower, x / (2 * astar))
        hi = a + 2 * (1 - a) * (special.stdtr(self.df_upper, x / (2 * (1 - astar))) - 0.5)
        return np.where(x <= 0, lo, hi)

    def _ppf(self, p):
        p = np.asarray(p, dtype=float)
        a = self.skew
        astar, _ = self._consts
        lo = 2 * astar * special.stdtrit(self.df_lower, np.minimum(p, a) / (2 * a))
        hi = 2 * (1 - astar) * special.stdtrit(self.df_upper, 0.5 + np.maximum(p - a, 0.0) / (2 * (1 - a)))
        return np.where(p <= a, lo, hi)

    def _pm(self, z):
        z = np.asarray(z, dtype=float)
        astar, B = self._consts
        n1, n2 = self.df_lower, self.df_upper
        f = self._pdf(z)
        c1 = astar**2 * n1 / (n1 - 1)
        c2 = (1 - astar) ** 2 * n2 / (n2 - 1)
        neg = -4 * c1 * (1 + (z / (2 * astar)) ** 2 / n1) * f
        pos = -4 * c2 * (1 + (z / (2 * (1 - astar))) ** 2 / n2) * f + 4 * B * (c2 - c1)
        return np.where(z <= 0, neg, pos)

    def _mean(self):
        astar, B = self._consts
        n1, n2 = self.df_lower, self.df_upper
        return 4 * B * (-(astar**2) * n1 / (n1 - 1) + (1 - astar) ** 2 * n2 / (n2 - 1))

    def _var(self):
        a = self.skew
        astar, _ = self._consts
        n1, n2 = self.df_lower, self.df_upper
        return 4 * (a * astar**2 * n1 / (n1 - 2) + (1 - a) * (1 - astar) ** 2 * n2 / (n2 - 2)) - self._mean() ** 2


# -- module-level functional interface ------------------------------------


def pdf(spec: DistributionSpec, x):
    return spec.pdf(x)


def cdf(spec: DistributionSpec, x):
    return spec.cdf(x)


def quantile(spec: DistributionSpec, p):
    return spec.quantile(p)


def partial_moment(spec: DistributionSpec, z):
    return spec.partial_moment(z)


def mean(spec: DistributionSpec) -> float:
    return spec.mean()


def variance(spec: DistributionSpec) -> float:
    return spec.variance()


def expectile_curve(spec: DistributionSpec, z):
    return spec.expectile_curve(z)


def omega_ratio(spec: DistributionSpec, z):
    return spec.omega_ratio(z)


def expectile(spec: DistributionSpec, tau: float) -> float:
    return spec.expectile(tau)


def expected_shortfall(spec: DistributionSpec, level: float) -> float:
    return spec.expected_shortfall(level)


def sample(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return spec.sample(n, rng)


def generic_expectile_curve(spec: DistributionSpec, z: float) -> float:
    """G(z) from quadrature of the density alone.

    Independent of the closed-form curves; used to cross-check them.
    """
    if not spec._has_mean():
        raise MomentError("expectile curve requires a finite mean")
    lo, hi = spec.support()
    z = float(z)
    if z <= lo:
        return 0.0
    if z >= hi:
        return 1.0

    def tail_part(a, b, fn):
        if a >= b:
            return 0.0
        return integrate.quad(fn, a, b, epsabs=1e-13, epsrel=1e-11, limit=500)[0]

    # split at 0 as well: skewed families have a kink there
    def integral(a, b, fn):
        if a < 0 < b:
            return tail_part(a, 0.0, fn) + tail_part(0.0, b, fn)
        return tail_part(a, b, fn)

    below = integral(lo, z, lambda y: (z - y) * spec.pdf(y))
    above = integral(z, hi, lambda y: (y - z) * spec.pdf(y))
    return below / (below + above)


def warn_if_heavy_shape(xi: float, limit: float = 0.9) -> None:
    if xi > limit:
        warnings.warn(
            f"tail shape {xi:.3f} is close to 1; mean-based tail estimates are unstable",
            RuntimeWarning,
            stacklevel=3,
        )
