"""Traditional backtests built on identification functions.

Inputs are identification values ``V`` of shape ``(n, k)`` (or ``(n,)`` for
one-dimensional functionals) and test functions ``h`` of shape ``(n, q, k)``.
Rows whose test function contains NaN (e.g. the first lags of a dynamic
quantile design) are dropped before testing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

__all__ = [
    "CalibrationReport",
    "McNeilFreyResult",
    "CONDITION_LIMIT",
    "ONE_SIDED_DIRECTION",
    "hv_products",
    "two_sided_cct",
    "one_sided_cct",
    "hommel",
    "bonferroni",
    "hac_covariance",
    "average_calibration_test",
    "binomial_var_test",
    "mcneil_frey_statistic",
    "make_test_functions",
    "simple_test_functions",
    "general_test_functions",
]

CONDITION_LIMIT = 1e12

# orientation of the one-sided tests per functional
ONE_SIDED_DIRECTION = {"var": "super", "expectile": "super", "vares": "sub"}


@dataclass(frozen=True)
class CalibrationReport:
    statistic: float | np.ndarray | None
    df: int
    p_value: float | None
    per_component_p: np.ndarray | None = None
    p_hommel: float | None = None
    p_bonferroni: float | None = None
    reject: bool | None = None
    degenerate: bool = False
    reason: str = ""
    n: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def degenerate_report(cls, df: int, reason: str, n: int) -> "CalibrationReport":
        return cls(statistic=None, df=df, p_value=None, degenerate=True, reason=reason, n=n)


def _as_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise ValueError("identification values must have shape (n,) or (n, k)")
    return v


def _as_h(h, n: int, k: int) -> np.ndarray:
    if h is None:
        return np.broadcast_to(np.eye(k), (n, k, k))
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        # one scalar test function per time point
        h = h[:, None, None]
    elif h.ndim == 2:
        h = h[:, :, None] if k == 1 else h[:, None, :]
    if h.shape[0] != n or h.shape[2] != k:
        raise ValueError(f"test functions of shape {h.shape} do not match values (n={n}, k={k})")
    return h


def hv_products(values, h=None) -> np.ndarray:
    """Z_t = h_t V_t with shape (n, q); rows with NaN test functions removed."""
    v = _as_values(values)
    n, k = v.shape
    hh = _as_h(h, n, k)
    keep = ~np.isnan(hh).any(axis=(1, 2))
    return np.einsum("nqk,nk->nq", hh[keep], v[keep])


def _inverse_or_none(omega: np.ndarray):
    """Eigen-inverse of a symmetric PSD matrix, or a reason string if it is
    numerically singular."""
    if not np.all(np.isfinite(omega)):
        return None, "non-finite second-moment matrix"
    w, u = np.linalg.eigh(omega)
    top = w.max(initial=0.0)
    if top <= 0.0:
        return None, "zero second-moment matrix"
    if w.min() <= top / CONDITION_LIMIT:
        return None, f"second-moment matrix condition number exceeds {CONDITION_LIMIT:g}"
    return (u / w) @ u.T, ""


def two_sided_cct(values, h=None, eta: float = 0.05) -> CalibrationReport:
    """Wald-type conditional calibration test with chi-square(q) reference."""
    z = hv_products(values, h)
    n, q = z.shape
    if n < q + 1:
        raise ValueError(f"need at least q + 1 = {q + 1} usable observations, got {n}")
    omega = z.T @ z / n
    inv, reason = _inverse_or_none(omega)
    if inv is None:
        return CalibrationReport.degenerate_report(q, reason, n)
    zbar = z.mean(axis=0)
    t1 = float(n * zbar @ inv @ zbar)
    p = float(stats.chi2.sf(t1, q))
    return CalibrationReport(statistic=t1, df=q, p_value=p, reject=p <= eta, n=n)


def hommel(pvalues, eta: float = 0.05) -> tuple[bool, float]:
    """Hommel-type global test; returns (reject, adjusted p-value capped at 1)."""
    p = np.sort(np.asarray(pvalues, dtype=float))
    q = p.size
    cq = float(np.sum(1.0 / np.arange(1, q + 1)))
    m = np.arange(1, q + 1)
    reject = bool(np.any(p <= m * eta / (q * cq)))
    adjusted = min(1.0, float(q * cq * np.min(p / m)))
    return reject, adjusted


def bonferroni(pvalues, eta: float = 0.05) -> tuple[bool, float]:
    p = np.asarray(pvalues, dtype=float)
    q = p.size
    return bool(p.min() < eta / q), min(1.0, float(q * p.min()))


def _sym_inv_sqrt(omega: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(omega)
    return (u / np.sqrt(w)) @ u.T


def one_sided_cct(
    values,
    h=None,
    direction: str = "super",
    eta: float = 0.05,
    standardization: str = "diagonal",
) -> CalibrationReport:
    """One-sided conditional calibration test.

    ``direction="super"`` tests E[Z] >= 0 with component p-values Phi(T),
    ``"sub"`` tests E[Z] <= 0 with 1 - Phi(T). Components are standardized by
    the diagonal of the second-moment matrix unless ``standardization="full"``
    (symmetric inverse square root). The global decision uses Hommel's rule;
    ``p_value`` is the Hommel-adjusted p-value.
    """
    if direction not in ("super", "sub"):
        raise ValueError("direction must be 'super' or 'sub'")
    if standardization not in ("diagonal", "full"):
        raise ValueError("standardization must be 'diagonal' or 'full'")
    if h is not None and np.nanmin(np.asarray(h, dtype=float)) < 0:
        raise ValueError("one-sided tests need componentwise non-negative test functions")
    z = hv_products(values, h)
    n, q = z.shape
    if n < q + 1:
        raise ValueError(f"need at least q + 1 = {q + 1} usable observations, got {n}")
    omega = z.T @ z / n
    _, reason = _inverse_or_none(omega)
    if reason:
        return CalibrationReport.degenerate_report(q, reason, n)
    total = z.sum(axis=0) / math.sqrt(n)
    if standardization == "diagonal":
        t2 = total / np.sqrt(np.diag(omega))
    else:
        t2 = _sym_inv_sqrt(omega) @ total
    pi = special.ndtr(t2) if direction == "super" else special.ndtr(-t2)
    rej_h, p_h = hommel(pi, eta)
    _, p_b = bonferroni(pi, eta)
    return CalibrationReport(
        statistic=t2,
        df=q,
        p_value=p_h,
        per_component_p=pi,
        p_hommel=p_h,
        p_bonferroni=p_b,
        reject=rej_h,
        n=n,
        extra={"direction": direction, "standardization": standardization},
    )


def _bartlett_bandwidth(n: int) -> int:
    return int(math.floor(n ** (1.0 / 3.0)))


def hac_covariance(x, lag: int | str = 0) -> np.ndarray:
    """Centered long-run covariance with Bartlett weights.

    ``lag=0`` is the sample covariance; ``lag="auto"`` uses floor(n**(1/3)).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if lag == "auto":
        lag = _bartlett_bandwidth(n)
    lag = int(lag)
    if lag < 0:
        raise ValueError("HAC lag must be non-negative")
    d = x - x.mean(axis=0)
    s = d.T @ d / n
    for j in range(1, min(lag, n - 1) + 1):
        w = 1.0 - j / (lag + 1.0)
        g = d[j:].T @ d[:-j] / n
        s = s + w * (g + g.T)
    return s


def average_calibration_test(values, hac: int | str = 0, eta: float = 0.05) -> CalibrationReport:
    """Test of E[V] = 0 on average, chi-square(k) of the HAC-standardized mean."""
    v = _as_values(values)
    n, k = v.shape
    if n < 30:
        raise ValueError("average calibration test needs at least 30 observations")
    sigma = hac_covariance(v, hac)
    inv, reason = _inverse_or_none(sigma)
    if inv is None:
        return CalibrationReport.degenerate_report(k, reason, n)
    vbar = v.mean(axis=0)
    stat = float(n * vbar @ inv @ vbar)
    p = float(stats.chi2.sf(stat, k))
    extra = {}
    if k == 1:
        extra["z"] = float(math.sqrt(n) * vbar[0] / math.sqrt(sigma[0, 0]))
    return CalibrationReport(statistic=stat, df=k, p_value=p, reject=p <= eta, n=n, extra=extra)


def binomial_var_test(exceedances: int, n: int, alpha: float, side: str = "two", eta: float = 0.05) -> CalibrationReport:
    """Exact test on the number of VaR exceedances, Bin(n, 1 - alpha) under the null.

    ``super`` rejects for too many exceedances, ``sub`` for too few. The
    two-sided p-value sums all outcomes no more likely than the observed one.
    """
    if not (0 <= exceedances <= n):
        raise ValueError("exceedances must lie in [0, n]")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie strictly inside (0, 1)")
    dist = stats.binom(n, 1.0 - alpha)
    if side == "super":
        p = float(dist.sf(exceedances - 1))
    elif side == "sub":
        p = float(dist.cdf(exceedances))
    elif side == "two":
        pmf = dist.pmf(np.arange(n + 1))
        obs = pmf[exceedances]
        p = float(min(1.0, pmf[pmf <= obs * (1.0 + 1e-7)].sum()))
    else:
        raise ValueError("side must be 'two', 'super' or 'sub'")
    return CalibrationReport(
        statistic=float(exceedances), df=1, p_value=p, reject=p <= eta, n=n, extra={"side": side}
    )


@dataclass(frozen=True)
class McNeilFreyResult:
    statistic: float
    approximation: float
    n_exceedances: int


def mcneil_frey_statistic(x, r1, r2, sigma, level: float) -> McNeilFreyResult:
    """Mean standardized exceedance residual (x - r2) / sigma over VaR exceedances,
    plus the mean of h V under the matching test function for comparison."""
    x, r1, r2, sigma = (np.asarray(a, dtype=float) for a in (x, r1, r2, sigma))
    exc = x > r1
    m = int(exc.sum())
    if m == 0:
        raise ValueError("no VaR exceedances; the exceedance-residual statistic is undefined")
    stat = float(np.mean((x[exc] - r2[exc]) / sigma[exc]))
    v = np.stack([1.0 - level - exc, r1 - r2 - exc * (r1 - x) / (1.0 - level)], axis=-1)
    h = make_test_functions("mcneil_frey", "vares", (r1, r2), sigma=sigma, level=level)
    approx = float(hv_products(v, h).mean())
    return McNeilFreyResult(stat, approx, m)


def _forecast_parts(functional, forecasts):
    if functional == "vares":
        if isinstance(forecasts, tuple):
            r1, r2 = forecasts
        else:
            arr = np.asarray(forecasts, dtype=float)
            r1, r2 = arr[..., 0], arr[..., 1]
        return np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
    return np.asarray(forecasts, dtype=float), None


def make_test_functions(
    kind: str,
    functional: str,
    forecasts,
    *,
    sigma=None,
    level: float | None = None,
    values=None,
    lags: int = 1,
) -> np.ndarray:
    """Build test-function arrays of shape (n, q, k).

    kinds: ``constant``, ``var_standard`` (1, r), ``var_abs`` (1, |r|),
    ``dynamic_quantile`` (1, V lags, r), ``inverse_sigma``, ``mcneil_frey``,
    ``one_sided_block`` (the 4 x 2 block design for VaR-ES).
    """
    r, r2 = _forecast_parts(functional, forecasts)
    n = r.shape[0]
    k = 2 if functional == "vares" else 1

    def need_sigma():
        if sigma is None:
            raise ValueError(f"test function {kind!r} needs the volatility forecasts")
        return np.asarray(sigma, dtype=float)

    if kind == "constant":
        return np.broadcast_to(np.eye(k), (n, k, k)).copy()
    if kind == "var_standard":
        return np.stack([np.ones(n), r], axis=1)[:, :, None]
    if kind == "var_abs":
        return np.stack([np.ones(n), np.abs(r)], axis=1)[:, :, None]
    if kind == "dynamic_quantile":
        if values is None:
            raise ValueError("dynamic quantile design needs past identification values")
        v = np.asarray(values, dtype=float).reshape(n)
        cols = [np.ones(n)]
        for j in range(1, lags + 1):
            lagged = np.full(n, np.nan)
            lagged[j:] = v[:-j]
            cols.append(lagged)
        cols.append(r)
        return np.stack(cols, axis=1)[:, :, None]
    if kind == "inverse_sigma":
        s = need_sigma()
        if k == 1:
            return (1.0 / s)[:, None, None]
        return (np.eye(2)[None] / s[:, None, None])
    if kind == "mcneil_frey":
        if functional != "vares" or level is None:
            raise ValueError("mcneil_frey test function applies to VaR-ES and needs the level")
        s = need_sigma()
        return (np.stack([(r2 - r) / (1.0 - level), np.ones(n)], axis=1) / s[:, None])[:, None, :]
    if kind == "one_sided_block":
        if functional != "vares":
            raise ValueError("one_sided_block applies to VaR-ES")
        s = need_sigma()
        h = np.zeros((n, 4, 2))
        h[:, 0, 0] = 1.0
        h[:, 1, 0] = np.abs(r)
        h[:, 2, 1] = 1.0
        h[:, 3, 1] = 1.0 / s
        return h
    raise ValueError(f"unknown test function kind {kind!r}")


def simple_test_functions(functional: str, forecasts) -> np.ndarray:
    return make_test_functions("constant", functional, forecasts)


def general_test_functions(functional: str, forecasts, sigma, level: float, one_sided: bool = False) -> np.ndarray:
    """The general designs used for the simulation backtests."""
    if functional == "var":
        return make_test_functions("var_abs" if one_sided else "var_standard", functional, forecasts)
    if functional == "expectile":
        return make_test_functions("inverse_sigma", functional, forecasts, sigma=sigma)
    if one_sided:
        return make_test_functions("one_sided_block", functional, forecasts, sigma=sigma)
    return make_test_functions("mcneil_frey", functional, forecasts, sigma=sigma, level=level)
