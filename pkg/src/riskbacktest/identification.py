"""Identification functions V(r, x) for VaR, expectiles and (VaR, ES).

Exceedances are strict (``x > r``); a loss equal to the forecast counts as
no exceedance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .distributions import DistributionSpec
from .scoring import FUNCTIONALS

__all__ = ["IdentificationSpec", "identify", "expected_identification"]


@dataclass(frozen=True)
class IdentificationSpec:
    functional: str
    level: float

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValueError(f"unknown functional {self.functional!r}")
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must lie strictly inside (0, 1)")

    @property
    def dimension(self) -> int:
        return 2 if self.functional == "vares" else 1


def _pair(forecast):
    if isinstance(forecast, tuple) and len(forecast) == 2:
        r1, r2 = forecast
    else:
        arr = np.asarray(forecast, dtype=float)
        if arr.shape[-1] != 2:
            raise ValueError("VaR-ES forecasts need a trailing axis of length 2")
        r1, r2 = arr[..., 0], arr[..., 1]
    return np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)


def identify(spec: IdentificationSpec, forecast, x) -> np.ndarray:
    """V(forecast, x). Shape is broadcast(forecast, x) with a trailing axis of
    length ``spec.dimension``."""
    x = np.asarray(x, dtype=float)
    a = spec.level
    if spec.functional == "vares":
        r1, r2 = _pair(forecast)
        exc = (x > r1).astype(float)
        v1 = 1.0 - a - exc
        v2 = r1 - r2 - exc * (r1 - x) / (1.0 - a)
        v1, v2 = np.broadcast_arrays(v1, v2)
        return np.stack([v1, v2], axis=-1)
    r = np.asarray(forecast, dtype=float)
    exc = (x > r).astype(float)
    if spec.functional == "var":
        v = 1.0 - a - exc + np.zeros_like(r)
    else:
        v = np.abs(1.0 - a - exc) * (r - x)
    return v[..., None]


def expected_identification(spec: IdentificationSpec, dist: DistributionSpec, forecast) -> np.ndarray:
    """E V(forecast, X) for X ~ dist, using exact CDF terms where available and
    quadrature for the tail integrals."""
    a = spec.level
    if spec.functional == "var":
        r = float(np.asarray(forecast))
        return np.array([1.0 - a - (1.0 - float(dist.cdf(r)))])
    if spec.functional == "expectile":
        r = float(np.asarray(forecast))
        # E[(r - X)] restricted to each side of r
        F = float(dist.cdf(r))
        M = float(dist.partial_moment(r))
        mu = dist.mean()
        below = r * F - M
        above = (mu - M) - r * (1.0 - F)
        return np.array([(1.0 - a) * below - a * above])
    r1, r2 = (float(v) for v in _pair(forecast))
    F = float(dist.cdf(r1))
    lo, hi = dist.support()
    start = max(r1, lo)
    tail, err = integrate.quad(lambda y: (y - r1) * float(dist.pdf(y)), start, hi, epsabs=1e-13, epsrel=1e-11, limit=500)
    if not math.isfinite(tail):
        raise ArithmeticError("tail integral did not converge")
    return np.array([1.0 - a - (1.0 - F), r1 - r2 + tail / (1.0 - a)])
