"""Strictly consistent scoring functions for VaR, expectiles and the
(VaR, ES) pair, in the loss convention (large positive values are bad).

A :class:`ScoreSpec` picks the functional, its level and the generator
function(s). Scores are vectorized over forecasts and losses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from .distributions import DistributionSpec

__all__ = [
    "FUNCTIONALS",
    "GENERATORS",
    "ScoreDomainError",
    "ScoreSpec",
    "HomogeneityReport",
    "score",
    "score_difference",
    "expected_score",
    "validate_homogeneity",
    "default_scores",
]

FUNCTIONALS = ("var", "expectile", "vares")

GENERATORS = {
    "var": ("linear", "log", "power"),
    "expectile": ("quadratic", "neglog", "power", "xlogx"),
    "vares": ("sqrt", "log", "power", "fzg"),
}


class ScoreDomainError(ValueError):
    """A forecast (or loss) lies outside the domain of the chosen generator."""


@dataclass(frozen=True)
class ScoreSpec:
    """Descriptor of a consistent scoring function.

    ``power`` is only used by the ``"power"`` generator and sets the
    homogeneity degree of the score.
    """

    functional: str
    level: float
    generator: str
    power: float | None = None

    def __post_init__(self):
        if self.functional not in FUNCTIONALS:
            raise ValueError(f"unknown functional {self.functional!r}")
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must lie strictly inside (0, 1)")
        if self.generator not in GENERATORS[self.functional]:
            raise ValueError(
                f"generator {self.generator!r} is not available for {self.functional}; "
                f"choose from {GENERATORS[self.functional]}"
            )
        if self.generator == "power":
            b = self.power
            if b is None or not math.isfinite(b):
                raise ValueError("the power generator needs a finite degree")
            if self.functional == "var" and b == 0:
                raise ValueError("VaR power degree must be non-zero; use the log generator for 0")
            if self.functional == "expectile" and b in (0.0, 1.0):
                raise ValueError("expectile power degree must differ from 0 and 1")
            if self.functional == "vares" and not (b < 0 or 0 < b < 1):
                raise ValueError("VaR-ES power degree must lie in (-inf, 0) or (0, 1)")

    @property
    def dimension(self) -> int:
        return 2 if self.functional == "vares" else 1

    @property
    def homogeneity(self) -> tuple[float | None, bool]:
        """(degree, differences_only). ``None`` degree means no homogeneity claim."""
        g = self.generator
        if g in ("log", "neglog"):
            return 0.0, True
        if g == "xlogx":
            return 1.0, True
        if g == "fzg":
            return None, False
        fixed = {"linear": 1.0, "quadratic": 2.0, "sqrt": 0.5}
        return fixed.get(g, self.power), False

    @property
    def requires_positive(self) -> bool:
        """Whether forecasts (r, or r2 for VaR-ES) must be strictly positive."""
        g = self.generator
        if g in ("log", "neglog", "xlogx", "sqrt"):
            return True
        if g == "power":
            b = self.power
            if self.functional == "var":
                return b < 0
            if self.functional == "expectile":
                return b < 1
            return True
        return False

    def label(self) -> str:
        if self.generator == "power":
            return f"{self.functional}:{self.level:g}:power({self.power:g})"
        return f"{self.functional}:{self.level:g}:{self.generator}"


class _VarGen(NamedTuple):
    G: Callable


class _ExpGen(NamedTuple):
    phi: Callable
    dphi: Callable


class _VarEsGen(NamedTuple):
    G1: Callable
    G2: Callable  # derivative of cal_G2
    cal_G2: Callable


def _signed_power(x, b):
    return np.sign(x) * np.abs(x) ** b


def _pos_power(x, b):
    # only used on strictly positive arguments; masked entries are replaced
    return np.where(x > 0, np.abs(x), 1.0) ** b


def _safe_log(x):
    return np.log(np.where(x > 0, x, 1.0))


def _generator(spec: ScoreSpec):
    f, g, b = spec.functional, spec.generator, spec.power
    if f == "var":
        if g == "linear":
            return _VarGen(lambda x: x)
        if g == "log":
            return _VarGen(_safe_log)
        if b > 0:
            return _VarGen(lambda x: _signed_power(x, b))
        return _VarGen(lambda x: -_pos_power(x, b))
    if f == "expectile":
        if g == "quadratic":
            return _ExpGen(lambda x: x * x, lambda x: 2.0 * x)
        if g == "neglog":
            return _ExpGen(lambda x: -_safe_log(x), lambda x: -1.0 / np.where(x > 0, x, 1.0))
        if g == "xlogx":
            return _ExpGen(lambda x: x * _safe_log(x), lambda x: _safe_log(x) + 1.0)
        if b > 1:
            return _ExpGen(
                lambda x: np.abs(x) ** b, lambda x: b * _signed_power(x, b - 1.0)
            )
        return _ExpGen(
            lambda x: _pos_power(x, b) / (b * (b - 1.0)),
            lambda x: _pos_power(x, b - 1.0) / (b - 1.0),
        )
    zero = lambda x: np.zeros_like(x)  # noqa: E731
    if g == "sqrt":
        return _VarEsGen(zero, lambda x: 0.5 / np.sqrt(np.where(x > 0, x, 1.0)), lambda x: np.sqrt(np.maximum(x, 0.0)))
    if g == "log":
        return _VarEsGen(zero, lambda x: 1.0 / np.where(x > 0, x, 1.0), _safe_log)
    if g == "fzg":
        # G1 identity and a logistic-derivative G2 on the loss scale
        nu = spec.level
        return _VarEsGen(
            lambda x: x,
            lambda x: 1.0 / ((1.0 - nu) * (1.0 + np.exp(x))),
            lambda x: -np.logaddexp(0.0, -x) / (1.0 - nu),
        )
    c0 = 1.0
    if b > 0:
        return _VarEsGen(
            lambda x: _signed_power(x, b) - c0,
            lambda x: b * _pos_power(x, b - 1.0),
            lambda x: _pos_power(x, b) + c0,
        )
    return _VarEsGen(
        lambda x: np.full_like(x, -c0),
        lambda x: -b * _pos_power(x, b - 1.0),
        lambda x: -_pos_power(x, b) + c0,
    )


def _split_forecast(spec: ScoreSpec, forecast):
    if spec.functional == "vares":
        if isinstance(forecast, tuple) and len(forecast) == 2:
            r1, r2 = forecast
        else:
            arr = np.asarray(forecast, dtype=float)
            if arr.shape[-1] != 2:
                raise ValueError("VaR-ES forecasts need a trailing axis of length 2")
            r1, r2 = arr[..., 0], arr[..., 1]
        return np.asarray(r1, dtype=float), np.asarray(r2, dtype=float)
    return np.asarray(forecast, dtype=float), None


def _check_domain(spec: ScoreSpec, r, r2):
    if not spec.requires_positive:
        return
    target = r2 if spec.functional == "vares" else r
    if np.any(~(target > 0)):
        what = "r2" if spec.functional == "vares" else "r"
        raise ScoreDomainError(
            f"{spec.label()} needs strictly positive forecasts ({what}); got min {np.nanmin(target):.6g}"
        )


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def score(spec: ScoreSpec, forecast, x):
    """Evaluate the score S(forecast, x).

    For VaR-ES the forecast is a pair ``(r1, r2)`` or an array with a
    trailing axis of length 2.
    """
    r, r2 = _split_forecast(spec, forecast)
    x = np.asarray(x, dtype=float)
    _check_domain(spec, r, r2)
    gen = _generator(spec)
    a = spec.level
    exceed = x > r
    if spec.functional == "var":
        # G(x) is only needed where x > r, which keeps log and negative powers defined
        gx = gen.G(np.where(exceed, x, np.broadcast_to(r, np.broadcast(r, x).shape)))
        return _out((1.0 - a - exceed) * gen.G(r) + exceed * gx)
    if spec.functional == "expectile":
        xe = np.where(exceed, x, np.broadcast_to(r, np.broadcast(r, x).shape))
        phr, dphr = gen.phi(r), gen.dphi(r)
        bregman = phr - gen.phi(xe) - dphr * (r - xe)
        return _out(exceed * (1.0 - 2.0 * a) * bregman - (1.0 - a) * (phr - dphr * (r - x)))
    xe = np.where(exceed, x, np.broadcast_to(r, np.broadcast(r, x).shape))
    g1r = gen.G1(r)
    g2 = gen.G2(r2)
    tail = exceed * (-g1r + gen.G1(xe) - g2 * (r - x))
    return _out(tail + (1.0 - a) * (g1r - g2 * (r2 - r) + gen.cal_G2(r2)))


def score_difference(spec: ScoreSpec, forecast, other, x):
    """S(forecast, x) - S(other, x)."""
    return _out(np.asarray(score(spec, forecast, x)) - np.asarray(score(spec, other, x)))


def expected_score(spec: ScoreSpec, dist: DistributionSpec, forecast) -> float:
    """E S(forecast, X) for X ~ dist by adaptive quadrature, split at the kinks."""
    r, r2 = _split_forecast(spec, forecast)
    r = float(r)
    fc = (r, float(r2)) if r2 is not None else r
    lo, hi = dist.support()
    cuts = sorted({c for c in (lo, 0.0, r, hi) if lo <= c <= hi})
    total, err_total = 0.0, 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        val, err = integrate.quad(
            lambda y: float(score(spec, fc, y)) * float(dist.pdf(y)),
            a, b, epsabs=1e-12, epsrel=1e-10, limit=500,
        )
        total += val
        err_total += err
    if not math.isfinite(total) or err_total > 1e-6 * max(1.0, abs(total)):
        raise ArithmeticError(f"expected score integral did not converge (err {err_total:.3g})")
    return total


@dataclass(frozen=True)
class HomogeneityReport:
    degree: float | None
    differences_only: bool
    degree_confirmed: bool
    max_rel_err: float
    trials: int


def _draw_forecast(spec: ScoreSpec, rng, n):
    # positive or real-valued forecasts depending on the generator domain
    mag = np.exp(rng.normal(0.0, 1.0, n))
    if spec.functional == "vares":
        r2 = mag
        r1 = r2 * rng.uniform(0.3, 1.0, n)
        if not spec.requires_positive:
            r1 = r1 * rng.choice([-1.0, 1.0], n)
        return np.stack([r1, r2], axis=-1)
    if spec.requires_positive:
        return mag
    return mag * rng.choice([-1.0, 1.0], n)


def _terms_scale(spec: ScoreSpec, fc, x, degree):
    # magnitude of the score's building blocks, used as the relative-error yardstick
    b = degree if degree is not None else 1.0
    parts = np.abs(np.asarray(x, dtype=float))
    fc = np.asarray(fc, dtype=float)
    if fc.ndim > parts.ndim:
        parts = parts + np.abs(fc).sum(axis=-1)
    else:
        parts = parts + np.abs(fc)
    if b == 0:
        return np.maximum(1.0, np.abs(np.log(parts)))
    return parts**b


def validate_homogeneity(spec: ScoreSpec, trials: int = 1000, rng: np.random.Generator | None = None) -> HomogeneityReport:
    """Check S(c r, c x) = c**b S(r, x) on random draws (or the score-difference
    version for generators that are only difference-homogeneous)."""
    degree, diff_only = spec.homogeneity
    if degree is None:
        return HomogeneityReport(None, False, False, math.nan, 0)
    rng = rng if rng is not None else np.random.default_rng(0)
    r = _draw_forecast(spec, rng, trials)
    r_alt = _draw_forecast(spec, rng, trials)
    scale_x = np.exp(rng.normal(0.0, 1.0, trials))
    x = scale_x * rng.normal(0.5, 1.0, trials)
    c = np.exp(rng.uniform(-3.0, 3.0, trials))
    cc = c[:, None] if spec.functional == "vares" else c
    if diff_only:
        base = np.asarray(score_difference(spec, r, r_alt, x))
        scaled = np.asarray(score_difference(spec, cc * r, cc * r_alt, c * x))
    else:
        base = np.asarray(score(spec, r, x))
        scaled = np.asarray(score(spec, cc * r, c * x))
    target = c**degree * base
    yard = c**degree * np.maximum(_terms_scale(spec, r, x, degree), np.abs(base))
    rel = np.abs(scaled - target) / yard
    max_rel = float(np.max(rel))
    return HomogeneityReport(degree, diff_only, bool(max_rel <= 1e-10), max_rel, trials)


def default_scores(functional: str, level: float) -> tuple[ScoreSpec, ScoreSpec]:
    """The two scores used for comparative backtests: a homogeneous one and a
    0-homogeneous-difference one."""
    pairs = {
        "var": ("linear", "log"),
        "expectile": ("quadratic", "neglog"),
        "vares": ("sqrt", "log"),
    }
    a, b = pairs[functional]
    return ScoreSpec(functional, level, a), ScoreSpec(functional, level, b)
