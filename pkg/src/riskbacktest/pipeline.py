"""Rolling-window backtest orchestration, experiment reproduction and report
serialization.

Every command produces a :class:`ReportBundle` (named tables, traffic-light
matrices and a run manifest) that :func:`emit` writes to disk. Results are a
pure function of the :class:`RunConfig`: random draws come from substreams
keyed by (seed, purpose, family, time index).
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .calibration import (
    ONE_SIDED_DIRECTION,
    general_test_functions,
    one_sided_cct,
    simple_test_functions,
    two_sided_cct,
)
from .comparative import TrafficLights, rank_by_mean_score, sign_preference_table, traffic_light_matrix
from .forecasting import (
    REFERENCE_DGP,
    ArGarchFilter,
    EvtRisk,
    FilterFitWarning,
    HistoricalSimulationRisk,
    fp_risk,
    simulate_ar_garch,
)
from .identification import IdentificationSpec, identify
from .scoring import FUNCTIONALS, GENERATORS, ScoreSpec, score

__all__ = [
    "METHOD_IDS",
    "DEFAULT_LEVELS",
    "DEFAULT_SCORES",
    "RunConfig",
    "LossSeries",
    "ForecastSeries",
    "ReportBundle",
    "BacktestError",
    "ingest_csv",
    "rolling_forecasts",
    "evaluate_forecasts",
    "run_backtest",
    "run_simulation",
    "run_magician_study",
    "run_short_study",
    "run_property_checks",
    "emit",
]

FAMILY_PREFIX = {"n": "normal", "t": "t", "st": "skewed_t"}
STAGES = ("FP", "FHS", "EVT")
METHOD_IDS = tuple(f"{p}-{s}" for p in FAMILY_PREFIX for s in STAGES) + ("opt",)
DEFAULT_LEVELS = {
    "var": (0.90, 0.95, 0.99),
    "expectile": (0.96561, 0.98761, 0.99855),
    "vares": (0.754, 0.875, 0.975),
}
DEFAULT_SCORES = {"var": ("linear", "log"), "expectile": ("quadratic", "neglog"), "vares": ("sqrt", "log")}
MIN_WINDOW = 250
MIN_OUT_OF_SAMPLE = 30

ZONE_COLORS = {"green": "#2ca02c", "yellow": "#ffbf00", "red": "#d62728", "gray": "#bdbdbd"}
_ANSI = {"green": "\x1b[42m", "yellow": "\x1b[43m", "red": "\x1b[41m", "gray": "\x1b[47m"}


class BacktestError(RuntimeError):
    """A failure inside the rolling runner, tagged with method and time index."""


def _version() -> str:
    from . import __version__

    return __version__


# -- configuration -----------------------------------------------------------


def _parse_score_token(functional: str, token: str) -> tuple[str, float | None]:
    name, _, power = token.strip().partition("@")
    name = name.strip()
    if name not in GENERATORS[functional]:
        raise ValueError(f"unknown {functional} score {name!r}; choose from {GENERATORS[functional]}")
    return name, (float(power) if power else None)


def _format_score_token(name: str, power: float | None) -> str:
    return name if power is None else f"{name}@{power!r}"


def parse_mapping(text: str) -> dict[str, list[str]]:
    """Parse ``"var=0.95,0.99;vares=0.975"`` into {functional: [tokens]}."""
    out: dict[str, list[str]] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        key, sep, rest = part.replace(":", "=", 1).partition("=")
        key = key.strip()
        if not sep or key not in FUNCTIONALS:
            raise ValueError(f"expected '<functional>=<values>' with functional in {FUNCTIONALS}, got {part!r}")
        out[key] = [t.strip() for t in rest.split(",") if t.strip()]
    return out


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to replay a run.

    ``source`` is ``"csv"`` (with ``input_path``) or ``"simulate"``; the latter
    draws a path of length ``window + out_of_sample`` from the AR(1)-GARCH(1,1)
    process with standardized skewed-t innovations. ``convention`` picks the
    CSV column: ``"price"`` (negated log-returns), ``"loss"`` (verbatim) or
    ``"auto"``.
    """

    source: str = "simulate"
    input_path: str = ""
    convention: str = "auto"
    window: int = 500
    out_of_sample: int = 1000
    methods: tuple[str, ...] = METHOD_IDS
    levels: Mapping[str, tuple[float, ...]] = field(default_factory=lambda: dict(DEFAULT_LEVELS))
    scores: Mapping[str, tuple[tuple[str, float | None], ...]] = field(
        default_factory=lambda: {f: tuple((g, None) for g in gens) for f, gens in DEFAULT_SCORES.items()}
    )
    designs: tuple[str, ...] = ("simple", "general")
    eta: float = 0.05
    seed: int = 12345
    hac: str = "0"
    n_resample: int = 10000
    tail_count: int | None = None
    n_jobs: int = 1
    magician_length: int = 95000
    replicates: int = 200
    out: str = "results"
    formats: tuple[str, ...] = ("csv",)

    def __post_init__(self):
        if self.source not in ("csv", "simulate"):
            raise ValueError("source must be 'csv' or 'simulate'")
        if self.source == "csv" and not self.input_path:
            raise ValueError("a CSV run needs input_path")
        if self.convention not in ("auto", "price", "loss"):
            raise ValueError("convention must be 'auto', 'price' or 'loss'")
        if self.window < MIN_WINDOW:
            raise ValueError(f"window must be at least {MIN_WINDOW}")
        if self.out_of_sample < MIN_OUT_OF_SAMPLE:
            raise ValueError(f"out-of-sample length must be at least {MIN_OUT_OF_SAMPLE}")
        unknown = [m for m in self.methods if m not in METHOD_IDS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHOD_IDS}")
        if len(set(self.methods)) != len(self.methods) or len(self.methods) < 2:
            raise ValueError("need at least two distinct methods")
        if "opt" in self.methods and self.source != "simulate":
            raise ValueError("the 'opt' method needs simulated input with known dynamics")
        if not self.levels:
            raise ValueError("no functionals requested")
        for f, lv in self.levels.items():
            if f not in FUNCTIONALS:
                raise ValueError(f"unknown functional {f!r}")
            if not lv or not all(0.0 < a < 1.0 for a in lv):
                raise ValueError(f"levels for {f} must lie in (0, 1)")
        for f in self.levels:
            if not self.scores.get(f):
                raise ValueError(f"no score variants configured for {f}")
        bad = [d for d in self.designs if d not in ("simple", "general")]
        if bad or not self.designs:
            raise ValueError("designs must be a non-empty subset of {simple, general}")
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must lie in (0, 1)")
        if self.hac != "auto" and not self.hac.isdigit():
            raise ValueError("hac must be a non-negative integer lag or 'auto'")
        if self.magician_length < 2000 or self.replicates < 2:
            raise ValueError("magician_length must be >= 2000 and replicates >= 2")
        bad = [f for f in self.formats if f not in ("csv", "svg", "term")]
        if bad:
            raise ValueError(f"unknown output formats {bad}")

    @property
    def hac_lag(self) -> int | str:
        return "auto" if self.hac == "auto" else int(self.hac)

    def targets(self) -> list[tuple[str, float]]:
        return [(f, float(a)) for f in FUNCTIONALS if f in self.levels for a in self.levels[f]]

    def score_specs(self, functional: str, level: float) -> list[ScoreSpec]:
        return [ScoreSpec(functional, level, g, power=p) for g, p in self.scores[functional]]

    # INI round trip

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["input"] = {"source": self.source, "path": self.input_path, "convention": self.convention}
        cp["run"] = {
            "window": str(self.window),
            "out_of_sample": str(self.out_of_sample),
            "methods": ", ".join(self.methods),
            "designs": ", ".join(self.designs),
            "eta": repr(self.eta),
            "seed": str(self.seed),
            "hac": self.hac,
            "n_resample": str(self.n_resample),
            "tail_count": "auto" if self.tail_count is None else str(self.tail_count),
            "n_jobs": str(self.n_jobs),
        }
        cp["levels"] = {f: ", ".join(repr(float(a)) for a in self.levels[f]) for f in FUNCTIONALS if f in self.levels}
        cp["scores"] = {
            f: ", ".join(_format_score_token(g, p) for g, p in self.scores[f]) for f in FUNCTIONALS if f in self.scores
        }
        cp["experiments"] = {"magician_length": str(self.magician_length), "replicates": str(self.replicates)}
        cp["output"] = {"out": self.out, "format": ", ".join(self.formats)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, **overrides) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_string(text)
        kw: dict = {}

        def get(section, key):
            return cp.get(section, key, fallback=None)

        def split(v):
            return tuple(t.strip() for t in v.split(",") if t.strip())

        if (v := get("input", "source")) is not None:
            kw["source"] = v
        if (v := get("input", "path")) is not None:
            kw["input_path"] = v
        if (v := get("input", "convention")) is not None:
            kw["convention"] = v
        for key, conv in (("window", int), ("out_of_sample", int), ("eta", float), ("seed", int),
                          ("n_resample", int), ("n_jobs", int)):
            if (v := get("run", key)) is not None:
                kw[key] = conv(v)
        for key in ("magician_length", "replicates"):
            if (v := get("experiments", key)) is not None:
                kw[key] = int(v)
        if (v := get("run", "methods")) is not None:
            kw["methods"] = split(v)
        if (v := get("run", "designs")) is not None:
            kw["designs"] = split(v)
        if (v := get("run", "hac")) is not None:
            kw["hac"] = v.strip()
        if (v := get("run", "tail_count")) is not None:
            kw["tail_count"] = None if v.strip() == "auto" else int(v)
        if cp.has_section("levels"):
            kw["levels"] = {f: tuple(float(t) for t in split(v)) for f, v in cp.items("levels")}
        if cp.has_section("scores"):
            kw["scores"] = {f: tuple(_parse_score_token(f, t) for t in split(v)) for f, v in cp.items("scores")}
        if (v := get("output", "out")) is not None:
            kw["out"] = v
        if (v := get("output", "format")) is not None:
            kw["formats"] = split(v)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def echo(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Mapping):
                v = {k: [list(t) if isinstance(t, tuple) else t for t in vals] for k, vals in v.items()}
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


# -- ingestion -----------------------------------------------------------------


@dataclass(frozen=True)
class LossSeries:
    losses: np.ndarray
    timestamps: tuple[str, ...]
    source: str


def ingest_csv(path: str, convention: str = "auto", min_length: int | None = None) -> LossSeries:
    """Read a loss series from a CSV file with a header row.

    A ``price`` column becomes negated log-returns (one observation shorter);
    a ``loss`` column is used as is. A ``date`` column, when present, labels
    the observations. Rows with missing or non-numeric values are rejected
    with their line numbers.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        cols = [c.strip().lower() for c in reader.fieldnames]
        reader.fieldnames = cols
        if convention == "auto":
            convention = "price" if "price" in cols else "loss"
        if convention not in ("price", "loss"):
            raise ValueError("convention must be 'auto', 'price' or 'loss'")
        if convention not in cols:
            raise ValueError(f"{path}: no {convention!r} column in header {cols}")
        values, dates, bad = [], [], []
        for row in reader:
            line = reader.line_num
            raw = (row.get(convention) or "").strip()
            try:
                v = float(raw)
            except ValueError:
                bad.append(line)
                continue
            if not math.isfinite(v) or (convention == "price" and v <= 0):
                bad.append(line)
                continue
            values.append(v)
            dates.append((row.get("date") or "").strip())
    if bad:
        shown = ", ".join(str(b) for b in bad[:20])
        more = f" (+{len(bad) - 20} more)" if len(bad) > 20 else ""
        raise ValueError(f"{path}: missing or malformed values on line(s) {shown}{more}")
    arr = np.asarray(values, dtype=float)
    if convention == "price":
        arr = -np.diff(np.log(arr))
        dates = dates[1:]
    if not any(dates):
        dates = [str(i) for i in range(arr.size)]
    if min_length is not None and arr.size < min_length:
        raise ValueError(f"{path}: {arr.size} observations, need at least {min_length}")
    return LossSeries(arr, tuple(dates), f"csv:{os.path.basename(path)}:{convention}")


def write_loss_csv(path: str, losses, timestamps: Sequence[str] | None = None) -> None:
    """Write a loss series in the ``loss`` convention, exactly round-trippable."""
    losses = np.asarray(losses, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "loss"])
        for i, v in enumerate(losses):
            w.writerow([timestamps[i] if timestamps is not None else i, repr(float(v))])


# -- rolling forecasts ------------------------------------------------------------


@dataclass
class ForecastSeries:
    """One method's one-step-ahead forecasts over the out-of-sample period.

    ``forecasts`` maps (functional, level) to an array of shape (n,) or, for
    VaR-ES, (n, 2). ``mu`` and ``sigma`` are the conditional mean and
    volatility forecasts used to build them.
    """

    method: str
    timestamps: tuple[str, ...]
    losses: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    forecasts: dict
    converged: np.ndarray

    def __post_init__(self):
        n = len(self.timestamps)
        arrays = [self.losses, self.mu, self.sigma, self.converged, *self.forecasts.values()]
        if any(np.shape(a)[0] != n for a in arrays):
            raise ValueError("all forecast sequences must have the same length")


def _method_parts(method: str) -> tuple[str | None, str | None]:
    if method == "opt":
        return None, None
    prefix, stage = method.split("-")
    return FAMILY_PREFIX[prefix], stage


def _standard_risk(estimator, targets) -> dict:
    return {t: estimator.risk(*t) for t in targets}


def _family_worker(args):
    x, window, family, prefix, stages, targets, seed, n_resample, tail_count = args
    n_out = x.size - window
    fam_index = list(FAMILY_PREFIX.values()).index(family)
    mu = np.empty(n_out)
    sig = np.empty(n_out)
    conv = np.ones(n_out, dtype=bool)
    out = {s: {t: np.empty((n_out, 2) if t[0] == "vares" else n_out) for t in targets} for s in stages}
    filt = ArGarchFilter(family=family, warm_start=True)
    for i in range(n_out):
        t = window + i
        method = None
        try:
            method = f"{prefix}-filter"
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", FilterFitWarning)
                filt.fit(x[t - window:t])
            conv[i] = not any(issubclass(w.category, FilterFitWarning) for w in caught)
            m, s = filt.forecast_one_step()
            mu[i], sig[i] = m, s
            z = filt.residuals_
            for stage in stages:
                method = f"{prefix}-{stage}"
                if stage == "FP":
                    rho = {tg: fp_risk(filt.params_.innovation, *tg) for tg in targets}
                elif stage == "FHS":
                    rng = np.random.default_rng([seed, 1, fam_index, t])
                    rho = _standard_risk(HistoricalSimulationRisk(n_resample, rng).fit(z), targets)
                else:
                    rho = _standard_risk(EvtRisk(tail_count).fit(z), targets)
                for tg, r in rho.items():
                    out[stage][tg][i] = m + s * np.asarray(r, dtype=float)
        except Exception as exc:
            raise BacktestError(f"{method} failed at time index {t}: {exc}") from exc
    return family, mu, sig, conv, out


def rolling_forecasts(
    x,
    window: int,
    methods: Sequence[str],
    targets: Sequence[tuple[str, float]],
    *,
    seed: int = 0,
    timestamps: Sequence[str] | None = None,
    truth=None,
    n_resample: int = 10000,
    tail_count: int | None = None,
    n_jobs: int = 1,
) -> dict[str, ForecastSeries]:
    """One-step-ahead forecasts for every index t >= window.

    The filter for time t is fitted on ``x[t - window:t]`` only. The three
    stages of a family share one filter fit per window. ``truth`` (a
    simulated path) enables the oracle method ``"opt"``.
    """
    x = np.asarray(x, dtype=float).ravel()
    if window < MIN_WINDOW:
        raise ValueError(f"window must be at least {MIN_WINDOW}")
    n_out = x.size - window
    if n_out < 1:
        raise ValueError("series is not longer than the window")
    targets = [(f, float(a)) for f, a in targets]
    ts = tuple(timestamps[window:]) if timestamps is not None else tuple(str(i) for i in range(window, x.size))
    losses = x[window:].copy()
    by_family: dict[str, list[str]] = {}
    for m in methods:
        fam, stage = _method_parts(m)
        if fam is not None:
            by_family.setdefault(fam, []).append(stage)
    prefix_of = {v: k for k, v in FAMILY_PREFIX.items()}
    jobs = [(x, window, fam, prefix_of[fam], tuple(st), targets, seed, n_resample, tail_count)
            for fam, st in by_family.items()]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            results = list(pool.map(_family_worker, jobs))
    else:
        results = [_family_worker(j) for j in jobs]
    series: dict[str, ForecastSeries] = {}
    for family, mu, sig, conv, out in results:
        for stage, fc in out.items():
            name = f"{prefix_of[family]}-{stage}"
            series[name] = ForecastSeries(name, ts, losses, mu, sig, fc, conv)
    if "opt" in methods:
        if truth is None:
            raise ValueError("the 'opt' method needs the true conditional mean and volatility")
        mu = np.asarray(truth.mu, dtype=float)[window:]
        sig = np.asarray(truth.sigma, dtype=float)[window:]
        if mu.size != n_out:
            raise ValueError("true dynamics are not aligned with the loss series")
        fc = {}
        for tg in targets:
            rho = np.asarray(fp_risk(REFERENCE_DGP.innovation, *tg), dtype=float)
            fc[tg] = mu[:, None] + sig[:, None] * rho if tg[0] == "vares" else mu + sig * rho
        series["opt"] = ForecastSeries("opt", ts, losses, mu, sig, fc, np.ones(n_out, dtype=bool))
    return {m: series[m] for m in methods}


# -- evaluation --------------------------------------------------------------------


@dataclass
class ReportBundle:
    """Named tables (column tuple, row dicts), traffic-light matrices keyed by
    a file-safe label, and a JSON-serializable manifest."""

    tables: dict
    matrices: dict
    manifest: dict


SUMMARY_COLUMNS = (
    "functional", "level", "method", "n", "n_zeroed", "mean_forecast", "mean_es",
    "pct_violations", "score", "scaled_mean_score", "rank",
)
PVALUE_DESIGNS = (
    ("two_sided_simple", "simple", False),
    ("two_sided_general", "general", False),
    ("one_sided_simple", "simple", True),
    ("one_sided_general", "general", True),
)
PVALUE_COLUMNS = ("functional", "level", "method", "n") + tuple(
    c for name, _, _ in PVALUE_DESIGNS for c in (name, f"{name}_significant")
)
TRAFFIC_COLUMNS = (
    "functional", "level", "score", "standard", "internal", "zone",
    "mean_score_diff", "dm_statistic", "p_plus", "p_minus",
)
FORECAST_COLUMNS = ("timestamp", "method", "functional", "level", "loss", "mu", "sigma", "forecast", "forecast_es", "converged")


def _risk_part(functional: str, fc: np.ndarray) -> np.ndarray:
    """The component that scores require to be positive."""
    return fc[:, 1] if functional == "vares" else fc


def _zero_mask(functional: str, fcs: Sequence[np.ndarray]) -> np.ndarray:
    """True where some method's forecast is non-positive at that timestamp."""
    mask = np.zeros(len(fcs[0]), dtype=bool)
    for fc in fcs:
        mask |= ~(_risk_part(functional, fc) > 0)
    return mask


def zeroed_scores(spec: ScoreSpec, forecasts: Mapping[str, np.ndarray], x) -> tuple[dict, np.ndarray]:
    """Scores per method with every method's score set to 0 wherever any
    method's forecast is non-positive."""
    x = np.asarray(x, dtype=float)
    methods = list(forecasts)
    mask = _zero_mask(spec.functional, [forecasts[m] for m in methods])
    keep = ~mask
    out = {}
    for m in methods:
        s = np.zeros(x.size)
        if keep.any():
            s[keep] = score(spec, forecasts[m][keep], x[keep])
        out[m] = s
    return out, mask


def _score_name(spec: ScoreSpec) -> str:
    return _format_score_token(spec.generator, spec.power)


def _label(functional: str, level: float, score_label: str | None = None) -> str:
    base = f"{functional}_{level:g}"
    return base if score_label is None else f"{base}_{score_label}"


def _pvalues(functional, level, fc, sigma, x, eta, designs):
    v = identify(IdentificationSpec(functional, level), fc, x)
    out = {}
    for name, design, one_sided in PVALUE_DESIGNS:
        if design not in designs:
            out[name] = None
            continue
        if design == "simple":
            h = simple_test_functions(functional, fc)
        else:
            h = general_test_functions(functional, fc, sigma, level, one_sided=one_sided)
        if one_sided:
            rep = one_sided_cct(v, h, direction=ONE_SIDED_DIRECTION[functional], eta=eta)
        else:
            rep = two_sided_cct(v, h, eta=eta)
        out[name] = rep.p_value
    return out


def evaluate_forecasts(series: Mapping[str, ForecastSeries], config: RunConfig) -> ReportBundle:
    """Summary, calibration p-values and traffic lights for aligned forecasts."""
    methods = list(series)
    first = series[methods[0]]
    x = first.losses
    n = x.size
    eta, hac = config.eta, config.hac_lag
    summary, pvals, lights, forecasts_rows = [], [], [], []
    matrices: dict[str, TrafficLights] = {}
    zeroed: dict[str, int] = {}
    for functional, level in config.targets():
        fcs = {m: series[m].forecasts[(functional, level)] for m in methods}
        specs = config.score_specs(functional, level)
        per_score = []
        mask = None
        for spec in specs:
            s, mask = zeroed_scores(spec, fcs, x)
            ranks = {r.method: r for r in rank_by_mean_score(methods, s, level)}
            tl = traffic_light_matrix(methods, s, eta=eta, hac=hac)
            matrices[_label(functional, level, _score_name(spec))] = tl
            per_score.append((spec, ranks))
            for i, std in enumerate(methods):
                for j, internal in enumerate(methods):
                    if i == j:
                        continue
                    v = tl.verdicts[(std, internal)]
                    lights.append({
                        "functional": functional, "level": level, "score": _score_name(spec),
                        "standard": std, "internal": internal, "zone": v.zone,
                        "mean_score_diff": v.mean_score_diff, "dm_statistic": v.dm_statistic,
                        "p_plus": v.p_plus, "p_minus": v.p_minus,
                    })
        n_zero = int(mask.sum())
        zeroed[_label(functional, level)] = n_zero
        for m in methods:
            fc = fcs[m]
            var_part = fc[:, 0] if functional == "vares" else fc
            viol = 100.0 * float(np.mean(x > var_part)) if functional != "expectile" else None
            for spec, ranks in per_score:
                summary.append({
                    "functional": functional, "level": level, "method": m, "n": n, "n_zeroed": n_zero,
                    "mean_forecast": float(np.mean(var_part)),
                    "mean_es": float(np.mean(fc[:, 1])) if functional == "vares" else None,
                    "pct_violations": viol, "score": _score_name(spec),
                    "scaled_mean_score": ranks[m].scaled_mean, "rank": ranks[m].rank,
                })
            p = _pvalues(functional, level, fc, series[m].sigma, x, eta, config.designs)
            row = {"functional": functional, "level": level, "method": m, "n": n}
            for name, _, _ in PVALUE_DESIGNS:
                row[name] = p[name]
                row[f"{name}_significant"] = None if p[name] is None else p[name] < eta
            pvals.append(row)
            fs = series[m]
            for i in range(n):
                forecasts_rows.append({
                    "timestamp": fs.timestamps[i], "method": m, "functional": functional, "level": level,
                    "loss": x[i], "mu": fs.mu[i], "sigma": fs.sigma[i],
                    "forecast": var_part[i], "forecast_es": fc[i, 1] if functional == "vares" else None,
                    "converged": bool(fs.converged[i]),
                })
    manifest = {
        "config": config.echo(),
        "seed": config.seed,
        "library_version": _version(),
        "n_out_of_sample": n,
        "zeroed_timestamps": zeroed,
        "filter_non_convergence": {m: int((~series[m].converged).sum()) for m in methods},
    }
    tables = {
        "summary": (SUMMARY_COLUMNS, summary),
        "pvalues": (PVALUE_COLUMNS, pvals),
        "traffic_lights": (TRAFFIC_COLUMNS, lights),
        "forecasts": (FORECAST_COLUMNS, forecasts_rows),
    }
    return ReportBundle(tables, matrices, manifest)


def run_backtest(config: RunConfig) -> ReportBundle:
    """Backtest on a user-supplied CSV loss series."""
    if config.source != "csv":
        raise ValueError("run_backtest needs a CSV source; use run_simulation for simulated input")
    data = ingest_csv(config.input_path, config.convention, min_length=config.window + MIN_OUT_OF_SAMPLE)
    series = rolling_forecasts(
        data.losses, config.window, config.methods, config.targets(), seed=config.seed,
        timestamps=data.timestamps, n_resample=config.n_resample, tail_count=config.tail_count,
        n_jobs=config.n_jobs,
    )
    bundle = evaluate_forecasts(series, config)
    bundle.manifest["command"] = "backtest"
    bundle.manifest["input"] = data.source
    return bundle


def simulate_path(seed: int, n: int, stream: int = 0):
    """The simulation-study path for a seed; ``stream`` separates replicates."""
    return simulate_ar_garch(REFERENCE_DGP, n, rng=np.random.default_rng([seed, 0, stream]))


def run_simulation(config: RunConfig) -> ReportBundle:
    """The simulation study on one seeded path of length window + out_of_sample."""
    path = simulate_path(config.seed, config.window + config.out_of_sample)
    series = rolling_forecasts(
        path.x, config.window, config.methods, config.targets(), seed=config.seed, truth=path,
        n_resample=config.n_resample, tail_count=config.tail_count, n_jobs=config.n_jobs,
    )
    bundle = evaluate_forecasts(series, config)
    bundle.manifest["command"] = "simulate"
    return bundle


# -- reference experiments ----------------------------------------------------------


MAGICIAN_T_DF = 4.0


def _magician_path(length: int, seed: int, presample: int, burnin: int = 1000):
    """GARCH(1,1) losses with unit-variance t4 innovations (no mean)."""
    rng = np.random.default_rng([seed, 3])
    total = length + presample + burnin
    z = stats.t.ppf(rng.random(total), MAGICIAN_T_DF) / math.sqrt(2.0)
    x = np.empty(total)
    s2 = np.empty(total)
    x_prev, s2_prev = 0.0, 1.0
    for t in range(total):
        s2[t] = 0.05 + 0.20 * x_prev * x_prev + 0.75 * s2_prev
        x[t] = math.sqrt(s2[t]) * z[t]
        x_prev, s2_prev = x[t], s2[t]
    return x[burnin:], np.sqrt(s2[burnin:])


def _historian(x: np.ndarray, n: int, level: float, start: int, chunk: int = 4096):
    """Rolling empirical quantile and tail mean over the last ``n`` losses,
    for every index from ``start`` on."""
    k = int(math.ceil(n * level - 1e-12))
    windows = np.lib.stride_tricks.sliding_window_view(x[:-1], n)[start - n:]
    q = np.empty(windows.shape[0])
    es = np.empty(windows.shape[0])
    for a in range(0, windows.shape[0], chunk):
        part = np.partition(windows[a:a + chunk], k - 1, axis=1)
        q[a:a + chunk] = part[:, k - 1]
        es[a:a + chunk] = part[:, k:].mean(axis=1)
    return q, es


MAGICIAN_COLUMNS = (
    "length", "forecaster", "var_level", "pct_exceedances_var", "mean_score_var",
    "vares_level", "pct_exceedances_vares", "mean_exceedance_residual", "mean_score_vares",
)


def run_magician_study(length: int = 95000, seed: int = 12345, histories: Sequence[int] = (250, 500, 1000)) -> ReportBundle:
    """Magician (true conditional distribution) against rolling historians.

    VaR at 0.99 is scored with the linear score; (VaR, ES) at 0.975 with the
    logistic-ES score (``vares``/``fzg``). The exceedance residual averages
    (X - ES) / sigma over VaR exceedances.
    """
    if length < 2000:
        raise ValueError("length must be at least 2000")
    presample = max(histories)
    x_all, s_all = _magician_path(length, seed, presample)
    x, sigma = x_all[presample:], s_all[presample:]
    a_var, a_es = 0.99, 0.975
    df = MAGICIAN_T_DF
    unit = 1.0 / math.sqrt(2.0)
    q99 = stats.t.ppf(a_var, df)
    q975 = stats.t.ppf(a_es, df)
    es975 = stats.t.pdf(q975, df) / (1.0 - a_es) * (df + q975**2) / (df - 1.0)
    fcs = {"magician": (sigma * unit * q99, sigma * unit * q975, sigma * unit * es975)}
    for h in histories:
        v, _ = _historian(x_all, h, a_var, presample)
        q, e = _historian(x_all, h, a_es, presample)
        fcs[f"historian-{h}"] = (v, q, e)
    s_var = ScoreSpec("var", a_var, "linear")
    s_es = ScoreSpec("vares", a_es, "fzg")
    rows = []
    for name, (v, q, e) in fcs.items():
        exc = x > q
        rows.append({
            "length": length, "forecaster": name,
            "var_level": a_var, "pct_exceedances_var": 100.0 * float(np.mean(x > v)),
            "mean_score_var": float(np.mean(score(s_var, v, x))),
            "vares_level": a_es, "pct_exceedances_vares": 100.0 * float(np.mean(exc)),
            "mean_exceedance_residual": float(np.mean((x[exc] - e[exc]) / sigma[exc])) if exc.any() else None,
            "mean_score_vares": float(np.mean(score(s_es, np.stack([q, e], axis=1), x))),
        })
    mag = rows[0]
    others = rows[1:]
    flags = {
        "magician_lowest_var_score": all(mag["mean_score_var"] < r["mean_score_var"] for r in others),
        "magician_lowest_vares_score": all(mag["mean_score_vares"] < r["mean_score_vares"] for r in others),
        # some historian is closer to the nominal 1% exceedance rate than the magician
        "exceedance_inversion_observed": any(
            abs(r["pct_exceedances_var"] - 1.0) < abs(mag["pct_exceedances_var"] - 1.0) for r in others
        ),
    }
    manifest = {
        "command": "magician", "length": length, "seed": seed, "histories": list(histories),
        "library_version": _version(), "flags": flags,
    }
    return ReportBundle({"magician": (MAGICIAN_COLUMNS, rows)}, {}, manifest)


SHORT_STUDY_LEVELS = {"var": (0.90, 0.99), "vares": (0.754, 0.975)}
RANK_COLUMNS = (
    "replicate", "functional", "level", "score", "method", "scaled_mean_score", "rank", "pct_violations", "n_zeroed",
)
PREFERENCE_COLUMNS = ("functional", "level", "score", "row_method", "column_method", "pct_column_better", "all_ties")


def run_short_study(config: RunConfig, replicates: int | None = None) -> ReportBundle:
    """Repeat the simulation study on short out-of-sample periods.

    Each replicate simulates an independent path; the configured levels and
    scores define the targets. Returns replicate-level ranks and the
    sign-preference percentages between methods.
    """
    replicates = config.replicates if replicates is None else replicates
    if replicates < 2:
        raise ValueError("need at least two replicates")
    methods = list(config.methods)
    targets = config.targets()
    rank_rows = []
    means: dict[tuple, list] = {}
    for rep in range(replicates):
        path = simulate_path(config.seed, config.window + config.out_of_sample, stream=rep + 1)
        series = rolling_forecasts(
            path.x, config.window, methods, targets, seed=config.seed * 100003 + rep, truth=path,
            n_resample=config.n_resample, tail_count=config.tail_count, n_jobs=config.n_jobs,
        )
        x = series[methods[0]].losses
        for functional, level in targets:
            fcs = {m: series[m].forecasts[(functional, level)] for m in methods}
            viol = {
                m: None if functional == "expectile" else 100.0 * float(np.mean(x > (f[:, 0] if f.ndim == 2 else f)))
                for m, f in fcs.items()
            }
            for spec in config.score_specs(functional, level):
                s, mask = zeroed_scores(spec, fcs, x)
                ranked = rank_by_mean_score(methods, s, level)
                means.setdefault((functional, level, _score_name(spec)), []).append([r.scaled_mean for r in ranked])
                for r in ranked:
                    rank_rows.append({
                        "replicate": rep, "functional": functional, "level": level, "score": _score_name(spec),
                        "method": r.method, "scaled_mean_score": r.scaled_mean, "rank": r.rank,
                        "pct_violations": viol[r.method], "n_zeroed": int(mask.sum()),
                    })
    pref_rows = []
    median_rank = {}
    for (functional, level, label), m in means.items():
        pct, ties = sign_preference_table(methods, np.asarray(m))
        for i, a in enumerate(methods):
            for j, b in enumerate(methods):
                pref_rows.append({
                    "functional": functional, "level": level, "score": label, "row_method": a,
                    "column_method": b, "pct_column_better": float(pct[i, j]), "all_ties": bool(ties[i, j]),
                })
        ranks = [r["rank"] for r in rank_rows if (r["functional"], r["level"], r["score"]) == (functional, level, label)]
        for mi, meth in enumerate(methods):
            median_rank[f"{_label(functional, level, label)}:{meth}"] = float(np.median(ranks[mi::len(methods)]))
    manifest = {
        "command": "short-study", "config": config.echo(), "seed": config.seed, "replicates": replicates,
        "library_version": _version(), "median_rank": median_rank,
    }
    tables = {"short_study_ranks": (RANK_COLUMNS, rank_rows), "short_study_preferences": (PREFERENCE_COLUMNS, pref_rows)}
    return ReportBundle(tables, {}, manifest)


# -- quick property checks ----------------------------------------------------------


def run_property_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Fast numerical self-checks: (name, passed, detail) per check."""
    from .distributions import AST, GPD, Exponential, Normal, Pareto, SkewedT, StudentT
    from .identification import expected_identification
    from .scoring import validate_homogeneity

    rng = np.random.default_rng(seed)
    checks = []

    def add(name, ok, detail):
        checks.append((name, bool(ok), detail))

    nrm = Normal(0.0, 1.0)
    q = nrm.quantile(0.99)
    add("normal quantile 0.99", abs(q - 2.326348) < 1e-5, f"{q:.7f}")
    es = nrm.expected_shortfall(0.975)
    add("normal expected shortfall 0.975", abs(es - 2.337803) < 1e-5, f"{es:.7f}")
    families = [nrm, Exponential(1.5), StudentT(5.0), Pareto(3.0), GPD(1.0, 0.2), SkewedT(5.0, 1.5), AST(0.4, 4.0, 6.0)]
    for d in families:
        e = d.expectile(0.5)
        add(f"median expectile equals mean: {type(d).__name__}", abs(e - d.mean()) < 1e-9, f"{e - d.mean():.2e}")
    for functional, level in (("var", 0.99), ("expectile", 0.99855), ("vares", 0.975)):
        for gen in DEFAULT_SCORES[functional]:
            rep = validate_homogeneity(ScoreSpec(functional, level, gen), trials=200, rng=rng)
            add(f"homogeneity {functional}/{gen}", rep.degree_confirmed, f"max rel err {rep.max_rel_err:.1e}")
    st = SkewedT(5.0, 1.5, standardized=True)
    for functional, level in (("var", 0.99), ("expectile", 0.99), ("vares", 0.975)):
        fc = fp_risk(st, functional, level)
        v = expected_identification(IdentificationSpec(functional, level), st, fc)
        add(f"identification zero {functional}", float(np.max(np.abs(v))) < 1e-8, f"{float(np.max(np.abs(v))):.1e}")
    return checks


# -- output ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def table_to_csv(columns: Sequence[str], rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def matrix_svg(tl: TrafficLights, title: str = "", cell: int = 28) -> str:
    """Heatmap with standard methods on the vertical axis and internal
    methods on the horizontal axis."""
    m = len(tl.methods)
    pad_left, pad_top = 70, 80
    width, height = pad_left + m * cell + 10, pad_top + m * cell + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">',
        f'<text x="4" y="14" font-size="12">{title}</text>',
        f'<text x="{pad_left}" y="30">internal</text>',
        f'<text x="4" y="{pad_top - 4}">standard</text>',
    ]
    for j, name in enumerate(tl.methods):
        x = pad_left + j * cell + cell / 2
        out.append(f'<text x="{x:g}" y="{pad_top - 4}" transform="rotate(-60 {x:g} {pad_top - 4})">{name}</text>')
    for i, name in enumerate(tl.methods):
        y = pad_top + i * cell
        out.append(f'<text x="{pad_left - 4}" y="{y + cell * 0.65:g}" text-anchor="end">{name}</text>')
        for j in range(m):
            color = ZONE_COLORS[str(tl.zones[i, j])]
            out.append(
                f'<rect x="{pad_left + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{color}" stroke="#ffffff"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_term(bundle: ReportBundle, color: bool = True) -> str:
    lines = []
    if "summary" in bundle.tables:
        cols, rows = bundle.tables["summary"]
        lines.append("functional  level    method   score            scaled_mean  rank  %viol")
        for r in rows:
            viol = "" if r["pct_violations"] is None else f"{r['pct_violations']:.2f}"
            lines.append(
                f"{r['functional']:<11} {r['level']:<8g} {r['method']:<8} {r['score']:<16} "
                f"{r['scaled_mean_score']:>11.5f}  {r['rank']:>4}  {viol}"
            )
    if "pvalues" in bundle.tables:
        cols, rows = bundle.tables["pvalues"]
        lines.append("")
        lines.append("functional  level    method    2s-simple  2s-general  1s-simple  1s-general  (* p < eta)")
        for r in rows:
            cells = []
            for name, _, _ in PVALUE_DESIGNS:
                p = r[name]
                cells.append("  degen  " if p is None else f"{p:8.3f}{'*' if r[name + '_significant'] else ' '}")
            lines.append(f"{r['functional']:<11} {r['level']:<8g} {r['method']:<8} " + "  ".join(cells))
    for key, (cols, rows) in bundle.tables.items():
        if key == "magician" or key.startswith("short_study"):
            lines.append("")
            lines.append(", ".join(cols))
            for r in rows[:50]:
                lines.append(", ".join(_fmt(r.get(c)) for c in cols))
    for label, tl in bundle.matrices.items():
        lines.append("")
        lines.append(f"{label} (rows: standard, columns: internal)")
        lines.append(" " * 9 + "".join(f"{m:>8}" for m in tl.methods))
        for i, name in enumerate(tl.methods):
            cells = []
            for j in range(len(tl.methods)):
                z = str(tl.zones[i, j])
                text = f"{z[:6]:>7} "
                cells.append(f"{_ANSI[z]}{text}\x1b[0m" if color else text)
            lines.append(f"{name:>8} " + "".join(cells))
    return "\n".join(lines) + "\n"


def emit(bundle: ReportBundle, out_dir: str, formats: Sequence[str] = ("csv",), config: RunConfig | None = None,
         stream=None) -> list[str]:
    """Write the bundle; returns the paths written.

    The manifest (and the replayable ``run.ini`` when a config is given) is
    always written. ``term`` prints to ``stream`` (stdout by default).
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def write(name, text):
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)

    if "csv" in formats:
        for name, (cols, rows) in bundle.tables.items():
            write(f"{name}.csv", table_to_csv(cols, rows))
    if "svg" in formats:
        for label, tl in bundle.matrices.items():
            write(f"traffic_{label}.svg", matrix_svg(tl, label))
    if "term" in formats:
        (stream or sys.stdout).write(render_term(bundle, color=(stream or sys.stdout).isatty()))
    if config is not None:
        write("run.ini", config.to_ini())
    write("manifest.json", json.dumps(bundle.manifest, indent=2, sort_keys=True, default=_fmt) + "\n")
    return written


def config_with(config: RunConfig, **changes) -> RunConfig:
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
