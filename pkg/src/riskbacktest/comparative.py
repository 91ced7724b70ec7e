"""Comparative backtests: Diebold-Mariano tests on score differences, the
three-zone verdict, traffic-light matrices and mean-score rankings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .calibration import hac_covariance

__all__ = [
    "ComparisonVerdict",
    "dm_test",
    "traffic_light_matrix",
    "TrafficLights",
    "rank_by_mean_score",
    "RankedMethod",
    "sign_preference_table",
    "ZONES",
]

ZONES = ("green", "yellow", "red")
NEUTRAL = "gray"


@dataclass(frozen=True)
class ComparisonVerdict:
    mean_score_diff: float
    dm_statistic: float | None
    p_plus: float | None
    p_minus: float | None
    zone: str
    degenerate: bool = False
    n: int = 0


def dm_test(score_diffs, eta: float = 0.05, hac: int | str = 0) -> ComparisonVerdict:
    """Diebold-Mariano test on d_t = S(internal) - S(standard).

    Negative mean differences favour the internal model. ``p_plus`` tests
    H0+ (lambda >= 0, internal no better); rejecting it puts the internal
    model in the green zone. Rejecting H0- (lambda <= 0) via ``p_minus`` gives
    red, and yellow otherwise. A zero HAC variance yields a degenerate yellow.
    """
    d = np.asarray(score_diffs, dtype=float).ravel()
    n = d.size
    if n < 30:
        raise ValueError("the DM test needs at least 30 score differences")
    if not np.all(np.isfinite(d)):
        raise ValueError("score differences contain non-finite values")
    mean = float(d.mean())
    var = float(hac_covariance(d, hac)[0, 0])
    if not var > 1e-14 * max(1.0, float(np.mean(d * d))):
        return ComparisonVerdict(mean, None, None, None, "yellow", degenerate=True, n=n)
    t = mean / math.sqrt(var / n)
    p_plus = float(special.ndtr(t))
    p_minus = float(special.ndtr(-t))
    return ComparisonVerdict(mean, t, p_plus, p_minus, _zone(p_plus, p_minus, eta), n=n)


def _zone(p_plus: float, p_minus: float, eta: float) -> str:
    if p_plus <= eta:
        return "green"
    if p_minus <= eta:
        return "red"
    return "yellow"


@dataclass(frozen=True)
class TrafficLights:
    """Zones indexed [standard, internal]; the diagonal is ``"gray"``."""

    methods: tuple[str, ...]
    zones: np.ndarray
    verdicts: dict

    def zone(self, standard: str, internal: str) -> str:
        i, j = self.methods.index(standard), self.methods.index(internal)
        return str(self.zones[i, j])


def _scores_matrix(methods: Sequence[str], scores: Mapping[str, np.ndarray] | np.ndarray) -> np.ndarray:
    if isinstance(scores, Mapping):
        arr = np.stack([np.asarray(scores[m], dtype=float) for m in methods])
    else:
        arr = np.asarray(scores, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != len(methods):
        raise ValueError("need one aligned score series per method")
    return arr


def traffic_light_matrix(
    methods: Sequence[str],
    scores: Mapping[str, np.ndarray] | np.ndarray,
    eta: float = 0.05,
    hac: int | str = 0,
) -> TrafficLights:
    """Cell (i, j) is the zone of internal method j against standard method i."""
    methods = tuple(methods)
    arr = _scores_matrix(methods, scores)
    m = len(methods)
    zones = np.full((m, m), NEUTRAL, dtype=object)
    verdicts = {}
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            v = dm_test(arr[j] - arr[i], eta=eta, hac=hac)
            zones[i, j] = v.zone
            verdicts[(methods[i], methods[j])] = v
    return TrafficLights(methods, zones, verdicts)


@dataclass(frozen=True)
class RankedMethod:
    method: str
    rank: int
    scaled_mean: float


def rank_by_mean_score(
    methods: Sequence[str],
    scores: Mapping[str, np.ndarray] | np.ndarray,
    level: float,
) -> list[RankedMethod]:
    """Rank by mean score (ascending); reported means are divided by (1 - level).

    Ties keep the order in which methods were given.
    """
    methods = tuple(methods)
    arr = _scores_matrix(methods, scores)
    means = arr.mean(axis=1) / (1.0 - level)
    order = sorted(range(len(methods)), key=lambda i: (means[i], i))
    ranks = {i: r + 1 for r, i in enumerate(order)}
    return [RankedMethod(methods[i], ranks[i], float(means[i])) for i in range(len(methods))]


def sign_preference_table(methods: Sequence[str], mean_scores) -> tuple[np.ndarray, np.ndarray]:
    """Percentage of replicates in which the column method has a strictly
    lower mean score than the row method.

    ``mean_scores`` has shape (replicates, methods). Returns (percentages, tie
    flags). The diagonal is 0; pairs that tie in every replicate are reported
    as 50 with the tie flag set.
    """
    arr = np.asarray(mean_scores, dtype=float)
    m = len(methods)
    if arr.ndim != 2 or arr.shape[1] != m:
        raise ValueError("mean_scores must have shape (replicates, methods)")
    if arr.shape[0] < 2:
        raise ValueError("need at least two replicates")
    pct = np.zeros((m, m))
    ties = np.zeros((m, m), dtype=bool)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            diff = arr[:, j] - arr[:, i]
            decided = diff != 0
            if not decided.any():
                pct[i, j] = 50.0
                ties[i, j] = True
            else:
                pct[i, j] = 100.0 * float(np.mean(diff < 0))
    return pct, ties
