import numpy as np
import pytest
from scipy import stats

from riskbacktest.comparative import dm_test, rank_by_mean_score, sign_preference_table, traffic_light_matrix


def test_dm_zones():
    rng = np.random.default_rng(0)
    better = rng.normal(-0.5, 1.0, 300)
    v = dm_test(better)
    assert v.zone == "green" and v.p_plus < 0.05
    assert dm_test(-better).zone == "red"
    assert dm_test(rng.normal(0.0, 1.0, 300)).zone == "yellow"


def test_dm_statistic_value():
    d = np.random.default_rng(1).normal(0.1, 1.0, 200)
    v = dm_test(d)
    t = d.mean() / np.sqrt(d.var() / d.size)
    assert v.dm_statistic == pytest.approx(t)
    assert v.p_plus == pytest.approx(stats.norm.cdf(t))
    assert v.p_plus + v.p_minus == pytest.approx(1.0)


def test_dm_degenerate_is_yellow():
    v = dm_test(np.full(50, 0.3))
    assert v.degenerate and v.zone == "yellow" and v.p_plus is None


def test_dm_needs_thirty_points():
    with pytest.raises(ValueError):
        dm_test(np.ones(29))


def test_traffic_light_antisymmetry():
    rng = np.random.default_rng(2)
    base = rng.normal(size=500)
    scores = {"a": base, "b": base + 0.3 + 0.5 * rng.normal(size=500), "c": base - 0.2 + 0.5 * rng.normal(size=500)}
    tl = traffic_light_matrix(list(scores), scores)
    for i, s in enumerate(tl.methods):
        assert tl.zone(s, s) == "gray"
        for t in tl.methods:
            if s == t:
                continue
            z, w = tl.zone(s, t), tl.zone(t, s)
            assert (z == "green") == (w == "red")
            assert (z == "yellow") == (w == "yellow")
    assert tl.zone("b", "c") == "green"


def test_rank_scaling_and_ties():
    scores = np.array([[1.0, 1.0], [0.5, 0.5], [1.0, 1.0]])
    ranked = rank_by_mean_score(["x", "y", "z"], scores, 0.9)
    assert [r.rank for r in ranked] == [2, 1, 3]
    assert ranked[1].scaled_mean == pytest.approx(5.0)


def test_sign_preference():
    means = np.array([[1.0, 0.5, 1.0], [1.0, 2.0, 1.0], [1.0, 0.1, 1.0]])
    pct, ties = sign_preference_table(["a", "b", "c"], means)
    assert pct[0, 1] == pytest.approx(200 / 3)
    assert pct[1, 0] == pytest.approx(100 / 3)
    assert ties[0, 2] and pct[0, 2] == 50.0
    assert pct[0, 0] == 0.0
