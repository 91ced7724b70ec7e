"""Acceptance checks at the stated tolerances.

Each test records its sub-checks; the terminal summary prints one PASS/FAIL
line per criterion. Expensive runs are shared through session fixtures.
"""
import filecmp

import numpy as np
import pytest
from scipy import optimize

from riskbacktest import cli
from riskbacktest.calibration import simple_test_functions, two_sided_cct
from riskbacktest.distributions import (
    AST,
    GPD,
    Exponential,
    Normal,
    Pareto,
    SkewedT,
    StudentT,
    generic_expectile_curve,
)
from riskbacktest.forecasting import REFERENCE_DGP, evt_expectile, evt_fit, evt_var, fp_risk, gpd_fit_mle, simulate_ar_garch
from riskbacktest.identification import IdentificationSpec, expected_identification, identify
from riskbacktest.pipeline import RunConfig, run_magician_study, run_simulation, simulate_path, write_loss_csv
from riskbacktest.scoring import ScoreSpec, default_scores, score, validate_homogeneity

FAMILIES = {
    "Normal": Normal(0.5, 2.0),
    "Exponential": Exponential(1.5),
    "StudentT": StudentT(5.0),
    "Pareto": Pareto(3.0),
    "GPD": GPD(1.0, 0.2),
    "SkewedT": SkewedT(5.0, 1.5),
    "AST": AST(0.4, 4.0, 6.0),
}
BASEL_LEVELS = {"var": 0.99, "expectile": 0.99855, "vares": 0.975}


# -- 1. analytic oracles ---------------------------------------------------------

C1 = "analytic oracles"


def test_c1_normal_quantile_and_es(criteria):
    q = Normal().quantile(0.99)
    es = Normal().expected_shortfall(0.975)
    ok = criteria.record(1, C1, "normal quantile", abs(q - 2.326348) <= 1e-5, f"{q:.7f}")
    ok &= criteria.record(1, C1, "normal ES", abs(es - 2.337803) <= 1e-5, f"{es:.7f}")
    assert ok


@pytest.mark.parametrize("name", list(FAMILIES))
def test_c1_median_expectile_and_curve_at_mean(criteria, name):
    d = FAMILIES[name]
    e_err = abs(d.expectile(0.5) - d.mean())
    g_err = abs(d.expectile_curve(d.mean()) - 0.5)
    ok = criteria.record(1, C1, f"{name} expectile(0.5)=mean", e_err <= 1e-9, f"err {e_err:.1e}")
    ok &= criteria.record(1, C1, f"{name} G(mean)=0.5", g_err <= 1e-9, f"err {g_err:.1e}")
    assert ok


@pytest.mark.parametrize("name", list(FAMILIES))
def test_c1_closed_form_curves_match_partial_moments(criteria, name):
    d = FAMILIES[name]
    rng = np.random.default_rng(list(FAMILIES).index(name))
    z = d.quantile(rng.uniform(0.005, 0.995, 50))
    err = max(abs(float(d.expectile_curve(v)) - generic_expectile_curve(d, v)) for v in z)
    assert criteria.record(1, C1, f"{name} closed-form G", err <= 1e-6, f"max err {err:.1e}")


# -- 2. scoring correctness ------------------------------------------------------

C2 = "scoring homogeneity and strict consistency"


@pytest.mark.parametrize("functional,gen,degree", [
    ("var", "linear", 1.0), ("expectile", "quadratic", 2.0), ("vares", "sqrt", 0.5),
])
def test_c2_positive_degrees(criteria, functional, gen, degree):
    rep = validate_homogeneity(ScoreSpec(functional, BASEL_LEVELS[functional], gen), 1000, np.random.default_rng(10))
    ok = rep.degree == degree and rep.degree_confirmed and rep.trials == 1000
    assert criteria.record(2, C2, f"{functional}/{gen} degree {degree}", ok, f"rel err {rep.max_rel_err:.1e}")


@pytest.mark.parametrize("functional,gen", [("var", "log"), ("expectile", "neglog"), ("vares", "log")])
def test_c2_log_differences(criteria, functional, gen):
    rep = validate_homogeneity(ScoreSpec(functional, BASEL_LEVELS[functional], gen), 1000, np.random.default_rng(11))
    ok = rep.degree == 0.0 and rep.differences_only and rep.degree_confirmed
    assert criteria.record(2, C2, f"{functional}/{gen} 0-homogeneous differences", ok, f"rel err {rep.max_rel_err:.1e}")


def _discrete(rng):
    atoms = np.sort(rng.uniform(0.5, 5.0, 8))
    probs = rng.dirichlet(np.ones(8))
    return atoms, probs


def _discrete_quantile(atoms, probs, level):
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, level))
    return k, atoms[k], cdf


@pytest.mark.parametrize("functional", ["var", "expectile", "vares"])
def test_c2_grid_argmin_is_true_functional(criteria, functional):
    rng = np.random.default_rng({"var": 1, "expectile": 2, "vares": 3}[functional])
    level = {"var": 0.8, "expectile": 0.9, "vares": 0.8}[functional]
    step = 0.005 if functional != "vares" else 0.01
    grid = np.arange(0.3, 5.5, step)
    worst = 0.0
    for _ in range(5):
        atoms, probs = _discrete(rng)
        for spec in default_scores(functional, level):
            if functional == "var":
                truth = _discrete_quantile(atoms, probs, level)[1]
                expected = sum(p * score(spec, grid, a) for a, p in zip(atoms, probs))
                worst = max(worst, abs(grid[np.argmin(expected)] - truth) / step)
            elif functional == "expectile":
                def ident(r):
                    return float(np.dot(probs, np.abs(1 - level - (atoms > r)) * (r - atoms)))
                truth = optimize.brentq(ident, atoms[0], atoms[-1], xtol=1e-13)
                expected = sum(p * score(spec, grid, a) for a, p in zip(atoms, probs))
                worst = max(worst, abs(grid[np.argmin(expected)] - truth) / step)
            else:
                k, q, cdf = _discrete_quantile(atoms, probs, level)
                es_true = ((cdf[k] - level) * q + np.dot(probs[k + 1:], atoms[k + 1:])) / (1 - level)
                r1, r2 = np.meshgrid(grid, grid, indexing="ij")
                fc = np.stack([r1, r2], axis=-1)
                expected = sum(p * score(spec, fc, a) for a, p in zip(atoms, probs))
                i, j = np.unravel_index(np.argmin(expected), expected.shape)
                worst = max(worst, abs(grid[i] - q) / step, abs(grid[j] - es_true) / step)
    assert criteria.record(2, C2, f"{functional} grid argmin", worst <= 1.0 + 1e-9, f"off by {worst:.2f} grid steps")


# -- 3. identification -----------------------------------------------------------

C3 = "identification zero and ES sandwich"


@pytest.mark.parametrize("dname", ["Normal(0,1)", "StudentT(5)", "SkewedT(5,1.5)"])
def test_c3_identification_zero(criteria, dname):
    d = {"Normal(0,1)": Normal(), "StudentT(5)": StudentT(5.0),
         "SkewedT(5,1.5)": SkewedT(5.0, 1.5, standardized=True)}[dname]
    worst = 0.0
    for functional, level in BASEL_LEVELS.items():
        fc = fp_risk(d, functional, level)
        v = expected_identification(IdentificationSpec(functional, level), d, fc)
        worst = max(worst, float(np.max(np.abs(v))))
    assert criteria.record(3, C3, f"{dname} E V = 0", worst <= 1e-8, f"max |E V| {worst:.1e}")


def test_c3_es_sandwich(criteria):
    d = SkewedT(5.0, 1.5, standardized=True)
    a = 0.975
    q, es = d.quantile(a), d.expected_shortfall(a)
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(20):
        r1, r2 = q + rng.normal(0, 0.6), es + rng.normal(0, 0.6)
        v2 = expected_identification(IdentificationSpec("vares", a), d, (r1, r2))[1]
        upper = es - r2 + (a - float(d.cdf(r1))) * (q - r1) / (1 - a)
        bad += not (es - r2 - 1e-9 <= v2 <= upper + 1e-9)
    assert criteria.record(3, C3, "sandwich on 20 pairs", bad == 0, f"{bad} violations")


# -- 4. test size ------------------------------------------------------------------

C4 = "two-sided simple CCT size with oracle forecasts"


@pytest.mark.slow
@pytest.mark.parametrize("functional", ["var", "expectile", "vares"])
def test_c4_size(criteria, functional):
    level = BASEL_LEVELS[functional]
    rho = np.asarray(fp_risk(REFERENCE_DGP.innovation, functional, level))
    spec = IdentificationSpec(functional, level)
    rejections, reps = 0, 500
    for rep in range(reps):
        path = simulate_ar_garch(REFERENCE_DGP, 1000, rng=np.random.default_rng([4, rep]))
        if functional == "vares":
            fc = path.mu[:, None] + path.sigma[:, None] * rho
        else:
            fc = path.mu + path.sigma * rho
        v = identify(spec, fc, path.x)
        res = two_sided_cct(v, simple_test_functions(functional, fc))
        rejections += bool(res.p_value is not None and res.p_value <= 0.05)
    rate = rejections / reps
    assert criteria.record(4, C4, f"{functional} at {level}", 0.02 <= rate <= 0.09, f"rate {rate:.3f}")


# -- 5. magician experiment ----------------------------------------------------------------

C5 = "magician versus historians"
REFERENCE_VAR = {"magician": 0.0309, "historian-250": 0.0427, "historian-500": 0.0428, "historian-1000": 0.0429}
REFERENCE_VARES = {"magician": -0.0610, "historian-250": 0.0253, "historian-500": 0.0246, "historian-1000": 0.0348}


@pytest.fixture(scope="session")
def magician_long():
    return run_magician_study(95000, RunConfig().seed)


def test_c5_ordering_long(criteria, magician_long):
    f = magician_long.manifest["flags"]
    ok = criteria.record(5, C5, "VaR ordering at 95,000", f["magician_lowest_var_score"])
    ok &= criteria.record(5, C5, "VaR-ES ordering at 95,000", f["magician_lowest_vares_score"])
    assert ok


def _within(rows, key, table, tol=0.15):
    out = {}
    for r in rows:
        ref = table[r["forecaster"]]
        out[r["forecaster"]] = (r[key], abs(r[key] - ref) <= tol * abs(ref))
    return out


def test_c5_var_scores_within_tolerance(criteria, magician_long):
    res = _within(magician_long.tables["magician"][1], "mean_score_var", REFERENCE_VAR)
    detail = ", ".join(f"{k} {v:.4f} vs {REFERENCE_VAR[k]}" for k, (v, _) in res.items())
    assert criteria.record(5, C5, "VaR mean scores within 15%", all(ok for _, ok in res.values()), detail)


def test_c5_vares_scores_within_tolerance(criteria, magician_long):
    res = _within(magician_long.tables["magician"][1], "mean_score_vares", REFERENCE_VARES)
    detail = ", ".join(f"{k} {v:.4f} vs {REFERENCE_VARES[k]}" for k, (v, _) in res.items())
    assert criteria.record(5, C5, "VaR-ES mean scores within 15%", all(ok for _, ok in res.values()), detail)


def test_c5_short_series(criteria):
    b = run_magician_study(5000, RunConfig().seed)
    f = b.manifest["flags"]
    ok = criteria.record(5, C5, "magician first at 5,000",
                         f["magician_lowest_var_score"] and f["magician_lowest_vares_score"])
    # reported, not asserted
    criteria.record(5, C5, "exceedance inversion flag reported", "exceedance_inversion_observed" in f,
                    f"observed={f['exceedance_inversion_observed']}")
    assert ok


@pytest.mark.slow
def test_c5_magician_first_across_seeds(criteria):
    wins = 0
    for s in range(20):
        f = run_magician_study(95000, 1000 + s).manifest["flags"]
        wins += f["magician_lowest_var_score"] and f["magician_lowest_vares_score"]
    assert criteria.record(5, C5, "magician first in >= 95% of 20 seeds", wins >= 19, f"{wins}/20")


# -- 6. simulation study at reduced scale ---------------------------------------------

C6 = "reduced simulation study"


@pytest.fixture(scope="session")
def reduced_study():
    cfg = RunConfig()
    assert cfg.out_of_sample == 1000
    return run_simulation(cfg)


@pytest.mark.slow
def test_c6a_opt_ranks_first(criteria, reduced_study):
    misses = [
        f"{r['functional']} {r['level']} {r['score']}: rank {r['rank']}"
        for r in reduced_study.tables["summary"][1]
        if r["method"] == "opt" and r["rank"] != 1
    ]
    assert criteria.record(6, C6, "(a) opt ranks first", not misses, "; ".join(misses))


@pytest.mark.slow
def test_c6b_misspecified_fp_rejected(criteria, reduced_study):
    wanted = {("var", 0.95), ("var", 0.99), ("expectile", 0.98761), ("expectile", 0.99855),
              ("vares", 0.875), ("vares", 0.975)}
    misses = [
        f"{r['method']} {r['functional']} {r['level']}: p {r['two_sided_simple']}"
        for r in reduced_study.tables["pvalues"][1]
        if r["method"] in ("n-FP", "t-FP") and (r["functional"], r["level"]) in wanted
        and not (r["two_sided_simple"] is not None and r["two_sided_simple"] < 0.05)
    ]
    assert criteria.record(6, C6, "(b) n-FP and t-FP rejected", not misses, "; ".join(misses))


@pytest.mark.slow
def test_c6c_traffic_lights(criteria, reduced_study):
    bad = []
    for label, tl in reduced_study.matrices.items():
        z = tl.zones
        m = len(tl.methods)
        for i in range(m):
            for j in range(m):
                if i != j and ((z[i, j] == "green") != (z[j, i] == "red")):
                    bad.append(f"{label} {tl.methods[i]}/{tl.methods[j]} not antisymmetric")
        k = tl.methods.index("opt")
        bad += [f"{label} opt red against {tl.methods[i]}" for i in range(m) if z[i, k] == "red"]
    assert criteria.record(6, C6, "(c) antisymmetry, opt never red", not bad, "; ".join(bad[:5]))


# -- 7. EVT consistency ------------------------------------------------------------------

C7 = "EVT estimator consistency"


@pytest.mark.slow
def test_c7_gpd_mle(criteria):
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(100):
        fit = gpd_fit_mle(GPD(1.0, 0.2).sample(100000, rng))
        se_b, se_x = fit.stderr
        hits += abs(fit.scale - 1.0) <= 2 * se_b and abs(fit.shape - 0.2) <= 2 * se_x
    assert criteria.record(7, C7, "GPD MLE within 2 stderr", hits >= 90, f"{hits}/100")


@pytest.mark.slow
def test_c7_evt_var_and_expectile(criteria):
    rng = np.random.default_rng(8)
    t5 = StudentT(5.0)
    q, e = t5.quantile(0.999), t5.expectile(0.999)
    var_hits = exp_hits = 0
    for _ in range(100):
        fit = evt_fit(t5.sample(100000, rng), 2000)
        var_hits += abs(evt_var(fit, 0.999) / q - 1) <= 0.05
        exp_hits += abs(evt_expectile(fit, 0.999) / e - 1) <= 0.10
    ok = criteria.record(7, C7, "EVT VaR within 5%", var_hits >= 90, f"{var_hits}/100")
    ok &= criteria.record(7, C7, "EVT expectile within 10%", exp_hits >= 90, f"{exp_hits}/100")
    assert ok


# -- 8. determinism ------------------------------------------------------------------------

C8 = "byte-identical replay"
SMALL_ARGS = ["--window", "250", "--levels", "var=0.95;vares=0.875", "--seed", "3"]
SMALL_METHODS = ["--methods", "n-FP,n-FHS,st-EVT"]


def _replay(tmp_path, argv, head):
    first = tmp_path / "first"
    assert cli.main(argv + ["--out", str(first)]) == 0
    second = tmp_path / "second"
    assert cli.main(head + ["--config", str(first / "run.ini"), "--out", str(second)]) == 0
    names = sorted(p.name for p in first.glob("*.csv"))
    same = all(filecmp.cmp(first / n, second / n, shallow=False) for n in names)
    return same and bool(names), names


@pytest.mark.parametrize("command", ["backtest", "simulate", "magician", "short-study"])
def test_c8_replay(criteria, tmp_path, command):
    if command == "backtest":
        p = tmp_path / "loss.csv"
        write_loss_csv(str(p), simulate_path(9, 290).x)
        head = ["backtest", str(p)]
        argv = head + SMALL_ARGS + SMALL_METHODS
    elif command == "simulate":
        head = ["simulate"]
        argv = head + ["--out-of-sample", "40", "--methods", "n-FP,st-EVT,opt"] + SMALL_ARGS
    elif command == "magician":
        head = ["magician"]
        argv = head + ["--length", "3000", "--seed", "3"]
    else:
        head = ["short-study"]
        argv = head + ["--replicates", "2", "--out-of-sample", "30"] + SMALL_ARGS + SMALL_METHODS
    ok, names = _replay(tmp_path, argv, head)
    assert criteria.record(8, C8, command, ok, f"files {names}")


def test_c8_validate_is_repeatable(criteria, capsys):
    cli.main(["validate"])
    a = capsys.readouterr().out
    cli.main(["validate"])
    b = capsys.readouterr().out
    assert criteria.record(8, C8, "validate", a == b and "FAIL" not in a)
