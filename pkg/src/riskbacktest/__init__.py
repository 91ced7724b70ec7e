"""Backtesting toolkit for Value-at-Risk, expectiles and the (VaR, ES) pair."""

__version__ = "0.1.0"

from .distributions import (
    AST,
    GPD,
    DistributionSpec,
    Exponential,
    MomentError,
    Normal,
    Pareto,
    SkewedT,
    StudentT,
)
from .scoring import ScoreDomainError, ScoreSpec, default_scores, expected_score, score, validate_homogeneity
from .identification import IdentificationSpec, expected_identification, identify
from .calibration import (
    CalibrationReport,
    average_calibration_test,
    binomial_var_test,
    make_test_functions,
    one_sided_cct,
    simple_test_functions,
    two_sided_cct,
)
from .comparative import ComparisonVerdict, TrafficLights, dm_test, rank_by_mean_score, traffic_light_matrix
from .forecasting import (
    REFERENCE_DGP,
    ArGarchFilter,
    ArGarchParams,
    EvtRisk,
    HistoricalSimulationRisk,
    ParametricRisk,
    simulate_ar_garch,
)
from .pipeline import RunConfig, emit, ingest_csv, run_magician_study, run_simulation, run_backtest
