"""Threshold policies for flexible loads that buy energy and sell reserve."""
from .errors import BudgetExceeded, FixedPointError, NonMonotoneError, NumericalError, ValidationError
from .price_model import (
    AffineSeasonality,
    Empirical,
    Gaussian,
    PointMass,
    PriceModel,
    PricePair,
    StageDistribution,
    TabulatedCDF,
    effective_cdf,
    effective_price,
    sample_path,
    sample_paths,
)
from .threshold_engine import (
    CorrelatedSolution,
    LoadSpec,
    ThresholdTable,
    augment_horizon,
    compile_correlated,
    compile_deterministic,
    compile_independent,
    g_integral,
    value_function,
)
from .policy import Decision, LoadState, baseline_decision, optimal_decision, reserve_rule, rollout

__version__ = "0.1.0"
