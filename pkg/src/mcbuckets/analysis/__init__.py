"""Exact effort, lower bounds, integrated effort and screening."""

from .density import H0, H1A, H1B, NAMED_DENSITIES, DensitySpec
from .effort import (
    EffortResult,
    ExitTable,
    RLPredicate,
    SimctestPredicate,
    StoppingPredicate,
    decision_probs_by_rating,
    effort_and_probs,
    make_predicate,
)
from .lower_bounds import LowerBoundConfig, lower_bound_basic, lower_bound_improved, wald_bound
from .quadrature import QuadratureResult, integrated_effort, integrated_lower_bound
from .reports import decision_probs_csv, effort_csv, lower_bound_csv, p_grid, table2, table2_csv
from .screening import ScreeningSetup, ScreenReport, screen

__all__ = [
    "H0",
    "H1A",
    "H1B",
    "NAMED_DENSITIES",
    "DensitySpec",
    "EffortResult",
    "ExitTable",
    "LowerBoundConfig",
    "QuadratureResult",
    "RLPredicate",
    "ScreenReport",
    "ScreeningSetup",
    "SimctestPredicate",
    "StoppingPredicate",
    "decision_probs_by_rating",
    "decision_probs_csv",
    "effort_and_probs",
    "effort_csv",
    "integrated_effort",
    "integrated_lower_bound",
    "lower_bound_basic",
    "lower_bound_csv",
    "lower_bound_improved",
    "make_predicate",
    "p_grid",
    "screen",
    "table2",
    "table2_csv",
    "wald_bound",
]
