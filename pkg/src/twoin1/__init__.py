"""Design and evaluation of flexible seamless 2-in-1 adaptive trials."""

from .design import (
    DesignParams,
    EffectScenario,
    SsrResult,
    chw_statistic,
    conditional_power,
    info_fraction,
    logrank_drift,
    logrank_events,
    orr_z_cutoff,
    promising_threshold,
    reestimate,
)
from .sim import AccrualModel, OCSummary, TrialOutcome, aggregate, simulate
from .type1 import CminResult, Type1Breakdown, empirical_cmin, overall_type1, solve_cmin

__version__ = "0.1.0"

__all__ = [
    "AccrualModel",
    "CminResult",
    "DesignParams",
    "EffectScenario",
    "OCSummary",
    "SsrResult",
    "TrialOutcome",
    "Type1Breakdown",
    "aggregate",
    "chw_statistic",
    "conditional_power",
    "empirical_cmin",
    "info_fraction",
    "logrank_drift",
    "logrank_events",
    "orr_z_cutoff",
    "overall_type1",
    "promising_threshold",
    "reestimate",
    "simulate",
    "solve_cmin",
]
