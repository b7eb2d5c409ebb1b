"""Split predictive checks for Bayesian model criticism."""

from .checks import CheckConfig, CheckResult, divided_spc, pop_pc_v1, ppc, run_check, single_spc
from .core import (
    GroupedDataset,
    IidDataset,
    PValue,
    SeedSpec,
    TimeSeriesDataset,
    two_sided,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "CheckConfig",
    "CheckResult",
    "GroupedDataset",
    "IidDataset",
    "PValue",
    "SeedSpec",
    "TimeSeriesDataset",
    "divided_spc",
    "pop_pc_v1",
    "ppc",
    "run_check",
    "single_spc",
    "two_sided",
    "validate",
]
