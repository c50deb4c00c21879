"""Grouped feature importance and combined feature effect plots."""

__version__ = "0.1.0"

from .core import (ContractError, DataError, Dataset, GroupSpec, NumericError, ResamplingPlan,
                   derive_seed, estimate_ge, estimate_ge_resampled, make_splits)

__all__ = [
    "__version__", "ContractError", "DataError", "Dataset", "GroupSpec", "NumericError",
    "ResamplingPlan", "derive_seed", "estimate_ge", "estimate_ge_resampled", "make_splits",
]
