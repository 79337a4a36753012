from .forest import RegressionForest, numba_available, numba_enabled
from .strategy import (
    CostAggregate,
    SearchState,
    Surrogate,
    acquire,
    expected_improvement,
    fit_surrogate,
    next_cap,
    propose,
    update,
)

__all__ = [
    "CostAggregate",
    "RegressionForest",
    "SearchState",
    "Surrogate",
    "acquire",
    "expected_improvement",
    "fit_surrogate",
    "next_cap",
    "numba_available",
    "numba_enabled",
    "propose",
    "update",
]
