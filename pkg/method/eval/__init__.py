from .matching import MatchResult, match_lanes, pairwise_cost
from .metrics import compute_dataset_metrics, compute_metrics
from .once import once_dataset_metrics, once_metrics

__all__ = [
    "MatchResult",
    "compute_dataset_metrics",
    "compute_metrics",
    "match_lanes",
    "once_dataset_metrics",
    "once_metrics",
    "pairwise_cost",
]
