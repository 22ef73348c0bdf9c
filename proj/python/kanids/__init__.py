"""KAN toolkit for binary intrusion detection."""

from ._kanids import (
    KAN,
    Baseline,
    KanidsError,
    RandomForest,
    iteration_count,
    per_class_metrics,
    run_cli,
    select_top_n,
    split_indices,
    synth,
)

__all__ = [
    "KAN",
    "Baseline",
    "KanidsError",
    "RandomForest",
    "iteration_count",
    "per_class_metrics",
    "run_cli",
    "select_top_n",
    "split_indices",
    "synth",
]
