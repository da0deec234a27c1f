"""Detector-assisted tracking toolkit.

A pluggable detector initializes, resets, and re-acquires a fast online
tracker (Median Flow or KCF) through a per-frame state machine, with the
synthetic data and evaluation protocol needed to study the resulting
accuracy/throughput trade-off.
"""

from .geometry import (
    BoundingBox,
    Category,
    Detection,
    MatchOutcome,
    MatchThresholds,
    classify_match,
    iou,
    select_primary,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "Category",
    "Detection",
    "MatchOutcome",
    "MatchThresholds",
    "classify_match",
    "iou",
    "select_primary",
    "__version__",
]
