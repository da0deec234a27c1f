"""Online single-object trackers and their numerical substrates."""

from .base import Tracker, TrackerNotInitialized, TrackerUpdate
from .kcf import KcfParams, KcfTracker
from .medianflow import MedianFlowParams, MedianFlowTracker

__all__ = [
    "Tracker",
    "TrackerNotInitialized",
    "TrackerUpdate",
    "KcfParams",
    "KcfTracker",
    "MedianFlowParams",
    "MedianFlowTracker",
    "make_tracker",
]


def make_tracker(name: str, **params):
    """Tracker registry used by the run configuration ("mf" or "kcf")."""
    if name == "mf":
        return MedianFlowTracker(MedianFlowParams(**params) if params else None)
    if name == "kcf":
        return KcfTracker(KcfParams(**params) if params else None)
    raise ValueError(f"unknown tracker {name!r} (expected 'mf' or 'kcf')")
