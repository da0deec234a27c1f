"""Pluggable detectors: annotation replay with a noise model, and a
line-delimited JSON adapter for an external detector process."""

from .replay import DetectorResult, ReplayDetector, ReplayNoise
from .external import (
    ChannelClosedError,
    DetectorUnavailableError,
    ExternalDetector,
    ProtocolError,
)

__all__ = [
    "DetectorResult",
    "ReplayDetector",
    "ReplayNoise",
    "ExternalDetector",
    "DetectorUnavailableError",
    "ProtocolError",
    "ChannelClosedError",
]
