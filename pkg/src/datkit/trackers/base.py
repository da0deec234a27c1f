"""Common tracker contract.

A tracker is initialized exactly once with a frame and a box, then updated
frame by frame.  Updates either succeed with a box or fail without one;
trackers must report failure explicitly (the engine relies on it), so the
update record enforces failed <=> box absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..dataio import Frame
from ..geometry import BoundingBox


class TrackerNotInitialized(RuntimeError):
    """update() called before init()."""


@dataclass(frozen=True)
class TrackerUpdate:
    box: Optional[BoundingBox]
    quality: float
    failed: bool

    def __post_init__(self):
        if self.failed and self.box is not None:
            raise ValueError("a failed update cannot carry a box")
        if not self.failed and self.box is None:
            raise ValueError("a successful update must carry a box")


def to_gray_f64(frame: Frame | np.ndarray) -> np.ndarray:
    """Frame or uint8 array -> float64 intensities in [0, 1]."""
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    return pixels.astype(np.float64) / 255.0


def check_init_box(box: BoundingBox, frame: Frame, min_side: float = 2.0) -> None:
    """Reject degenerate initialization boxes before any model is built."""
    if box.w < min_side or box.h < min_side:
        raise ValueError(
            f"initialization box {box.w:.2f}x{box.h:.2f} is too small "
            f"(need at least {min_side}x{min_side})"
        )
    if box.x2 <= 0 or box.y2 <= 0 or box.x >= frame.width or box.y >= frame.height:
        raise ValueError("initialization box lies outside the frame")


class Tracker:
    """Base class enforcing the init-before-update contract."""

    def __init__(self):
        self._initialized = False

    def init(self, frame: Frame, box: BoundingBox) -> None:
        raise NotImplementedError

    def update(self, frame: Frame) -> TrackerUpdate:
        raise NotImplementedError

    def _require_init(self) -> None:
        if not self._initialized:
            raise TrackerNotInitialized(f"{type(self).__name__}.update before init")
