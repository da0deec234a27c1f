"""Boxes, detections, and IOU-banded match classification.

Boxes are axis-aligned, corner + size, in continuous pixel units with the
origin at the top-left; area is ``w * h`` (inclusive-exclusive semantics,
so a box covering pixels 0..9 has w = 10).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional


class Category(str, enum.Enum):
    """Annotation categories. L/R belong to the camera wearer."""

    LEFT = "L"
    RIGHT = "R"
    OTHER = "O"
    NOT_HAND = "N"

    def __str__(self) -> str:  # "L" rather than "Category.LEFT" in output
        return self.value


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"box field {name} is not finite: {v!r}")
            object.__setattr__(self, name, v)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box dimensions must be positive, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class Detection:
    """A localized hand: box, category, and detector confidence.

    N is annotation-only negative data and never a valid detector output.
    """

    box: BoundingBox
    category: Category
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.category is Category.NOT_HAND:
            raise ValueError("detections cannot carry the not-hand category")


class MatchOutcome(enum.Enum):
    """Per-frame prediction-vs-ground-truth classification."""

    ACCURATE = "accurate"
    LOCALIZATION_ERROR = "localization_error"
    BACKGROUND_ERROR = "background_error"
    MISS = "miss"
    CORRECT_REJECTION = "correct_rejection"
    FALSE_ALARM = "false_alarm"


@dataclass(frozen=True)
class MatchThresholds:
    """IOU bands: >= accurate is a hit, [localization, accurate) is a hit
    with localization error, below localization is a background error."""

    accurate: float = 0.5
    localization: float = 0.15

    def __post_init__(self):
        if not 0.0 < self.localization < self.accurate <= 1.0:
            raise ValueError(
                f"thresholds must satisfy 0 < localization < accurate <= 1, "
                f"got localization={self.localization}, accurate={self.accurate}"
            )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def classify_match(
    pred: Optional[Detection],
    gt: Optional[BoundingBox],
    thresholds: MatchThresholds = MatchThresholds(),
) -> MatchOutcome:
    """Classify one (prediction, ground truth) pair into an outcome band."""
    if pred is None:
        return MatchOutcome.CORRECT_REJECTION if gt is None else MatchOutcome.MISS
    if gt is None:
        return MatchOutcome.FALSE_ALARM
    overlap = iou(pred.box, gt)
    if overlap >= thresholds.accurate:
        return MatchOutcome.ACCURATE
    if overlap >= thresholds.localization:
        return MatchOutcome.LOCALIZATION_ERROR
    return MatchOutcome.BACKGROUND_ERROR


def select_primary(
    detections: Iterable[Detection], category: Category
) -> Optional[Detection]:
    """Highest-confidence detection of a category, or None.

    Confidence ties break toward the larger box, then toward input order,
    so replayed runs are deterministic.
    """
    best: Optional[Detection] = None
    for det in detections:
        if det.category is not category:
            continue
        if best is None or det.confidence > best.confidence or (
            det.confidence == best.confidence and det.box.area > best.box.area
        ):
            best = det
    return best
