"""Annotation-replay detector with a declared noise model.

Stands in for a trained detector at desk scale: it answers detection
calls from ground truth, optionally dropping hits, jittering boxes, and
emitting spurious boxes, so the engine's recovery logic gets exercised.

Randomness is keyed per (seed, frame, category), not drawn from a
sequential stream: the engine only consults the detector on some frames,
and results must not depend on which ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from ..dataio import FrameSequence
from ..geometry import BoundingBox, Category, Detection, iou
from ..rng import SplitMix64, derive_seed


@dataclass(frozen=True)
class ReplayNoise:
    miss_prob: float = 0.0  # per-frame chance of dropping a present ground truth
    fp_prob: float = 0.0  # per-frame chance of a spurious candidate box
    jitter_sigma: float = 0.0  # px, Gaussian on box center and log-size
    confidence_floor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_prob", "fp_prob", "confidence_floor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "ReplayNoise":
        return cls(seed=seed)


@dataclass(frozen=True)
class DetectorResult:
    detections: Tuple[Detection, ...]
    cost_units: float = 1.0

    def __post_init__(self):
        for cat in (Category.LEFT, Category.RIGHT):
            if sum(1 for d in self.detections if d.category is cat) > 1:
                raise ValueError(f"more than one {cat.value} detection in one call")


class ReplayDetector:
    """Detector interface: detect(frame_index, category, frame=None)."""

    def __init__(self, sequence: FrameSequence, noise: Optional[ReplayNoise] = None):
        self._seq = sequence
        self.noise = noise or ReplayNoise()
        self._gt_sizes: List[Tuple[float, float]] = [
            (rec.box.w, rec.box.h)
            for rec in sequence.annotations
            if rec.category in (Category.LEFT, Category.RIGHT)
        ]

    def detect(self, frame_index: int, category: Category, frame=None) -> DetectorResult:
        if not 0 <= frame_index < len(self._seq):
            raise IndexError(f"frame index {frame_index} outside sequence")
        noise = self.noise
        rng = SplitMix64(derive_seed(noise.seed, frame_index, category.value))

        emitted: Optional[Detection] = None
        gt = self._seq.gt_box(frame_index, category)
        if gt is not None and rng.uniform() >= noise.miss_prob:
            emitted = self._perturbed(gt, category, rng)

        if rng.uniform() < noise.fp_prob:
            spurious = self._spurious(category, rng)
            # One box per wearer category: keep the more confident candidate.
            if emitted is None or spurious.confidence > emitted.confidence:
                emitted = spurious

        detections = (emitted,) if emitted is not None else ()
        return DetectorResult(detections=detections, cost_units=1.0)

    def _perturbed(self, gt: BoundingBox, category: Category, rng: SplitMix64) -> Detection:
        noise = self.noise
        if noise.jitter_sigma == 0.0:
            return Detection(box=gt, category=category, confidence=1.0)
        dx = rng.normal(noise.jitter_sigma)
        dy = rng.normal(noise.jitter_sigma)
        size_rel = noise.jitter_sigma / ((gt.w + gt.h) / 2.0)
        w = gt.w * math.exp(rng.normal(size_rel))
        h = gt.h * math.exp(rng.normal(size_rel))
        box = BoundingBox.from_center(gt.cx + dx, gt.cy + dy, w, h)
        confidence = max(noise.confidence_floor, iou(box, gt))
        return Detection(box=box, category=category, confidence=confidence)

    def _spurious(self, category: Category, rng: SplitMix64) -> Detection:
        width, height = self._seq.canvas
        if self._gt_sizes:
            w, h = self._gt_sizes[int(rng.uniform() * len(self._gt_sizes)) % len(self._gt_sizes)]
        else:
            w, h = 40.0, 40.0
        w = min(w, width)
        h = min(h, height)
        x = rng.uniform() * (width - w)
        y = rng.uniform() * (height - h)
        floor = self.noise.confidence_floor
        confidence = floor + rng.uniform() * (1.0 - floor)
        return Detection(
            box=BoundingBox(x, y, w, h), category=category, confidence=confidence
        )
