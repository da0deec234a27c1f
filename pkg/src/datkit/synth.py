"""Deterministic synthetic sequences with a trackable moving target.

The target is a high-contrast seeded texture patch translated along a
piecewise-linear waypoint trajectory, with optional per-frame center jitter,
scripted occlusion intervals (the patch is overdrawn but ground truth is
still emitted, so a lost tracker scores misses there), and scripted absence
intervals (no target, no ground truth).

Rendering is a pure function of (spec, seed): jitter and background noise
are keyed per frame index, so frames can be rendered lazily and in any
order while staying byte-identical run to run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataio import AnnotationRecord, Frame, FrameSequence
from .geometry import BoundingBox, Category
from .rng import SplitMix64, derive_seed

DEFAULT_CANVAS = (720, 405)
_TEXTURE_BASE = 32  # side of the seeded base texture, resampled per frame
_TEXTURE_OCTAVES = ((16, 0.5), (8, 0.3), (4, 0.2))  # (cell px, weight)
_OCCLUDER_INTENSITY = 96
_OCCLUDER_INFLATE = 1.4

Background = Union[str, Tuple[str, float]]  # "flat" | "gradient" | ("noise", sigma)


class SynthSpecError(ValueError):
    """An inconsistent generator spec."""


@dataclass(frozen=True)
class SynthSpec:
    n_frames: int
    # (frame_index, center x, center y, target w, target h)
    waypoints: Tuple[Tuple[int, float, float, float, float], ...]
    canvas: Tuple[int, int] = DEFAULT_CANVAS
    jitter_sigma: float = 0.0
    texture_seed: int = 0
    occlusions: Tuple[Tuple[int, int], ...] = ()
    absences: Tuple[Tuple[int, int], ...] = ()
    background: Background = "flat"
    category: Category = Category.LEFT

    def __post_init__(self):
        if self.n_frames < 1:
            raise SynthSpecError("n_frames must be >= 1")
        if not self.waypoints:
            raise SynthSpecError("at least one waypoint required")
        indices = [int(w[0]) for w in self.waypoints]
        if indices != sorted(set(indices)):
            raise SynthSpecError("waypoint frame indices must be strictly increasing")
        if indices[0] != 0:
            raise SynthSpecError("first waypoint must be at frame 0")
        if indices[-1] != self.n_frames - 1:
            raise SynthSpecError(
                f"last waypoint must be at frame {self.n_frames - 1}, got {indices[-1]}"
            )
        if self.jitter_sigma < 0:
            raise SynthSpecError("jitter_sigma must be >= 0")
        intervals = list(self.occlusions) + list(self.absences)
        for start, end in intervals:
            if not 0 <= start < end <= self.n_frames:
                raise SynthSpecError(f"interval [{start}, {end}) outside [0, {self.n_frames})")
        ordered = sorted(intervals)
        for (s1, e1), (s2, e2) in zip(ordered, ordered[1:]):
            if s2 < e1:
                raise SynthSpecError(
                    f"occlusion/absence intervals [{s1}, {e1}) and [{s2}, {e2}) overlap"
                )
        kind = self.background if isinstance(self.background, str) else self.background[0]
        if kind not in ("flat", "gradient", "noise"):
            raise SynthSpecError(f"unknown background kind {kind!r}")
        if kind == "noise" and (
            isinstance(self.background, str) or self.background[1] < 0
        ):
            raise SynthSpecError("noise background needs a non-negative sigma")

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        doc = json.loads(text)
        try:
            background = doc.get("background", "flat")
            if isinstance(background, dict):
                background = ("noise", float(background["noise"]))
            elif isinstance(background, list):
                background = (str(background[0]), float(background[1]))
            return cls(
                n_frames=int(doc["n_frames"]),
                waypoints=tuple(tuple(w) for w in doc["waypoints"]),
                canvas=tuple(doc.get("canvas", DEFAULT_CANVAS)),
                jitter_sigma=float(doc.get("jitter_sigma", 0.0)),
                texture_seed=int(doc.get("texture_seed", 0)),
                occlusions=tuple(tuple(o) for o in doc.get("occlusions", ())),
                absences=tuple(tuple(a) for a in doc.get("absences", ())),
                background=background,
                category=Category(doc.get("category", "L")),
            )
        except KeyError as exc:
            raise SynthSpecError(f"spec document missing field {exc}") from None


def _in_intervals(frame: int, intervals: Sequence[Tuple[int, int]]) -> bool:
    return any(start <= frame < end for start, end in intervals)


def _base_texture(texture_seed: int) -> np.ndarray:
    """High-contrast texture as stacked octaves of random cells.

    Per-pixel noise would decorrelate under the trackers' pyramid
    downsampling and single-scale cells keep a fixed (too small)
    convergence basin at every level; mixing coarse-to-fine octaves gives
    the broad-then-sharp structure pyramidal flow needs, like natural
    imagery.
    """
    rng = SplitMix64(derive_seed(texture_seed, "texture"))
    side = _TEXTURE_BASE
    acc = np.zeros((side, side), dtype=np.float64)
    for cell, weight in _TEXTURE_OCTAVES:
        cells = -(-side // cell)
        layer = rng.uniforms(cells * cells).reshape(cells, cells)
        layer = np.repeat(np.repeat(layer, cell, axis=0), cell, axis=1)[:side, :side]
        acc += weight * layer
    acc -= acc.min()
    acc /= acc.max()
    return np.minimum(acc * 256.0, 255.0).astype(np.uint8)


def _resample_nearest(base: np.ndarray, h: int, w: int) -> np.ndarray:
    rows = (np.arange(h) * base.shape[0]) // h
    cols = (np.arange(w) * base.shape[1]) // w
    return base[np.ix_(rows, cols)]


class _Renderer:
    """Per-frame renderer closed over the spec, seed, and trajectory."""

    def __init__(self, spec: SynthSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.texture = _base_texture(spec.texture_seed)
        t = np.arange(spec.n_frames, dtype=np.float64)
        wp = np.asarray(spec.waypoints, dtype=np.float64)
        self.cx = np.interp(t, wp[:, 0], wp[:, 1])
        self.cy = np.interp(t, wp[:, 0], wp[:, 2])
        self.w = np.interp(t, wp[:, 0], wp[:, 3])
        self.h = np.interp(t, wp[:, 0], wp[:, 4])

    def jitter(self, index: int) -> Tuple[float, float]:
        if self.spec.jitter_sigma == 0.0:
            return 0.0, 0.0
        rng = SplitMix64(derive_seed(self.seed, "jitter", index))
        return (
            rng.normal(self.spec.jitter_sigma),
            rng.normal(self.spec.jitter_sigma),
        )

    def gt_box(self, index: int) -> Optional[BoundingBox]:
        """Continuous ground-truth box for a frame; None during absences."""
        if _in_intervals(index, self.spec.absences):
            return None
        jx, jy = self.jitter(index)
        return BoundingBox.from_center(
            self.cx[index] + jx, self.cy[index] + jy, self.w[index], self.h[index]
        )

    def background(self, index: int) -> np.ndarray:
        width, height = self.spec.canvas
        kind = (
            self.spec.background
            if isinstance(self.spec.background, str)
            else self.spec.background[0]
        )
        if kind == "flat":
            return np.full((height, width), 128, dtype=np.uint8)
        if kind == "gradient":
            ramp = np.linspace(32.0, 224.0, width)
            return np.broadcast_to(ramp, (height, width)).astype(np.uint8)
        sigma = self.spec.background[1]
        rng = SplitMix64(derive_seed(self.seed, "background", index))
        noise = rng.normals(width * height, sigma).reshape(height, width)
        return np.clip(128.0 + noise, 0, 255).astype(np.uint8)

    def render(self, index: int) -> Frame:
        img = self.background(index)
        box = self.gt_box(index)
        if box is not None:
            width, height = self.spec.canvas
            if box.x < 0 or box.y < 0 or box.x2 > width or box.y2 > height:
                raise SynthSpecError(
                    f"frame {index}: target box ({box.x:.2f}, {box.y:.2f}, "
                    f"{box.w:.2f}, {box.h:.2f}) leaves the {width}x{height} canvas"
                )
            x0 = int(round(box.x))
            y0 = int(round(box.y))
            pw = max(1, int(round(box.w)))
            ph = max(1, int(round(box.h)))
            x0 = min(x0, width - pw)
            y0 = min(y0, height - ph)
            img[y0 : y0 + ph, x0 : x0 + pw] = _resample_nearest(self.texture, ph, pw)
            if _in_intervals(index, self.spec.occlusions):
                ow = min(width, int(round(box.w * _OCCLUDER_INFLATE)))
                oh = min(height, int(round(box.h * _OCCLUDER_INFLATE)))
                ox = int(np.clip(round(box.cx - ow / 2.0), 0, width - ow))
                oy = int(np.clip(round(box.cy - oh / 2.0), 0, height - oh))
                img[oy : oy + oh, ox : ox + ow] = _OCCLUDER_INTENSITY
        return Frame(index=index, pixels=img)


def generate_sequence(
    spec: SynthSpec, seed: int, sequence_id: str = "synthetic"
) -> FrameSequence:
    """Generate a sequence; frames render lazily but the trajectory (and
    its canvas-bounds check) is validated up front."""
    renderer = _Renderer(spec, seed)
    width, height = spec.canvas
    annotations: List[AnnotationRecord] = []
    for i in range(spec.n_frames):
        box = renderer.gt_box(i)
        if box is None:
            continue
        if box.x < 0 or box.y < 0 or box.x2 > width or box.y2 > height:
            raise SynthSpecError(
                f"frame {i}: target box ({box.x:.2f}, {box.y:.2f}, "
                f"{box.w:.2f}, {box.h:.2f}) leaves the {width}x{height} canvas"
            )
        annotations.append(AnnotationRecord(i, spec.category, box))
    return FrameSequence(
        n_frames=spec.n_frames,
        canvas=spec.canvas,
        annotations=annotations,
        participant_id="",
        sequence_id=sequence_id,
        _loader=renderer.render,
    )
