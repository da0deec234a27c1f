"""Detector-assisted tracking: the per-frame handoff state machine.

Exactly one component localizes the target in any frame.  The detector
runs while acquiring (a configurable streak of mutually overlapping
detections initializes the tracker) and on periodic checks while
disabled; the tracker runs otherwise, until it fails or ages out:

* Tracking: after `reset_iterations` tracker updates, the tracker is
  discarded and acquisition restarts (counters tracker drift).  If the
  tracker reports failure, the detector runs in the same frame.
* Acquiring: `consecutive_iou` consecutive detections, each overlapping
  the previous by more than `overlap_threshold`, (re)initialize a fresh
  tracker; the same count of consecutive detector misses disables the
  pipeline entirely.
* Disabled: nothing runs except a detector probe every
  `check_iterations` frames; a hit re-enters acquisition.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

from .dataio import Frame, FrameSequence
from .geometry import BoundingBox, Category, Detection, iou, select_primary
from .trackers.base import Tracker


class EngineError(RuntimeError):
    """The engine could not honor its contract (e.g. tracker init failed)."""


class UnusableBaselineError(ValueError):
    """Tracker-only baseline requested on a sequence with no ground truth."""


class Source(str, enum.Enum):
    DETECTOR = "DETECTOR"
    TRACKER = "TRACKER"
    NONE = "NONE"

    def __str__(self) -> str:
        return self.value


class RunMode(str, enum.Enum):
    DAT = "dat"
    DETECTOR_ONLY = "detector_only"
    TRACKER_ONLY = "tracker_only"


@dataclass(frozen=True)
class DatParams:
    reset_iterations: int  # R: tracker updates between scheduled resets
    consecutive_iou: int  # C: detection streak to init; miss streak to disable
    check_iterations: int  # K: probe period while disabled
    overlap_threshold: float = 0.1
    category: Category = Category.LEFT
    # Open switch: does a scheduled reset need the full C-streak (default)
    # or is a single detection enough to reinitialize?
    reset_requires_streak: bool = True

    def __post_init__(self):
        if min(self.reset_iterations, self.consecutive_iou, self.check_iterations) < 1:
            raise ValueError("R, C, and K must all be >= 1")
        if not 0.0 < self.overlap_threshold < 1.0:
            raise ValueError("overlap_threshold must be in (0, 1)")
        if self.category not in (Category.LEFT, Category.RIGHT):
            raise ValueError("engine tracks a camera-wearer category (L or R)")

    @property
    def name(self) -> str:
        return f"{self.reset_iterations}/{self.consecutive_iou}/{self.check_iterations}"

    @classmethod
    def parse(cls, text: str, **kwargs) -> "DatParams":
        parts = text.split("/")
        if len(parts) != 3:
            raise ValueError(f"expected R/C/K, got {text!r}")
        r, c, k = (int(p) for p in parts)
        return cls(reset_iterations=r, consecutive_iou=c, check_iterations=k, **kwargs)


@dataclass
class Acquiring:
    hit_streak: int = 0
    miss_streak: int = 0
    last_detection: Optional[Detection] = None
    required_hits: int = 0  # set by the engine; 1 on streak-free scheduled resets

    tag = "acquiring"


@dataclass
class Tracking:
    tracker: Tracker
    frames_since_init: int = 0

    tag = "tracking"


@dataclass
class Disabled:
    frames_idle: int = 0

    tag = "disabled"


DatState = Union[Acquiring, Tracking, Disabled]


@dataclass(frozen=True)
class FrameOutcome:
    frame_index: int
    box: Optional[BoundingBox]
    source: Source
    detector_called: bool
    tracker_updated: bool
    state_after: str

    def __post_init__(self):
        if self.source is Source.DETECTOR and not self.detector_called:
            raise ValueError("detector-sourced outcome without a detector call")
        if self.source is Source.TRACKER and not self.tracker_updated:
            raise ValueError("tracker-sourced outcome without a tracker update")
        if (self.box is None) != (self.source is Source.NONE):
            raise ValueError("box present iff source != NONE")


TrackerFactory = Callable[[], Tracker]


class DatEngine:
    """One engine instance per (sequence, category); strictly sequential."""

    def __init__(self, detector, tracker_factory: TrackerFactory, params: DatParams):
        self.detector = detector
        self.tracker_factory = tracker_factory
        self.params = params
        self.state: DatState = Acquiring(required_hits=params.consecutive_iou)

    def _detect(self, frame_index: int, frame: Optional[Frame]) -> Optional[Detection]:
        result = self.detector.detect(frame_index, self.params.category, frame)
        return select_primary(result.detections, self.params.category)

    def _init_tracker(self, frame: Frame, box: BoundingBox) -> Tracking:
        tracker = self.tracker_factory()
        try:
            tracker.init(frame, box)
        except ValueError as exc:
            raise EngineError(
                f"tracker initialization failed on frame {frame.index}: {exc}"
            ) from exc
        return Tracking(tracker=tracker, frames_since_init=0)

    def _acquire(self, state: Acquiring, frame: Frame) -> tuple[DatState, Optional[BoundingBox], Source]:
        """One detector-driven acquiring step (spec'd streak rules)."""
        p = self.params
        primary = self._detect(frame.index, frame)
        if primary is not None:
            consistent = (
                state.last_detection is None
                or iou(primary.box, state.last_detection.box) > p.overlap_threshold
            )
            state.hit_streak = state.hit_streak + 1 if consistent else 1
            state.miss_streak = 0
            state.last_detection = primary
            next_state: DatState = state
            if state.hit_streak >= state.required_hits:
                next_state = self._init_tracker(frame, primary.box)
            return next_state, primary.box, Source.DETECTOR
        state.miss_streak += 1
        state.hit_streak = 0
        state.last_detection = None
        if state.miss_streak >= p.consecutive_iou:
            return Disabled(frames_idle=0), None, Source.NONE
        return state, None, Source.NONE

    def step(self, frame: Frame) -> FrameOutcome:
        p = self.params
        state = self.state
        detector_called = False
        tracker_updated = False
        box: Optional[BoundingBox] = None
        source = Source.NONE

        # Scheduled reset: age out the tracker before processing this frame.
        if isinstance(state, Tracking) and state.frames_since_init >= p.reset_iterations:
            required = p.consecutive_iou if p.reset_requires_streak else 1
            state = Acquiring(required_hits=required)

        if isinstance(state, Tracking):
            tracker_updated = True
            update = state.tracker.update(frame)
            state.frames_since_init += 1
            if not update.failed:
                box, source = update.box, Source.TRACKER
            else:
                # Failed: the detector takes over in this same frame.
                state = Acquiring(required_hits=p.consecutive_iou)

        if isinstance(state, Acquiring):
            detector_called = True
            state, box, source = self._acquire(state, frame)
        elif isinstance(state, Disabled):
            state.frames_idle += 1
            if state.frames_idle % p.check_iterations == 0:
                detector_called = True
                fresh = Acquiring(required_hits=p.consecutive_iou)
                probed, box, source = self._acquire(fresh, frame)
                if source is Source.DETECTOR:
                    state = probed  # re-entered acquisition (or straight to tracking)

        self.state = state
        return FrameOutcome(
            frame_index=frame.index,
            box=box,
            source=source,
            detector_called=detector_called,
            tracker_updated=tracker_updated,
            state_after=state.tag,
        )


def _run_detector_only(
    sequence: FrameSequence, detector, category: Category
) -> List[FrameOutcome]:
    trace = []
    for index in range(len(sequence)):
        result = detector.detect(index, category, None)
        primary = select_primary(result.detections, category)
        trace.append(
            FrameOutcome(
                frame_index=index,
                box=primary.box if primary else None,
                source=Source.DETECTOR if primary else Source.NONE,
                detector_called=True,
                tracker_updated=False,
                state_after="detector_only",
            )
        )
    return trace


def _run_tracker_only(
    sequence: FrameSequence, tracker_factory: TrackerFactory, category: Category
) -> List[FrameOutcome]:
    annotated = sequence.annotated_frames(category)
    if not annotated:
        raise UnusableBaselineError(
            f"tracker-only baseline needs at least one {category.value} annotation"
        )
    first = annotated[0]
    tracker: Optional[Tracker] = None
    trace = []
    for frame in sequence.iter_frames():
        index = frame.index
        if index < first:
            trace.append(
                FrameOutcome(index, None, Source.NONE, False, False, "tracker_only")
            )
            continue
        if index == first:
            tracker = tracker_factory()
            box = sequence.gt_box(index, category)
            try:
                tracker.init(frame, box)
            except ValueError as exc:
                raise EngineError(
                    f"tracker initialization failed on frame {index}: {exc}"
                ) from exc
            trace.append(
                FrameOutcome(index, box, Source.TRACKER, False, True, "tracker_only")
            )
            continue
        update = tracker.update(frame)
        trace.append(
            FrameOutcome(
                frame_index=index,
                box=update.box,
                source=Source.NONE if update.failed else Source.TRACKER,
                detector_called=False,
                tracker_updated=True,
                state_after="tracker_only",
            )
        )
    return trace


def dat_run(
    sequence: FrameSequence,
    detector,
    tracker_factory: Optional[TrackerFactory],
    params: DatParams,
    mode: RunMode = RunMode.DAT,
) -> List[FrameOutcome]:
    """Run one engine mode over a sequence and return the per-frame trace."""
    if mode is RunMode.DETECTOR_ONLY:
        return _run_detector_only(sequence, detector, params.category)
    if mode is RunMode.TRACKER_ONLY:
        return _run_tracker_only(sequence, tracker_factory, params.category)
    engine = DatEngine(detector, tracker_factory, params)
    return [engine.step(frame) for frame in sequence.iter_frames()]
