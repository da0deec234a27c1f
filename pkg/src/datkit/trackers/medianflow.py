"""Median Flow tracker.

Box motion is the median displacement of a lattice of points tracked with
pyramidal Lucas-Kanade flow, validated by forward-backward error: each
point is tracked into the new frame and back again, and points whose
round trip does not land near where they started are distrusted.  Scale
comes from the median of pairwise inter-point distance ratios.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..dataio import Frame
from ..geometry import BoundingBox
from .base import Tracker, TrackerUpdate, check_init_box
from .flow import FlowParams, FlowStatus, lk_flow


@dataclass(frozen=True)
class MedianFlowParams:
    grid: int = 10  # points per side
    pyramid_levels: int = 3
    lk_window: int = 7  # half-width, px
    lk_iterations: int = 20
    fb_fail_threshold: float = 10.0  # px

    def __post_init__(self):
        if self.grid < 2:
            raise ValueError("grid must be >= 2")
        if min(self.pyramid_levels, self.lk_window, self.lk_iterations) < 1:
            raise ValueError("flow parameters must be positive")
        if self.fb_fail_threshold <= 0:
            raise ValueError("fb_fail_threshold must be positive")

    def flow_params(self) -> FlowParams:
        return FlowParams(
            pyramid_levels=self.pyramid_levels,
            half_window=self.lk_window,
            max_iterations=self.lk_iterations,
        )


def _lattice(box: BoundingBox, grid: int) -> np.ndarray:
    """grid x grid points centered in equal cells of the box."""
    fx = (np.arange(grid) + 0.5) / grid
    xs = box.x + fx * box.w
    ys = box.y + fx * box.h
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(pts.shape[0], k=1)
    d = pts[iu[0]] - pts[iu[1]]
    return np.hypot(d[:, 0], d[:, 1])


class MedianFlowTracker(Tracker):
    def __init__(self, params: Optional[MedianFlowParams] = None):
        super().__init__()
        self.params = params or MedianFlowParams()
        self._frame: Optional[Frame] = None
        self._box: Optional[BoundingBox] = None

    def init(self, frame: Frame, box: BoundingBox) -> None:
        check_init_box(box, frame)
        self._frame = frame
        self._box = box
        self._initialized = True

    def update(self, frame: Frame) -> TrackerUpdate:
        self._require_init()
        params = self.params
        box = self._box
        points = _lattice(box, params.grid)

        flow = params.flow_params()
        forward, f_status = lk_flow(self._frame, frame, points, flow)
        backward, b_status = lk_flow(frame, self._frame, forward, flow)

        ok = (f_status == FlowStatus.CONVERGED) & (b_status == FlowStatus.CONVERGED)
        fb_error = np.hypot(*(points - backward).T)

        min_survivors = (params.grid * params.grid) // 4
        if int(ok.sum()) == 0:
            return TrackerUpdate(box=None, quality=-float("inf"), failed=True)

        # Keep the better half of the round-trip-consistent points.
        idx = np.flatnonzero(ok)
        order = idx[np.argsort(fb_error[idx], kind="stable")]
        kept = order[: max(1, len(order) // 2)]
        median_fb = float(np.median(fb_error[kept]))
        quality = -median_fb

        if len(kept) < min_survivors or median_fb > params.fb_fail_threshold:
            return TrackerUpdate(box=None, quality=quality, failed=True)

        disp = forward[kept] - points[kept]
        dx = float(np.median(disp[:, 0]))
        dy = float(np.median(disp[:, 1]))

        scale = 1.0
        if len(kept) >= 2:
            d_old = _pairwise_distances(points[kept])
            d_new = _pairwise_distances(forward[kept])
            valid = d_old > 1e-9
            if valid.any():
                scale = float(np.median(d_new[valid] / d_old[valid]))

        new_w = box.w * scale
        new_h = box.h * scale
        if new_w < 2.0 or new_h < 2.0:
            return TrackerUpdate(box=None, quality=quality, failed=True)
        new_box = BoundingBox.from_center(box.cx + dx, box.cy + dy, new_w, new_h)

        self._frame = frame
        self._box = new_box
        return TrackerUpdate(box=new_box, quality=quality, failed=False)
