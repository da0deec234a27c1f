"""Pyramidal Lucas-Kanade point tracking.

The per-level kernel has two interchangeable backends: a compiled Cython
extension (built at install time) and a pure numpy fallback.  Selection
happens at import; set DATKIT_PURE_PYTHON=1 to force the fallback, e.g.
for the backend benchmark.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..dataio import Frame
from .base import to_gray_f64
from . import _flow_numpy

if os.environ.get("DATKIT_PURE_PYTHON"):
    _backend = _flow_numpy
else:
    try:
        from . import _flow_cy as _backend  # type: ignore[no-redef]
    except ImportError:
        _backend = _flow_numpy

BACKEND = _backend.BACKEND_NAME

_CONVERGENCE_EPS = 0.03  # px, per-iteration update norm
_MIN_EIGENVALUE = 1e-4  # on the summed structure matrix, [0,1] intensities


class FlowStatus(enum.IntEnum):
    CONVERGED = 0
    ILL_CONDITIONED = 1
    DIVERGED = 2


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    half_window: int = 7
    max_iterations: int = 20

    def __post_init__(self):
        if self.pyramid_levels < 1 or self.half_window < 1 or self.max_iterations < 1:
            raise ValueError("flow parameters must be positive")


def _downsample(img: np.ndarray) -> np.ndarray:
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    c = img[: 2 * h2, : 2 * w2]
    return 0.25 * (c[0::2, 0::2] + c[1::2, 0::2] + c[0::2, 1::2] + c[1::2, 1::2])


def _pyramid(img: np.ndarray, levels: int, half_win: int) -> List[np.ndarray]:
    pyr = [np.ascontiguousarray(img)]
    min_side = 2 * half_win + 3
    for _ in range(levels - 1):
        nxt = _downsample(pyr[-1])
        if min(nxt.shape) < min_side:
            break
        pyr.append(np.ascontiguousarray(nxt))
    return pyr


def _gradients(img: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    return np.ascontiguousarray(gx), np.ascontiguousarray(gy)


def lk_flow(
    prev: Frame | np.ndarray,
    nxt: Frame | np.ndarray,
    points: np.ndarray,
    params: FlowParams = FlowParams(),
) -> Tuple[np.ndarray, np.ndarray]:
    """Track points from prev to nxt.

    points: (P, 2) array of (x, y).  Returns (tracked (P, 2), status (P,))
    where status holds FlowStatus codes.  Ill conditioning (flat window)
    is sticky across levels; divergence means the finest level ran out of
    iterations without the update norm dropping below 0.03 px.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        return points.copy(), np.zeros(0, dtype=np.int8)

    img_prev = to_gray_f64(prev)
    img_next = to_gray_f64(nxt)
    pyr_prev = _pyramid(img_prev, params.pyramid_levels, params.half_window)
    pyr_next = _pyramid(img_next, params.pyramid_levels, params.half_window)
    levels = min(len(pyr_prev), len(pyr_next))

    n = points.shape[0]
    disp = np.zeros((n, 2), dtype=np.float64)
    final_status = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=np.uint8)

    for level in range(levels - 1, -1, -1):
        scale = float(1 << level)
        grad_x, grad_y = _gradients(pyr_prev[level])
        disp, status = _backend.track_level(
            pyr_prev[level],
            grad_x,
            grad_y,
            pyr_next[level],
            np.ascontiguousarray(points / scale),
            np.ascontiguousarray(disp),
            active,
            params.half_window,
            params.max_iterations,
            _CONVERGENCE_EPS,
            _MIN_EIGENVALUE,
        )
        status = np.asarray(status)
        newly_ill = (status == FlowStatus.ILL_CONDITIONED) & (active == 1)
        final_status[newly_ill] = FlowStatus.ILL_CONDITIONED
        active[newly_ill] = 0
        if level == 0:
            diverged = (status == FlowStatus.DIVERGED) & (active == 1)
            final_status[diverged] = FlowStatus.DIVERGED
        else:
            disp = disp * 2.0  # carry the estimate to the next finer level

    return points + disp, final_status
