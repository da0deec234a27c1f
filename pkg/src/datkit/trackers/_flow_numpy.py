"""Pure numpy backend for the per-level point tracking kernel.

Vectorized over points: per iteration it gathers every active point's
window with bilinear interpolation and solves the 2x2 normal equations in
closed form.  Semantics match the compiled backend exactly.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"

STATUS_CONVERGED = 0
STATUS_ILL_CONDITIONED = 1
STATUS_DIVERGED = 2


def _bilinear(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample img at float coords with border replication."""
    h, w = img.shape
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(x.astype(np.int64), max(w - 2, 0))
    y0 = np.minimum(y.astype(np.int64), max(h - 2, 0))
    fx = x - x0
    fy = y - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    i00 = img[y0, x0]
    i01 = img[y0, x1]
    i10 = img[y1, x0]
    i11 = img[y1, x1]
    return (
        i00 * (1.0 - fx) * (1.0 - fy)
        + i01 * fx * (1.0 - fy)
        + i10 * (1.0 - fx) * fy
        + i11 * fx * fy
    )


def track_level(
    prev: np.ndarray,
    grad_x: np.ndarray,
    grad_y: np.ndarray,
    nxt: np.ndarray,
    pts: np.ndarray,
    guess: np.ndarray,
    active: np.ndarray,
    half_win: int,
    max_iter: int,
    eps: float,
    min_eig: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Refine per-point displacements at one pyramid level.

    Returns (displacement (P,2), status (P,)); inactive points pass their
    guess through untouched with status CONVERGED.
    """
    n = pts.shape[0]
    disp = guess.astype(np.float64).copy()
    status = np.zeros(n, dtype=np.int8)
    active = np.asarray(active) != 0  # uint8 flags -> boolean mask
    if not active.any():
        return disp, status

    offsets = np.arange(-half_win, half_win + 1, dtype=np.float64)
    off_y, off_x = np.meshgrid(offsets, offsets, indexing="ij")
    wx = pts[:, 0][:, None, None] + off_x  # (P, W, W)
    wy = pts[:, 1][:, None, None] + off_y

    template = _bilinear(prev, wx, wy)
    ix = _bilinear(grad_x, wx, wy)
    iy = _bilinear(grad_y, wx, wy)
    gxx = np.einsum("pij,pij->p", ix, ix)
    gxy = np.einsum("pij,pij->p", ix, iy)
    gyy = np.einsum("pij,pij->p", iy, iy)
    trace = gxx + gyy
    lambda_min = 0.5 * (trace - np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy))

    ill = active & (lambda_min < min_eig)
    status[ill] = STATUS_ILL_CONDITIONED
    det = gxx * gyy - gxy * gxy

    pending = active & ~ill
    for _ in range(max_iter):
        if not pending.any():
            break
        idx = np.flatnonzero(pending)
        warped = _bilinear(
            nxt,
            wx[idx] + disp[idx, 0][:, None, None],
            wy[idx] + disp[idx, 1][:, None, None],
        )
        diff = template[idx] - warped
        bx = np.einsum("pij,pij->p", diff, ix[idx])
        by = np.einsum("pij,pij->p", diff, iy[idx])
        ex = (gyy[idx] * bx - gxy[idx] * by) / det[idx]
        ey = (gxx[idx] * by - gxy[idx] * bx) / det[idx]
        disp[idx, 0] += ex
        disp[idx, 1] += ey
        done = np.hypot(ex, ey) < eps
        pending[idx[done]] = False

    status[pending] = STATUS_DIVERGED
    return disp, status
