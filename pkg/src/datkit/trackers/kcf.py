"""Kernelized correlation filter tracker on raw intensity features.

Kernel ridge regression over all cyclic shifts of a search-window template
reduces, via circulant algebra, to elementwise operations in the Fourier
domain: training divides the transformed Gaussian label by the transformed
kernel autocorrelation, detection multiplies the transformed kernel
cross-correlation by the learned dual coefficients.

The window is rounded up to even dimensions and the regression target
peaks exactly at (H/2, W/2); that keeps the label circularly even, which
is what makes the dual solution exact (and the response map real).
Features are cosine-windowed, zero-mean intensities; the window geometry
is fixed at init (no scale adaptation; the engine's periodic detector
resets absorb scale drift).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..dataio import Frame
from ..geometry import BoundingBox
from .base import Tracker, TrackerUpdate, check_init_box, to_gray_f64
from .fourier import dft2d, idft2d


@dataclass(frozen=True)
class KcfParams:
    padding: float = 2.5  # window size as a ratio of the target box
    kernel_sigma: float = 0.5
    ridge: float = 1e-4
    interp_factor: float = 0.075
    response_fail_threshold: float = 0.15
    label_sigma_factor: float = 0.1  # Gaussian target bandwidth vs target size

    def __post_init__(self):
        if self.padding <= 1.0:
            raise ValueError("padding must exceed 1")
        if self.ridge <= 0.0:
            raise ValueError("ridge regularizer must be positive")
        if not 0.0 <= self.interp_factor <= 1.0:
            raise ValueError("interp_factor must be in [0, 1]")
        if self.kernel_sigma <= 0.0 or self.label_sigma_factor <= 0.0:
            raise ValueError("bandwidths must be positive")


def hann2d(h: int, w: int) -> np.ndarray:
    def hann1d(n: int) -> np.ndarray:
        if n == 1:
            return np.ones(1)
        i = np.arange(n, dtype=np.float64)
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * i / (n - 1)))

    return np.outer(hann1d(h), hann1d(w))


def gaussian_label(h: int, w: int, sigma: float) -> np.ndarray:
    """Regression target: unit-peak Gaussian centered at (h//2, w//2)."""
    dy = np.arange(h, dtype=np.float64) - h // 2
    dx = np.arange(w, dtype=np.float64) - w // 2
    return np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2.0 * sigma * sigma))


def gaussian_correlation(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian kernel evaluated against every cyclic shift of b.

    Output index t holds kappa(a, roll(b, t)); computed with one DFT pair
    instead of enumerating shifts.
    """
    cross = idft2d(dft2d(a) * np.conj(dft2d(b))).real
    dist2 = (np.sum(a * a) + np.sum(b * b) - 2.0 * cross) / a.size
    return np.exp(-np.maximum(dist2, 0.0) / (sigma * sigma))


def train_alpha(features: np.ndarray, y_hat: np.ndarray, params: KcfParams) -> np.ndarray:
    k_auto = gaussian_correlation(features, features, params.kernel_sigma)
    return y_hat / (dft2d(k_auto) + params.ridge)


def response_map(
    features: np.ndarray, template: np.ndarray, alpha_hat: np.ndarray, sigma: float
) -> np.ndarray:
    k_cross = gaussian_correlation(features, template, sigma)
    return idft2d(dft2d(k_cross) * alpha_hat).real


def extract_window(
    gray: np.ndarray, center: Tuple[float, float], size: Tuple[int, int]
) -> np.ndarray:
    """Crop a (h, w) window centered at (cx, cy), replicating the border."""
    h, w = size
    cx, cy = center
    rows = np.clip(int(round(cy)) - h // 2 + np.arange(h), 0, gray.shape[0] - 1)
    cols = np.clip(int(round(cx)) - w // 2 + np.arange(w), 0, gray.shape[1] - 1)
    return gray[np.ix_(rows, cols)]


class KcfTracker(Tracker):
    def __init__(self, params: Optional[KcfParams] = None):
        super().__init__()
        self.params = params or KcfParams()
        self._center: Tuple[float, float] = (0.0, 0.0)
        self._target_size: Tuple[float, float] = (0.0, 0.0)
        self._win: Tuple[int, int] = (0, 0)  # (h, w), fixed after init
        self._hann: Optional[np.ndarray] = None
        self._y_hat: Optional[np.ndarray] = None
        self._template: Optional[np.ndarray] = None
        self._alpha_hat: Optional[np.ndarray] = None
        self.last_response: Optional[np.ndarray] = None

    def _features(self, gray: np.ndarray) -> np.ndarray:
        patch = extract_window(gray, self._center, self._win)
        return (patch - patch.mean()) * self._hann

    def init(self, frame: Frame, box: BoundingBox) -> None:
        check_init_box(box, frame)
        p = self.params
        win_w = int(np.ceil(box.w * p.padding))
        win_h = int(np.ceil(box.h * p.padding))
        win_w += win_w % 2
        win_h += win_h % 2
        self._win = (win_h, win_w)
        self._center = (box.cx, box.cy)
        self._target_size = (box.w, box.h)
        self._hann = hann2d(win_h, win_w)
        label_sigma = np.sqrt(box.w * box.h) * p.label_sigma_factor
        self._y_hat = dft2d(gaussian_label(win_h, win_w, label_sigma))

        features = self._features(to_gray_f64(frame))
        self._template = features
        self._alpha_hat = train_alpha(features, self._y_hat, p)
        self._initialized = True

    def update(self, frame: Frame) -> TrackerUpdate:
        self._require_init()
        p = self.params
        gray = to_gray_f64(frame)

        features = self._features(gray)
        response = response_map(features, self._template, self._alpha_hat, p.kernel_sigma)
        self.last_response = response
        peak = float(response.max())
        if peak < p.response_fail_threshold:
            return TrackerUpdate(box=None, quality=peak, failed=True)

        py, px = np.unravel_index(int(response.argmax()), response.shape)
        dy = int(py) - self._win[0] // 2
        dx = int(px) - self._win[1] // 2
        cx, cy = self._center
        self._center = (cx + dx, cy + dy)

        w, h = self._target_size
        new_box = BoundingBox.from_center(self._center[0], self._center[1], w, h)

        if p.interp_factor > 0.0:
            fresh = self._features(gray)
            fresh_alpha = train_alpha(fresh, self._y_hat, p)
            g = p.interp_factor
            self._template = (1.0 - g) * self._template + g * fresh
            self._alpha_hat = (1.0 - g) * self._alpha_hat + g * fresh_alpha

        return TrackerUpdate(box=new_box, quality=peak, failed=False)
