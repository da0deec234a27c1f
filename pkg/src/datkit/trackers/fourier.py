"""2-D DFT pair used by the correlation tracker.

Forward transform is unnormalized, inverse carries the 1/(N*M) factor, so
idft2d(dft2d(x)) == x.  Backed by numpy's FFT, which is exact for arbitrary
(non power-of-two) sizes; the test suite pins the contract against a naive
direct-summation transform.
"""

from __future__ import annotations

import numpy as np


def dft2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D array, got shape {x.shape}")
    return np.fft.fft2(x)


def idft2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D array, got shape {x.shape}")
    return np.fft.ifft2(x)
