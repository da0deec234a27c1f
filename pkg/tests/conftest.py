from __future__ import annotations

import numpy as np
import pytest

from datkit.dataio import Frame
from datkit.geometry import BoundingBox
from datkit.rng import SplitMix64
from datkit.synth import SynthSpec, generate_sequence


def make_frame(pixels: np.ndarray, index: int = 0) -> Frame:
    return Frame(index=index, pixels=np.asarray(pixels, dtype=np.uint8))


def multiscale_texture(seed: int, side: int, octaves=((16, 0.5), (8, 0.3), (4, 0.2))):
    """Stacked random-cell octaves: trackable at every pyramid level."""
    rng = SplitMix64(seed)
    acc = np.zeros((side, side))
    for cell, weight in octaves:
        cells = -(-side // cell)
        layer = rng.uniforms(cells * cells).reshape(cells, cells)
        acc += weight * np.repeat(np.repeat(layer, cell, 0), cell, 1)[:side, :side]
    acc -= acc.min()
    acc /= acc.max()
    return np.minimum(acc * 256, 255).astype(np.uint8)


def textured_frame_pair(shift=(0, 0), size=(120, 160), patch=48, seed=3):
    """Two flat-background frames with the same texture patch, the second
    translated by (dx, dy)."""
    texture = multiscale_texture(seed, patch)
    h, w = size
    y0, x0 = (h - patch) // 2, (w - patch) // 2
    a = np.full(size, 128, dtype=np.uint8)
    a[y0 : y0 + patch, x0 : x0 + patch] = texture
    b = np.full(size, 128, dtype=np.uint8)
    dx, dy = shift
    b[y0 + dy : y0 + dy + patch, x0 + dx : x0 + dx + patch] = texture
    box = BoundingBox(x0, y0, patch, patch)
    return make_frame(a, 0), make_frame(b, 1), box


@pytest.fixture
def translation_sequence():
    """50 frames, constant-velocity target, no jitter, flat background."""
    spec = SynthSpec(
        n_frames=50,
        waypoints=((0, 60.0, 50.0, 40.0, 40.0), (49, 158.0, 99.0, 40.0, 40.0)),
        canvas=(240, 160),
        jitter_sigma=0.0,
        texture_seed=11,
    )
    return generate_sequence(spec, seed=5)


def occlusion_spec(n_frames=120, canvas=(240, 160), occlusions=((40, 70),), absences=()):
    return SynthSpec(
        n_frames=n_frames,
        waypoints=(
            (0, 50.0, 60.0, 36.0, 36.0),
            (n_frames - 1, 180.0, 100.0, 36.0, 36.0),
        ),
        canvas=canvas,
        jitter_sigma=0.0,
        texture_seed=2,
        occlusions=occlusions,
        absences=absences,
    )
