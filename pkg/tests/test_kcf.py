import numpy as np
import pytest

from datkit.geometry import BoundingBox, Category
from datkit.rng import SplitMix64
from datkit.synth import generate_sequence
from datkit.trackers import KcfParams, KcfTracker
from datkit.trackers.base import TrackerNotInitialized
from datkit.trackers.kcf import (
    gaussian_correlation,
    gaussian_label,
    hann2d,
    response_map,
    train_alpha,
)
from datkit.trackers.fourier import dft2d, idft2d

from conftest import make_frame, occlusion_spec, textured_frame_pair
from oracles import krr_response_oracle


def features_of(patch, hann):
    x = patch.astype(np.float64) / 255.0
    x = x - x.mean()
    return x * hann


def test_update_before_init_raises():
    tracker = KcfTracker()
    with pytest.raises(TrackerNotInitialized):
        tracker.update(make_frame(np.zeros((10, 10))))


def test_window_rounded_up_to_even():
    frame, _, _ = textured_frame_pair()
    tracker = KcfTracker()
    tracker.init(frame, BoundingBox(40, 40, 13, 17))  # 13*2.5=32.5, 17*2.5=42.5
    h, w = tracker._win
    assert h % 2 == 0 and w % 2 == 0
    assert w >= 13 * 2.5 and h >= 17 * 2.5


def test_update_on_init_frame_is_stationary():
    frame, _, box = textured_frame_pair()
    tracker = KcfTracker()
    tracker.init(frame, box)
    update = tracker.update(frame)
    assert not update.failed
    assert update.box.cx == box.cx
    assert update.box.cy == box.cy
    assert update.quality > 0.5  # autocorrelation peak, ~1 up to regularization
    peak = np.unravel_index(tracker.last_response.argmax(), tracker.last_response.shape)
    assert peak == (tracker._win[0] // 2, tracker._win[1] // 2)


def test_response_is_real_valued():
    rng = SplitMix64(8)
    h = w = 12
    hann = hann2d(h, w)
    x = features_of((rng.uniforms(h * w) * 255).reshape(h, w), hann)
    p = KcfParams()
    y_hat = dft2d(gaussian_label(h, w, 2.0))
    alpha_hat = train_alpha(x, y_hat, p)
    z = features_of((rng.uniforms(h * w) * 255).reshape(h, w), hann)
    k_cross = gaussian_correlation(z, x, p.kernel_sigma)
    full = idft2d(dft2d(k_cross) * alpha_hat)
    assert np.abs(full.imag).max() <= 1e-9


def test_circular_shift_moves_argmax():
    rng = SplitMix64(21)
    h = w = 16
    hann = hann2d(h, w)
    p = KcfParams()
    x = features_of((rng.uniforms(h * w) * 255).reshape(h, w), hann)
    y_hat = dft2d(gaussian_label(h, w, 1.5))
    alpha_hat = train_alpha(x, y_hat, p)
    for shift in [(4, 0), (0, 5), (3, 2), (-2, 4)]:
        z = np.roll(x, shift, axis=(0, 1))
        response = response_map(z, x, alpha_hat, p.kernel_sigma)
        peak = np.unravel_index(response.argmax(), response.shape)
        expected = ((h // 2 + shift[0]) % h, (w // 2 + shift[1]) % w)
        assert peak == expected


def test_matches_spatial_krr_oracle():
    p = KcfParams()
    h = w = 8
    hann = hann2d(h, w)
    label = gaussian_label(h, w, 1.0)
    y_hat = dft2d(label)
    rng = SplitMix64(77)
    for _ in range(5):
        x = features_of((rng.uniforms(h * w) * 255).reshape(h, w), hann)
        z = features_of((rng.uniforms(h * w) * 255).reshape(h, w), hann)
        alpha_hat = train_alpha(x, y_hat, p)
        fast = response_map(z, x, alpha_hat, p.kernel_sigma)
        slow = krr_response_oracle(x, z, label, p.kernel_sigma, p.ridge)
        assert np.abs(fast - slow).max() <= 1e-6


def test_tracks_translation(translation_sequence):
    seq = translation_sequence
    tracker = KcfTracker()
    frames = seq.iter_frames()
    tracker.init(next(frames), seq.gt_box(0, Category.LEFT))
    for frame in frames:
        update = tracker.update(frame)
        gt = seq.gt_box(frame.index, Category.LEFT)
        assert not update.failed
        # integer-lag localization: within a pixel of the moving center
        assert abs(update.box.cx - gt.cx) <= 1.5
        assert abs(update.box.cy - gt.cy) <= 1.5


def test_zero_interp_factor_freezes_model():
    frame, _, box = textured_frame_pair()
    tracker = KcfTracker(KcfParams(interp_factor=0.0))
    tracker.init(frame, box)
    first = tracker.update(frame)
    template = tracker._template.copy()
    alpha = tracker._alpha_hat.copy()
    for _ in range(3):
        update = tracker.update(frame)
        assert update.box == first.box
        assert update.quality == pytest.approx(first.quality, abs=1e-12)
    assert np.array_equal(tracker._template, template)
    assert np.array_equal(tracker._alpha_hat, alpha)


def test_occlusion_drops_response_below_threshold():
    seq = generate_sequence(occlusion_spec(occlusions=((30, 60),)), seed=4)
    tracker = KcfTracker()
    frames = seq.iter_frames()
    tracker.init(next(frames), seq.gt_box(0, Category.LEFT))
    failed = False
    for frame in frames:
        if frame.index >= 45:
            break
        update = tracker.update(frame)
        if 30 <= frame.index and update.failed:
            failed = True
            assert update.quality < tracker.params.response_fail_threshold
            break
    assert failed


def test_params_validation():
    with pytest.raises(ValueError):
        KcfParams(padding=0.9)
    with pytest.raises(ValueError):
        KcfParams(ridge=0.0)
    with pytest.raises(ValueError):
        KcfParams(interp_factor=1.5)
