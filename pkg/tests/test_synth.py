import numpy as np
import pytest

from datkit.dataio import encode_pixmap
from datkit.geometry import Category
from datkit.synth import SynthSpec, SynthSpecError, generate_sequence

from conftest import occlusion_spec


def simple_spec(**overrides):
    fields = dict(
        n_frames=20,
        waypoints=((0, 50.0, 40.0, 24.0, 24.0), (19, 50.0, 40.0, 24.0, 24.0)),
        canvas=(160, 120),
        texture_seed=1,
    )
    fields.update(overrides)
    return SynthSpec(**fields)


class TestSpecValidation:
    def test_waypoints_must_span_sequence(self):
        with pytest.raises(SynthSpecError, match="frame 0"):
            simple_spec(waypoints=((5, 50, 40, 24, 24), (19, 50, 40, 24, 24)))
        with pytest.raises(SynthSpecError, match="frame 19"):
            simple_spec(waypoints=((0, 50, 40, 24, 24), (10, 50, 40, 24, 24)))

    def test_intervals_must_be_disjoint(self):
        with pytest.raises(SynthSpecError, match="overlap"):
            simple_spec(occlusions=((2, 8),), absences=((5, 10),))
        with pytest.raises(SynthSpecError, match="overlap"):
            simple_spec(occlusions=((2, 8), (6, 12)))

    def test_interval_bounds(self):
        with pytest.raises(SynthSpecError, match="outside"):
            simple_spec(absences=((10, 25),))

    def test_background_kinds(self):
        simple_spec(background="gradient")
        simple_spec(background=("noise", 4.0))
        with pytest.raises(SynthSpecError, match="background"):
            simple_spec(background="plaid")

    def test_json_round_trip(self):
        text = """
        {"n_frames": 20,
         "waypoints": [[0, 50, 40, 24, 24], [19, 50, 40, 24, 24]],
         "canvas": [160, 120],
         "background": {"noise": 3.0},
         "occlusions": [[2, 5]],
         "category": "R"}
        """
        spec = SynthSpec.from_json(text)
        assert spec.background == ("noise", 3.0)
        assert spec.category is Category.RIGHT
        assert spec.occlusions == ((2, 5),)


class TestGeneration:
    def test_zero_velocity_gives_constant_ground_truth(self):
        seq = generate_sequence(simple_spec(), seed=3)
        boxes = {(r.box.x, r.box.y, r.box.w, r.box.h) for r in seq.annotations}
        assert len(boxes) == 1
        assert len(seq.annotations) == 20

    def test_deterministic_for_same_spec_and_seed(self):
        spec = simple_spec(jitter_sigma=1.5, background=("noise", 5.0))
        a = generate_sequence(spec, seed=9)
        b = generate_sequence(spec, seed=9)
        assert [encode_pixmap(f) for f in a.iter_frames()] == [
            encode_pixmap(f) for f in b.iter_frames()
        ]
        assert a.annotations == b.annotations

    def test_different_seed_changes_jittered_output(self):
        spec = simple_spec(jitter_sigma=1.5)
        a = generate_sequence(spec, seed=1)
        b = generate_sequence(spec, seed=2)
        assert a.annotations != b.annotations

    def test_centers_follow_interpolant_exactly_without_jitter(self):
        spec = SynthSpec(
            n_frames=11,
            waypoints=((0, 30.0, 30.0, 20.0, 20.0), (10, 80.0, 55.0, 20.0, 20.0)),
            canvas=(160, 120),
        )
        seq = generate_sequence(spec, seed=0)
        for rec in seq.annotations:
            t = rec.frame_index / 10.0
            assert rec.box.cx == pytest.approx(30.0 + 50.0 * t, abs=1e-9)
            assert rec.box.cy == pytest.approx(30.0 + 25.0 * t, abs=1e-9)

    def test_occlusion_overdraws_target_but_keeps_ground_truth(self):
        seq = generate_sequence(occlusion_spec(occlusions=((10, 20),)), seed=1)
        assert len(seq.annotations) == 120
        occluded = seq.frame(15)
        visible = seq.frame(5)
        box = seq.gt_box(15, Category.LEFT)
        ys = slice(int(box.y), int(box.y2))
        xs = slice(int(box.x), int(box.x2))
        assert occluded.pixels[ys, xs].std() < 1.0  # flat occluder
        assert visible.pixels[
            int(seq.gt_box(5, Category.LEFT).y) : int(seq.gt_box(5, Category.LEFT).y2),
            int(seq.gt_box(5, Category.LEFT).x) : int(seq.gt_box(5, Category.LEFT).x2),
        ].std() > 30.0

    def test_absences_drop_annotations(self):
        seq = generate_sequence(occlusion_spec(absences=((30, 50),), occlusions=()), seed=1)
        assert len(seq.annotations) == 120 - 20
        assert seq.gt_box(35, Category.LEFT) is None
        assert seq.gt_box(29, Category.LEFT) is not None

    def test_target_leaves_canvas_names_frame(self):
        spec = SynthSpec(
            n_frames=10,
            waypoints=((0, 50.0, 40.0, 24.0, 24.0), (9, 200.0, 40.0, 24.0, 24.0)),
            canvas=(160, 120),
        )
        with pytest.raises(SynthSpecError, match="frame"):
            generate_sequence(spec, seed=0)

    @pytest.mark.parametrize("background", ["flat", "gradient", ("noise", 4.0)])
    def test_target_texture_beats_background_gradient(self, background):
        seq = generate_sequence(simple_spec(background=background), seed=2)
        frame = seq.frame(0).pixels.astype(np.float64)
        gx = np.abs(np.diff(frame, axis=1))
        box = seq.gt_box(0, Category.LEFT)
        inner = gx[int(box.y) + 2 : int(box.y2) - 2, int(box.x) + 2 : int(box.x2) - 2]
        outside = gx[:, : int(box.x) - 8]
        assert inner.mean() > outside.mean() + 8.0

    def test_frames_render_lazily_and_repeatably(self):
        spec = simple_spec(background=("noise", 2.0), jitter_sigma=0.5)
        seq = generate_sequence(spec, seed=4)
        once = seq.frame(7).pixels
        again = seq.frame(7).pixels
        assert np.array_equal(once, again)
