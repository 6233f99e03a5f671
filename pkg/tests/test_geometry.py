import math

import numpy as np
import pytest

from cald import (
    AugKind,
    AugmentationSpec,
    BoundingBox,
    ConfigError,
    ImageSize,
    MappingDegenerateError,
    PredictionRecord,
    iou,
    map_box,
    map_predictions,
)
from oracles import grid_iou


def box(x0, y0, x1, y1):
    return BoundingBox(x0, y0, x1, y1)


class TestBoundingBox:
    def test_rejects_inverted_corners(self):
        with pytest.raises(ValueError):
            BoundingBox(10, 0, 5, 10)
        with pytest.raises(ValueError):
            BoundingBox(0, 10, 10, 10)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, math.inf, 10)
        with pytest.raises(ValueError):
            BoundingBox(math.nan, 0, 10, 10)

    def test_size_invariants(self):
        with pytest.raises(ValueError):
            ImageSize(0, 10)
        with pytest.raises(ValueError):
            ImageSize(10, -1)


class TestAugmentationSpec:
    def test_param_validation(self):
        with pytest.raises(ConfigError):
            AugmentationSpec.downsize(0.0)
        with pytest.raises(ConfigError):
            AugmentationSpec.rotation(200.0)
        with pytest.raises(ConfigError):
            AugmentationSpec.from_tag("Z")
        with pytest.raises(ConfigError):
            AugmentationSpec.from_tag("D", {"bogus": 1})

    def test_from_tag_applies_params(self):
        spec = AugmentationSpec.from_tag("D", {"ratio": 0.5})
        assert spec.kind == AugKind.DOWNSIZE and spec.ratio == 0.5
        assert AugmentationSpec.from_tag("original").tag == "original"


class TestIoU:
    def test_identity_is_one(self):
        b = box(3.5, 2.0, 17.25, 9.0)
        assert iou(b, b) == 1.0

    def test_disjoint_is_zero(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_known_overlap(self):
        # frozen from the grid-counting oracle: inter 50 cells, union 150
        a, b = box(0, 0, 10, 10), box(5, 0, 15, 10)
        assert grid_iou((0, 0, 10, 10), (5, 0, 15, 10)) == pytest.approx(1 / 3, abs=0)
        assert iou(a, b) == 1 / 3

    def test_matches_grid_oracle_exactly(self, rng):
        for _ in range(1000):
            ax = np.sort(rng.integers(0, 25, size=2))
            ay = np.sort(rng.integers(0, 25, size=2))
            bx = np.sort(rng.integers(0, 25, size=2))
            by = np.sort(rng.integers(0, 25, size=2))
            a = (ax[0], ay[0], ax[1] + 1, ay[1] + 1)
            b = (bx[0], by[0], bx[1] + 1, by[1] + 1)
            got = iou(box(*a), box(*b))
            assert got == grid_iou(a, b)

    def test_symmetric_and_bounded(self, rng):
        for _ in range(300):
            vals = rng.uniform(0, 100, size=8)
            a = box(min(vals[0], vals[1]), min(vals[2], vals[3]),
                    max(vals[0], vals[1]) + 0.1, max(vals[2], vals[3]) + 0.1)
            b = box(min(vals[4], vals[5]), min(vals[6], vals[7]),
                    max(vals[4], vals[5]) + 0.1, max(vals[6], vals[7]) + 0.1)
            v = iou(a, b)
            assert iou(b, a) == v
            assert 0.0 <= v <= 1.0

    def test_one_only_for_identical(self):
        a = box(0, 0, 10, 10)
        assert iou(a, box(0, 0, 10, 10.5)) < 1.0
        assert iou(a, box(0.5, 0, 10, 10)) < 1.0


class TestMapBox:
    SIZE = ImageSize(100, 100)

    def test_flip_formula(self):
        flipped = map_box(box(10, 20, 30, 40), AugmentationSpec.horizontal_flip(), self.SIZE)
        assert flipped == box(70, 20, 90, 40)

    def test_flip_is_involution(self, rng):
        # dyadic-grid coordinates keep width-minus-x exact, so the round
        # trip must reproduce the input bit for bit
        flip = AugmentationSpec.horizontal_flip()
        for _ in range(200):
            x = np.sort(rng.integers(0, 25600, size=2)) / 256.0
            y = np.sort(rng.integers(0, 25600, size=2)) / 256.0
            b = box(x[0], y[0], x[1] + 0.25, y[1] + 0.25)
            assert map_box(map_box(b, flip, self.SIZE), flip, self.SIZE) == b

    def test_downsize_scales(self):
        scaled = map_box(box(10, 20, 30, 40), AugmentationSpec.downsize(0.5), self.SIZE)
        assert scaled == box(5, 10, 15, 20)

    def test_downsize_round_trip(self, rng):
        for ratio in (0.8, 0.5, 0.33):
            down = AugmentationSpec.downsize(ratio)
            up = AugmentationSpec.downsize(1.0 / ratio)
            for _ in range(100):
                x = np.sort(rng.uniform(0, 99, size=2))
                y = np.sort(rng.uniform(0, 99, size=2))
                b = box(x[0], y[0], x[1] + 1, y[1] + 1)
                back = map_box(map_box(b, down, self.SIZE), up, self.SIZE)
                for got, want in zip(
                    (back.x_min, back.y_min, back.x_max, back.y_max),
                    (b.x_min, b.y_min, b.x_max, b.y_max),
                ):
                    assert got == pytest.approx(want, abs=1e-9)

    def test_rotation_zero_is_identity(self):
        b = box(10, 20, 30, 40)
        assert map_box(b, AugmentationSpec.rotation(0.0), self.SIZE) == b

    def test_rotation_round_trip_contains_original(self, rng):
        # boxes kept central in a large frame so clipping never bites
        size = ImageSize(1000, 1000)
        for _ in range(200):
            angle = float(rng.uniform(-30, 30))
            x = np.sort(rng.uniform(320, 680, size=2))
            y = np.sort(rng.uniform(320, 680, size=2))
            b = box(x[0], y[0], x[1] + 1, y[1] + 1)
            there = map_box(b, AugmentationSpec.rotation(angle), size)
            back = map_box(there, AugmentationSpec.rotation(-angle), size)
            assert back.x_min <= b.x_min + 1e-9
            assert back.y_min <= b.y_min + 1e-9
            assert back.x_max >= b.x_max - 1e-9
            assert back.y_max >= b.y_max - 1e-9

    def test_photometric_kinds_are_identity(self):
        b = box(1, 2, 3, 4)
        for spec in (
            AugmentationSpec.original(),
            AugmentationSpec.cutout(),
            AugmentationSpec.gaussian_noise(),
            AugmentationSpec.salt_pepper(),
        ):
            assert map_box(b, spec, self.SIZE) is b

    def test_degenerate_rotation_raises(self):
        # a box in the frame corner swings fully outside under 45 degrees
        corner = box(0.0, 0.0, 2.0, 2.0)
        with pytest.raises(MappingDegenerateError):
            map_box(corner, AugmentationSpec.rotation(45.0), self.SIZE)


class TestMapPredictions:
    SIZE = ImageSize(100, 100)

    def record(self, b, scores=(0.9, 0.1)):
        return PredictionRecord(box=b, scores=np.array(scores))

    def test_empty_input(self):
        assert map_predictions([], AugmentationSpec.horizontal_flip(), self.SIZE) == []

    def test_original_is_identity(self):
        rec = self.record(box(10, 20, 30, 40))
        out = map_predictions([rec], AugmentationSpec.original(), self.SIZE)
        assert out[0].box == rec.box
        np.testing.assert_array_equal(out[0].scores, rec.scores)

    def test_flip_moves_box_keeps_scores(self):
        rec = self.record(box(10, 20, 30, 40))
        out = map_predictions([rec], AugmentationSpec.horizontal_flip(), self.SIZE)
        assert out[0].box == box(70, 20, 90, 40)
        np.testing.assert_array_equal(out[0].scores, rec.scores)
        assert out[0].scores is not rec.scores

    def test_degenerate_records_are_omitted(self):
        good = self.record(box(40, 40, 60, 60))
        doomed = self.record(box(0.0, 0.0, 2.0, 2.0))
        out = map_predictions([good, doomed], AugmentationSpec.rotation(45.0), self.SIZE)
        assert len(out) == 1
        assert out[0].box == map_box(good.box, AugmentationSpec.rotation(45.0), self.SIZE)
