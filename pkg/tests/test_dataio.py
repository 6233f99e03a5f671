import io
import json

import numpy as np
import pytest

from cald import DataFormatError, DatasetManifest, parse_labels, parse_predictions
from cald.dataio import read_selection, write_score_report, write_selection
from cald.consistency import ImageInformation
from cald.pipeline import CycleRecord, SelectionRow


@pytest.fixture
def manifest():
    return DatasetManifest(
        class_names=["cat", "dog"],
        image_ids=["img_a", "img_b", "img_c"],
        augmentations={"F": {}, "D": {"ratio": 0.8}},
    )


def pred_line(image_id, aug="original", width=100, height=100, detections=None):
    return json.dumps(
        {
            "image_id": image_id,
            "augmentation": aug,
            "width": width,
            "height": height,
            "detections": detections if detections is not None else [],
        }
    )


def det(box, **scores):
    return {"box": list(box), "scores": scores}


class TestManifest:
    def test_validation(self):
        with pytest.raises(DataFormatError):
            DatasetManifest(class_names=[], image_ids=[])
        with pytest.raises(DataFormatError):
            DatasetManifest(class_names=["a", "a"], image_ids=[])
        with pytest.raises(DataFormatError):
            DatasetManifest(class_names=["a"], image_ids=["x", "x"])
        with pytest.raises(DataFormatError):
            DatasetManifest(class_names=["a"], image_ids=[], augmentations={"original": {}})

    def test_round_trip(self, manifest, tmp_path):
        path = tmp_path / "manifest.json"
        manifest.save(path)
        loaded = DatasetManifest.load(path)
        assert loaded.class_names == manifest.class_names
        assert loaded.image_ids == manifest.image_ids
        assert loaded.augmentations == manifest.augmentations

    def test_augmentation_specs_use_params(self, manifest):
        specs = manifest.augmentation_specs(["D"])
        assert specs[0].ratio == 0.8


class TestParsePredictions:
    def test_empty_stream(self, manifest):
        assert parse_predictions([], manifest) == {}

    def test_single_image_original_only(self, manifest):
        out = parse_predictions(
            [pred_line("img_a", detections=[det((1, 2, 3, 4), cat=0.9)])], manifest
        )
        assert list(out) == ["img_a"]
        assert list(out["img_a"].by_aug) == ["original"]
        record = out["img_a"].original[0]
        np.testing.assert_allclose(record.scores, [0.9, 0.0])

    def test_scores_densified_against_manifest_order(self, manifest):
        out = parse_predictions(
            [pred_line("img_a", detections=[det((1, 2, 3, 4), dog=0.4)])], manifest
        )
        np.testing.assert_allclose(out["img_a"].original[0].scores, [0.0, 0.4])

    def test_confidence_out_of_bounds_reports_line(self, manifest):
        lines = [
            pred_line("img_a"),
            pred_line("img_b", detections=[det((1, 2, 3, 4), cat=1.2)]),
        ]
        with pytest.raises(DataFormatError, match="line 2"):
            parse_predictions(lines, manifest)

    def test_malformed_json_reports_line(self, manifest):
        with pytest.raises(DataFormatError, match="line 1"):
            parse_predictions(["{not json"], manifest)

    def test_unknown_tag_and_class_rejected(self, manifest):
        with pytest.raises(DataFormatError, match="vocabulary"):
            parse_predictions([pred_line("img_a", aug="R")], manifest)
        with pytest.raises(DataFormatError, match="unknown class"):
            parse_predictions(
                [pred_line("img_a", detections=[det((1, 2, 3, 4), bird=0.5)])], manifest
            )

    def test_unknown_image_rejected(self, manifest):
        with pytest.raises(DataFormatError, match="not in manifest"):
            parse_predictions([pred_line("img_zzz")], manifest)

    def test_duplicate_record_rejected(self, manifest):
        lines = [pred_line("img_a"), pred_line("img_a")]
        with pytest.raises(DataFormatError, match="duplicate"):
            parse_predictions(lines, manifest)

    def test_missing_original_rejected(self, manifest):
        with pytest.raises(DataFormatError, match="original"):
            parse_predictions([pred_line("img_a", aug="F")], manifest)

    def test_box_outside_frame_rejected(self, manifest):
        with pytest.raises(DataFormatError, match="frame"):
            parse_predictions(
                [pred_line("img_a", detections=[det((90, 0, 110, 10), cat=0.5)])], manifest
            )

    def test_degenerate_box_rejected(self, manifest):
        with pytest.raises(DataFormatError, match="line 1"):
            parse_predictions(
                [pred_line("img_a", detections=[det((5, 5, 5, 10), cat=0.5)])], manifest
            )

    def test_blank_lines_skipped(self, manifest):
        out = parse_predictions(["", pred_line("img_a"), "   "], manifest)
        assert list(out) == ["img_a"]

    def test_line_permutation_of_distinct_images(self, manifest):
        lines = [
            pred_line("img_a", detections=[det((1, 2, 3, 4), cat=0.9)]),
            pred_line("img_a", aug="F", detections=[det((5, 2, 7, 4), dog=0.8)]),
            pred_line("img_b", detections=[]),
        ]
        a = parse_predictions(lines, manifest)
        b = parse_predictions([lines[2], lines[1], lines[0]], manifest)
        assert set(a) == set(b)
        for image_id in a:
            assert set(a[image_id].by_aug) == set(b[image_id].by_aug)
            for tag in a[image_id].by_aug:
                lhs, rhs = a[image_id].by_aug[tag], b[image_id].by_aug[tag]
                assert len(lhs) == len(rhs)
                for x, y in zip(lhs, rhs):
                    assert x.box == y.box
                    np.testing.assert_array_equal(x.scores, y.scores)


class TestParseLabels:
    def test_empty(self, manifest):
        assert parse_labels([], manifest) == {}

    def test_counts(self, manifest):
        line = json.dumps(
            {"image_id": "img_a", "objects": [{"class": "cat"}, {"class": "cat"}, {"class": "dog"}]}
        )
        out = parse_labels([line], manifest)
        np.testing.assert_array_equal(out["img_a"], [2, 1])

    def test_unknown_class(self, manifest):
        line = json.dumps({"image_id": "img_a", "objects": [{"class": "bird"}]})
        with pytest.raises(DataFormatError, match="unknown class"):
            parse_labels([line], manifest)

    def test_duplicate_image(self, manifest):
        line = json.dumps({"image_id": "img_a", "objects": []})
        with pytest.raises(DataFormatError, match="duplicate"):
            parse_labels([line, line], manifest)


def sample_records():
    return [
        CycleRecord(
            cycle=1,
            initial=[
                SelectionRow("img_b", metric=0.12, js=0.4),
                SelectionRow("img_a", metric=0.25, js=0.7),
            ],
            final=[SelectionRow("img_a", metric=0.25, js=0.7)],
        ),
        CycleRecord(
            cycle=2,
            initial=[SelectionRow("img_c", metric=0.05, js=0.1)],
            final=[SelectionRow("img_c", metric=0.05, js=0.1)],
        ),
    ]


class TestSelectionReport:
    def test_round_trip_exact(self):
        buf = io.StringIO()
        write_selection(sample_records(), buf)
        parsed = read_selection(buf.getvalue().splitlines())
        assert parsed == sample_records()

    def test_empty_selection_is_header_only(self):
        buf = io.StringIO()
        write_selection([], buf)
        lines = buf.getvalue().splitlines()
        assert len(lines) == 1
        assert json.loads(lines[0])["format"] == "cald-selection"

    def test_reruns_are_byte_identical(self):
        a, b = io.StringIO(), io.StringIO()
        write_selection(sample_records(), a)
        write_selection(sample_records(), b)
        assert a.getvalue() == b.getvalue()

    def test_ranks_are_contiguous(self):
        buf = io.StringIO()
        write_selection(sample_records(), buf)
        rows = [json.loads(line) for line in buf.getvalue().splitlines()[1:]]
        by_stage = {}
        for row in rows:
            by_stage.setdefault((row["cycle"], row["stage"]), []).append(row["rank"])
        for ranks in by_stage.values():
            assert ranks == list(range(1, len(ranks) + 1))

    def test_rejects_non_report(self):
        with pytest.raises(DataFormatError):
            read_selection(['{"format": "something-else"}'])
        with pytest.raises(DataFormatError):
            read_selection([])


class TestScoreReport:
    def test_sorted_ascending(self):
        infos = [
            ImageInformation("b", 0.5, (), False),
            ImageInformation("a", 0.1, (), False),
            ImageInformation("c", 0.1, (), True),
        ]
        buf = io.StringIO()
        write_score_report(infos, buf)
        rows = [json.loads(line) for line in buf.getvalue().splitlines()]
        assert [r["image_id"] for r in rows] == ["a", "c", "b"]
        assert rows[1]["flagged"] is True
