"""File formats: dataset manifest, prediction/label streams, selection reports.

Everything on disk is plain text. Predictions and labels are line-delimited
JSON so huge dumps can stream; the manifest is a single JSON document
naming the classes, the image universe, and the augmentation vocabulary
with its parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .errors import DataFormatError
from .geometry import AugmentationSpec, BoundingBox, ImageSize, PredictionRecord

SELECTION_FORMAT = "cald-selection"
SELECTION_VERSION = 1

# Default augmentation vocabulary for manifests that do not declare one.
DEFAULT_AUGMENTATIONS = {"F": {}, "C": {}, "D": {"ratio": 0.8}, "R": {"angle": 5.0}}


@dataclass
class DatasetManifest:
    """Names the classes, the image universe, and the augmentation vocabulary."""

    class_names: list[str]
    image_ids: list[str]
    augmentations: dict[str, dict] = field(default_factory=lambda: dict(DEFAULT_AUGMENTATIONS))

    def __post_init__(self):
        if not self.class_names:
            raise DataFormatError("manifest must name at least one class")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataFormatError("manifest class names must be unique")
        if len(set(self.image_ids)) != len(self.image_ids):
            raise DataFormatError("manifest image ids must be unique")
        if "original" in self.augmentations:
            raise DataFormatError('"original" is implicit and not an augmentation tag')
        self._class_index = {name: i for i, name in enumerate(self.class_names)}
        self._image_set = set(self.image_ids)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def class_index(self, name: str) -> int:
        return self._class_index[name]

    def has_image(self, image_id: str) -> bool:
        return image_id in self._image_set

    def augmentation_specs(self, tags: Iterable[str] | None = None) -> list[AugmentationSpec]:
        """Specs for the given tags (default: all declared), with manifest params."""
        if tags is None:
            tags = list(self.augmentations)
        return [AugmentationSpec.from_tag(t, self.augmentations.get(t)) for t in tags]

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetManifest":
        try:
            class_names = list(data["class_names"])
            image_ids = list(data["image_ids"])
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"manifest missing required field: {exc}") from None
        augmentations = data.get("augmentations")
        if augmentations is None:
            augmentations = dict(DEFAULT_AUGMENTATIONS)
        return cls(class_names=class_names, image_ids=image_ids, augmentations=augmentations)

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"manifest is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "image_ids": list(self.image_ids),
            "augmentations": {t: dict(p) for t, p in self.augmentations.items()},
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass
class ImagePredictions:
    """All parsed detections for one image, keyed by augmentation tag."""

    image_id: str
    size: ImageSize
    by_aug: dict[str, list[PredictionRecord]]
    aug_sizes: dict[str, ImageSize]

    @property
    def original(self) -> list[PredictionRecord]:
        return self.by_aug["original"]


def _parse_json_line(line: str, lineno: int) -> dict:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON ({exc.msg})", line=lineno) from None
    if not isinstance(data, dict):
        raise DataFormatError("record must be a JSON object", line=lineno)
    return data


def _require(data: dict, key: str, lineno: int):
    if key not in data:
        raise DataFormatError(f"missing field {key!r}", line=lineno)
    return data[key]


def _densify_scores(
    scores: Mapping[str, float], manifest: DatasetManifest, lineno: int
) -> np.ndarray:
    dense = np.zeros(manifest.num_classes, dtype=np.float64)
    for name, value in scores.items():
        if name not in manifest._class_index:
            raise DataFormatError(f"unknown class name {name!r}", line=lineno)
        if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
            raise DataFormatError(
                f"confidence for class {name!r} must be in [0, 1], got {value!r}", line=lineno
            )
        dense[manifest.class_index(name)] = float(value)
    return dense


def _parse_detection(det: dict, size: ImageSize, manifest: DatasetManifest, lineno: int) -> PredictionRecord:
    if not isinstance(det, dict):
        raise DataFormatError("detection must be a JSON object", line=lineno)
    box = _require(det, "box", lineno)
    if not (isinstance(box, list) and len(box) == 4):
        raise DataFormatError(f"box must be a 4-element list, got {box!r}", line=lineno)
    scores = _require(det, "scores", lineno)
    if not isinstance(scores, dict):
        raise DataFormatError("scores must be a class-name to confidence map", line=lineno)
    try:
        bbox_args = [float(v) for v in box]
    except (TypeError, ValueError):
        raise DataFormatError(f"box coordinates must be numbers, got {box!r}", line=lineno) from None
    try:
        bbox = BoundingBox(*bbox_args)
    except ValueError as exc:
        raise DataFormatError(str(exc), line=lineno) from None
    if bbox.x_min < 0 or bbox.y_min < 0 or bbox.x_max > size.width or bbox.y_max > size.height:
        raise DataFormatError(
            f"box {box} exceeds the {size.width}x{size.height} frame", line=lineno
        )
    return PredictionRecord(box=bbox, scores=_densify_scores(scores, manifest, lineno))


def parse_predictions(
    lines: Iterable[str], manifest: DatasetManifest
) -> dict[str, ImagePredictions]:
    """Parse a prediction stream into per-image, per-augmentation records.

    One JSON object per line: {image_id, augmentation, width, height,
    detections: [{box: [x0, y0, x1, y1], scores: {class: conf}}]}. File
    order is preserved; every image must carry an "original" record;
    duplicate (image, augmentation) pairs and unknown tags or classes are
    rejected with the offending line number.
    """
    vocabulary = {"original"} | set(manifest.augmentations)
    out: dict[str, ImagePredictions] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        data = _parse_json_line(line, lineno)
        image_id = _require(data, "image_id", lineno)
        if not isinstance(image_id, str):
            raise DataFormatError("image_id must be a string", line=lineno)
        if not manifest.has_image(image_id):
            raise DataFormatError(f"image id {image_id!r} not in manifest", line=lineno)
        tag = _require(data, "augmentation", lineno)
        if tag not in vocabulary:
            raise DataFormatError(
                f"augmentation tag {tag!r} not in vocabulary {sorted(vocabulary)}", line=lineno
            )
        width = _require(data, "width", lineno)
        height = _require(data, "height", lineno)
        if not (isinstance(width, int) and isinstance(height, int)):
            raise DataFormatError("width and height must be integers", line=lineno)
        try:
            size = ImageSize(width, height)
        except ValueError as exc:
            raise DataFormatError(str(exc), line=lineno) from None
        detections = _require(data, "detections", lineno)
        if not isinstance(detections, list):
            raise DataFormatError("detections must be a list", line=lineno)
        records = [_parse_detection(d, size, manifest, lineno) for d in detections]
        entry = out.get(image_id)
        if entry is None:
            entry = ImagePredictions(image_id=image_id, size=size, by_aug={}, aug_sizes={})
            out[image_id] = entry
        if tag in entry.by_aug:
            raise DataFormatError(
                f"duplicate record for image {image_id!r} augmentation {tag!r}", line=lineno
            )
        entry.by_aug[tag] = records
        entry.aug_sizes[tag] = size
        if tag == "original":
            entry.size = size
    missing = [i for i, entry in out.items() if "original" not in entry.by_aug]
    if missing:
        raise DataFormatError(
            f"missing \"original\" record for image(s): {', '.join(sorted(missing))}"
        )
    return out


def parse_labels(lines: Iterable[str], manifest: DatasetManifest) -> dict[str, np.ndarray]:
    """Parse a label stream into per-image per-class instance counts.

    One JSON object per line: {image_id, objects: [{class: name}, ...]}.
    """
    out: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        data = _parse_json_line(line, lineno)
        image_id = _require(data, "image_id", lineno)
        if not isinstance(image_id, str):
            raise DataFormatError("image_id must be a string", line=lineno)
        if not manifest.has_image(image_id):
            raise DataFormatError(f"image id {image_id!r} not in manifest", line=lineno)
        if image_id in out:
            raise DataFormatError(f"duplicate labels for image {image_id!r}", line=lineno)
        objects = _require(data, "objects", lineno)
        if not isinstance(objects, list):
            raise DataFormatError("objects must be a list", line=lineno)
        counts = np.zeros(manifest.num_classes, dtype=np.int64)
        for obj in objects:
            if not isinstance(obj, dict) or "class" not in obj:
                raise DataFormatError("each object needs a \"class\" field", line=lineno)
            name = obj["class"]
            if name not in manifest._class_index:
                raise DataFormatError(f"unknown class name {name!r}", line=lineno)
            counts[manifest.class_index(name)] += 1
        out[image_id] = counts
    return out


def write_selection(records: Iterable, stream: IO[str]) -> None:
    """Write per-cycle selection reports as line-delimited JSON.

    The first line is a header naming the format; each following line is
    one rank entry with its cycle, stage ("initial" or "final"), metric,
    and divergence values. Output is byte-stable across reruns.
    """
    header = {"format": SELECTION_FORMAT, "version": SELECTION_VERSION}
    stream.write(json.dumps(header, sort_keys=True) + "\n")
    for record in records:
        for stage, rows in (("initial", record.initial), ("final", record.final)):
            for rank, row in enumerate(rows, start=1):
                payload = {
                    "cycle": record.cycle,
                    "rank": rank,
                    "image_id": row.image_id,
                    "metric_M": row.metric,
                    "js_mutual": row.js,
                    "stage": stage,
                }
                stream.write(json.dumps(payload) + "\n")


def read_selection(lines: Iterable[str]):
    """Parse a selection report back into per-cycle records (round-trip of
    ``write_selection``)."""
    from .pipeline import CycleRecord, SelectionRow

    iterator: Iterator[str] = iter(lines)
    try:
        first = next(iterator)
    except StopIteration:
        raise DataFormatError("selection report is empty (missing header)") from None
    header = _parse_json_line(first, 1)
    if header.get("format") != SELECTION_FORMAT:
        raise DataFormatError(f"not a selection report: header {header!r}", line=1)
    records: dict[int, CycleRecord] = {}
    for lineno, line in enumerate(iterator, start=2):
        if not line.strip():
            continue
        data = _parse_json_line(line, lineno)
        for key in ("cycle", "rank", "image_id", "metric_M", "stage"):
            _require(data, key, lineno)
        cycle = data["cycle"]
        record = records.get(cycle)
        if record is None:
            record = CycleRecord(cycle=cycle, initial=[], final=[])
            records[cycle] = record
        rows = record.initial if data["stage"] == "initial" else record.final
        if data["rank"] != len(rows) + 1:
            raise DataFormatError(
                f"rank {data['rank']} out of order (expected {len(rows) + 1})", line=lineno
            )
        rows.append(
            SelectionRow(
                image_id=data["image_id"], metric=data["metric_M"], js=data.get("js_mutual")
            )
        )
    return [records[c] for c in sorted(records)]


def write_score_report(infos: Iterable, stream: IO[str]) -> None:
    """Write per-image metric values, ascending (most informative first)."""
    ordered = sorted(infos, key=lambda info: (info.metric, info.image_id))
    for info in ordered:
        payload = {
            "image_id": info.image_id,
            "metric_M": info.metric,
            "flagged": info.flagged,
        }
        stream.write(json.dumps(payload) + "\n")
