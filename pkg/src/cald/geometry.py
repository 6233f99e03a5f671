"""Axis-aligned box arithmetic and mapping of predictions into augmented frames.

The engine never touches pixels: an augmentation is described by a small
spec and the only geometric question is where a box from the original frame
lands in the augmented frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, MappingDegenerateError


class AugKind(str, Enum):
    """Augmentation vocabulary. Values double as file tags."""

    ORIGINAL = "original"
    HORIZONTAL_FLIP = "F"
    CUTOUT = "C"
    DOWNSIZE = "D"
    ROTATION = "R"
    GAUSSIAN_NOISE = "G"
    SALT_PEPPER = "S"


# Kinds that leave box geometry untouched (photometric / occlusion).
_IDENTITY_KINDS = frozenset(
    {AugKind.ORIGINAL, AugKind.CUTOUT, AugKind.GAUSSIAN_NOISE, AugKind.SALT_PEPPER}
)


@dataclass(frozen=True)
class ImageSize:
    """Pixel dimensions of a frame."""

    width: int
    height: int

    def __post_init__(self):
        if not (isinstance(self.width, int) and isinstance(self.height, int)):
            raise ValueError("image dimensions must be integers")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1x1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, corners (x_min, y_min)-(x_max, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (
            self.x_min < self.x_max
            and self.y_min < self.y_max
            and math.isfinite(self.x_min)
            and math.isfinite(self.y_min)
            and math.isfinite(self.x_max)
            and math.isfinite(self.y_max)
        ):
            coords = (self.x_min, self.y_min, self.x_max, self.y_max)
            raise ValueError(f"box corners must be finite with positive extent, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.x_max, self.y_max], dtype=np.float64)


@dataclass(frozen=True)
class AugmentationSpec:
    """One augmentation plus its parameters.

    Only the parameter matching ``kind`` is meaningful; the others keep
    their defaults. ``ratio`` may exceed 1 so that a downsize can be
    inverted; file/config-level validation restricts it to (0, 1].
    """

    kind: AugKind
    ratio: float = 0.8           # DOWNSIZE scale factor
    angle: float = 5.0           # ROTATION degrees
    area_fraction: float = 0.2   # CUTOUT occluded fraction of image area
    noise_scale: float = 0.05    # GAUSSIAN_NOISE sigma / SALT_PEPPER amount

    def __post_init__(self):
        if self.kind == AugKind.DOWNSIZE and not self.ratio > 0:
            raise ConfigError(f"downsize ratio must be positive, got {self.ratio}")
        if self.kind == AugKind.ROTATION and not (-180.0 < self.angle <= 180.0):
            raise ConfigError(f"rotation angle must be in (-180, 180], got {self.angle}")
        if self.kind == AugKind.CUTOUT and not (0.0 < self.area_fraction < 1.0):
            raise ConfigError(f"cutout area fraction must be in (0, 1), got {self.area_fraction}")

    @property
    def tag(self) -> str:
        return self.kind.value

    @classmethod
    def original(cls) -> "AugmentationSpec":
        return cls(AugKind.ORIGINAL)

    @classmethod
    def horizontal_flip(cls) -> "AugmentationSpec":
        return cls(AugKind.HORIZONTAL_FLIP)

    @classmethod
    def cutout(cls, area_fraction: float = 0.2) -> "AugmentationSpec":
        return cls(AugKind.CUTOUT, area_fraction=area_fraction)

    @classmethod
    def downsize(cls, ratio: float = 0.8) -> "AugmentationSpec":
        return cls(AugKind.DOWNSIZE, ratio=ratio)

    @classmethod
    def rotation(cls, angle: float = 5.0) -> "AugmentationSpec":
        return cls(AugKind.ROTATION, angle=angle)

    @classmethod
    def gaussian_noise(cls, scale: float = 0.05) -> "AugmentationSpec":
        return cls(AugKind.GAUSSIAN_NOISE, noise_scale=scale)

    @classmethod
    def salt_pepper(cls, amount: float = 0.05) -> "AugmentationSpec":
        return cls(AugKind.SALT_PEPPER, noise_scale=amount)

    @classmethod
    def from_tag(cls, tag: str, params: dict | None = None) -> "AugmentationSpec":
        """Build a spec from a file tag and an optional parameter mapping."""
        try:
            kind = AugKind(tag)
        except ValueError:
            valid = ", ".join(k.value for k in AugKind)
            raise ConfigError(f"unknown augmentation tag {tag!r} (valid: {valid})") from None
        params = params or {}
        kwargs = {}
        for key in ("ratio", "angle", "area_fraction", "noise_scale"):
            if key in params:
                kwargs[key] = float(params[key])
        unknown = set(params) - {"ratio", "angle", "area_fraction", "noise_scale"}
        if unknown:
            raise ConfigError(f"unknown augmentation parameter(s) {sorted(unknown)} for tag {tag!r}")
        return cls(kind, **kwargs)


@dataclass(frozen=True)
class PredictionRecord:
    """One detection: a box plus per-class confidences.

    ``scores`` is a dense float vector over the dataset classes; entries
    lie in [0, 1] and at least one is positive for a retained detection.
    """

    box: BoundingBox
    scores: np.ndarray = field(repr=False)

    def __post_init__(self):
        scores = self.scores
        if not (isinstance(scores, np.ndarray) and scores.dtype == np.float64):
            scores = np.asarray(scores, dtype=np.float64)
            object.__setattr__(self, "scores", scores)
        if scores.ndim != 1 or scores.size == 0:
            raise ValueError("scores must be a non-empty 1-d vector")
        # min/max double as the finiteness check (NaN poisons both)
        lo, hi = float(scores.min()), float(scores.max())
        if not (0.0 <= lo and hi <= 1.0):
            raise ValueError("confidences must be finite and within [0, 1]")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    # round-off can nudge the ratio a hair past 1 for near-identical boxes
    return min(inter / union, 1.0)


def map_box(box: BoundingBox, aug: AugmentationSpec, size: ImageSize) -> BoundingBox:
    """Map a box from the original frame into the frame of ``aug``.

    Horizontal flips mirror x about the frame, downsizing scales all
    coordinates, rotation takes the axis-aligned hull of the rotated
    corners clipped to the (same-sized) rotated frame. Photometric and
    occlusion augmentations leave boxes untouched.

    Raises MappingDegenerateError when clipping collapses the box; callers
    drop that prediction.
    """
    kind = aug.kind
    if kind in _IDENTITY_KINDS:
        return box
    if kind == AugKind.HORIZONTAL_FLIP:
        return BoundingBox(size.width - box.x_max, box.y_min, size.width - box.x_min, box.y_max)
    if kind == AugKind.DOWNSIZE:
        r = aug.ratio
        return BoundingBox(box.x_min * r, box.y_min * r, box.x_max * r, box.y_max * r)
    if kind == AugKind.ROTATION:
        return _rotate_aabb(box, aug.angle, size)
    raise ConfigError(f"unhandled augmentation kind {kind!r}")


def _rotate_aabb(box: BoundingBox, angle_deg: float, size: ImageSize) -> BoundingBox:
    cx, cy = size.width / 2.0, size.height / 2.0
    rad = math.radians(angle_deg)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    xs = (box.x_min, box.x_max, box.x_max, box.x_min)
    ys = (box.y_min, box.y_min, box.y_max, box.y_max)
    rx, ry = [], []
    for x, y in zip(xs, ys):
        dx, dy = x - cx, y - cy
        rx.append(cx + cos_a * dx - sin_a * dy)
        ry.append(cy + sin_a * dx + cos_a * dy)
    x_min = max(0.0, min(rx))
    y_min = max(0.0, min(ry))
    x_max = min(float(size.width), max(rx))
    y_max = min(float(size.height), max(ry))
    if x_max <= x_min or y_max <= y_min:
        raise MappingDegenerateError(
            f"box {box} degenerates under rotation by {angle_deg} degrees"
        )
    return BoundingBox(x_min, y_min, x_max, y_max)


def map_predictions(
    preds: list[PredictionRecord], aug: AugmentationSpec, size: ImageSize
) -> list[PredictionRecord]:
    """Map each prediction's box via ``map_box``; scores are copied unchanged.

    Predictions whose mapped box degenerates are omitted rather than failing.
    """
    out = []
    for rec in preds:
        try:
            mapped = map_box(rec.box, aug, size)
        except MappingDegenerateError:
            continue
        out.append(PredictionRecord(box=mapped, scores=rec.scores.copy()))
    return out
