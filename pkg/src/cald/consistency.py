"""Stage-1 scoring: prediction matching and the consistency metric.

A reference prediction (original-image detection mapped into an augmented
frame) is matched to the augmented-image detection with maximum IoU. The
pair's consistency m is the box IoU plus a confidence-weighted score
agreement, so m lies in [0, 2]. An image's information value is the
augmentation-averaged minimum distance |m - beta| to the base point beta;
lower means more informative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, EmptyScoreError, InvalidDistributionError
from .geometry import AugmentationSpec, BoundingBox, PredictionRecord, iou

METRIC_VARIANTS = ("min", "mean")
EMPTY_IMAGE_POLICIES = ("beta", "zero")


@dataclass(frozen=True)
class ConsistencyRecord:
    """Consistency of one reference prediction against its matched candidate."""

    reference_index: int
    corresponding_index: int | None
    c_box: float
    c_score: float
    m: float


@dataclass(frozen=True)
class ImageInformation:
    """Per-image metric plus its per-augmentation components.

    ``flagged`` marks images that had no reference predictions at all, whose
    metric is the configured empty-image default.
    """

    image_id: str
    metric: float
    per_augmentation: tuple[tuple[AugmentationSpec, float], ...] = field(repr=False)
    flagged: bool = False


def normalize(scores: np.ndarray) -> np.ndarray:
    """Scale a nonnegative score vector to sum to 1."""
    scores = np.asarray(scores, dtype=np.float64)
    total = scores.sum()
    if total <= 0.0:
        raise EmptyScoreError("cannot normalize an all-zero score vector")
    return scores / total


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Base-2 Jensen-Shannon divergence between probability vectors, in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise InvalidDistributionError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0.0) or abs(vec.sum() - 1.0) > 1e-6:
            raise InvalidDistributionError(f"{name} is not a probability vector")
    mid = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        tp = np.where(p > 0.0, p * np.log2(p / mid), 0.0)
        tq = np.where(q > 0.0, q * np.log2(q / mid), 0.0)
    return float(np.clip(0.5 * (tp.sum() + tq.sum()), 0.0, 1.0))


def match_prediction(
    ref_box: BoundingBox, candidates: Sequence[PredictionRecord]
) -> tuple[int, float] | None:
    """Index and IoU of the max-IoU candidate; None when none overlaps.

    Ties go to the lowest candidate index, so results are deterministic
    given input order.
    """
    best_index = -1
    best_iou = 0.0
    for i, cand in enumerate(candidates):
        v = iou(ref_box, cand.box)
        if v > best_iou:
            best_iou = v
            best_index = i
    if best_index < 0:
        return None
    return best_index, best_iou


def pair_consistency(
    ref: PredictionRecord,
    cor: PredictionRecord,
    reference_index: int = 0,
    corresponding_index: int | None = 0,
) -> ConsistencyRecord:
    """Consistency of a matched reference/corresponding prediction pair.

    The score term weights (1 - JS divergence) by the mean of the two raw
    maximum confidences; the divergence itself is computed on normalized
    vectors.
    """
    c_box = iou(ref.box, cor.box)
    weight = 0.5 * (float(ref.scores.max()) + float(cor.scores.max()))
    divergence = js_divergence(normalize(ref.scores), normalize(cor.scores))
    c_score = weight * (1.0 - divergence)
    return ConsistencyRecord(
        reference_index=reference_index,
        corresponding_index=corresponding_index,
        c_box=c_box,
        c_score=c_score,
        m=c_box + c_score,
    )


def consistency_records(
    refs: Sequence[PredictionRecord], candidates: Sequence[PredictionRecord]
) -> list[ConsistencyRecord]:
    """Match every reference prediction and compute its consistency.

    Unmatched references (no candidates, or zero overlap with all of them)
    get m = 0: a wildly inconsistent pair carries no usable signal.
    """
    out = []
    for k, ref in enumerate(refs):
        match = match_prediction(ref.box, candidates)
        if match is None:
            out.append(ConsistencyRecord(k, None, 0.0, 0.0, 0.0))
        else:
            j, _ = match
            out.append(pair_consistency(ref, candidates[j], k, j))
    return out


AugGroup = tuple[AugmentationSpec, Sequence[PredictionRecord], Sequence[PredictionRecord]]


def _pack(groups: Sequence[Sequence[PredictionRecord]], num_classes: int):
    boxes = []
    scores = []
    offsets = np.zeros(len(groups) + 1, dtype=np.int64)
    for g, records in enumerate(groups):
        for rec in records:
            boxes.append(rec.box.as_array())
            scores.append(rec.scores)
        offsets[g + 1] = offsets[g] + len(records)
    if boxes:
        return np.stack(boxes), np.stack(scores), offsets
    return (
        np.zeros((0, 4), dtype=np.float64),
        np.zeros((0, num_classes), dtype=np.float64),
        offsets,
    )


def _infer_num_classes(groups: Sequence[AugGroup]) -> int:
    for _, refs, preds in groups:
        for rec in list(refs) + list(preds):
            return rec.scores.size
    return 1


def image_information(
    image_id: str,
    groups: Sequence[AugGroup],
    beta: float,
    *,
    variant: str = "min",
    empty_image_policy: str = "beta",
) -> ImageInformation:
    """Information value of one image from its per-augmentation predictions.

    ``groups`` pairs each augmentation with (mapped reference predictions,
    detector predictions on that augmented image). The per-augmentation
    value is the min (or mean, for the global-information variant) of
    |m_k - beta| over reference predictions; the metric averages those
    values. An augmentation with no references contributes the empty-image
    default; an image with none anywhere is flagged.
    """
    if not groups:
        raise ConfigError("at least one augmentation group is required")
    if not 0.0 < beta <= 2.0:
        raise ConfigError(f"beta must be in (0, 2], got {beta}")
    if variant not in METRIC_VARIANTS:
        raise ConfigError(f"metric variant must be one of {METRIC_VARIANTS}, got {variant!r}")
    if empty_image_policy not in EMPTY_IMAGE_POLICIES:
        raise ConfigError(
            f"empty-image policy must be one of {EMPTY_IMAGE_POLICIES}, got {empty_image_policy!r}"
        )
    num_classes = _infer_num_classes(groups)
    ref_boxes, ref_scores, ref_off = _pack([g[1] for g in groups], num_classes)
    pred_boxes, pred_scores, pred_off = _pack([g[2] for g in groups], num_classes)
    min_d, mean_d = _kernels.score_groups(
        ref_boxes, ref_scores, ref_off, pred_boxes, pred_scores, pred_off, float(beta)
    )
    values = min_d if variant == "min" else mean_d
    default = float(beta) if empty_image_policy == "beta" else 0.0
    per_aug = []
    filled = np.empty(len(groups), dtype=np.float64)
    any_refs = False
    for g, (spec, refs, _) in enumerate(groups):
        if len(refs) == 0:
            filled[g] = default
        else:
            any_refs = True
            filled[g] = values[g]
        per_aug.append((spec, float(filled[g])))
    metric = default if not any_refs else float(np.mean(filled))
    return ImageInformation(
        image_id=image_id,
        metric=metric,
        per_augmentation=tuple(per_aug),
        flagged=not any_refs,
    )


def image_information_mean(
    image_id: str,
    groups: Sequence[AugGroup],
    beta: float,
    *,
    empty_image_policy: str = "beta",
) -> ImageInformation:
    """Global-information variant: mean over predictions instead of min."""
    return image_information(
        image_id, groups, beta, variant="mean", empty_image_policy=empty_image_policy
    )
