"""Stage-2 rebalancing: class distributions and greedy selection.

The labeled pool's class distribution comes from softmaxed ground-truth
instance counts; an unlabeled image's comes from its per-class maximum
confidences (original plus augmented predictions pooled). Images whose
distribution diverges most from the labeled pool complement it best.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .consistency import js_divergence
from .errors import ConfigError, EmptyPoolError, InsufficientCandidatesError, InvalidDistributionError
from .geometry import PredictionRecord

POOL_COUNT_MODES = ("raw_counts", "normalized_counts")


@dataclass(frozen=True)
class ClassDistribution:
    """Probability vector over the dataset's classes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidDistributionError("probs must be a non-empty 1-d vector")
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-9:
            raise InvalidDistributionError("probs must be nonnegative and sum to 1")

    def __len__(self) -> int:
        return self.probs.size


def softmax(values: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-subtracted)."""
    values = np.asarray(values, dtype=np.float64)
    shifted = values - values.max()
    e = np.exp(shifted)
    return e / e.sum()


def count_distribution(counts: np.ndarray) -> ClassDistribution:
    """Plain count-normalized distribution (used by balance diagnostics)."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0.0:
        raise EmptyPoolError("no object instances to normalize")
    return ClassDistribution(counts / total)


def labeled_pool_distribution(
    counts: np.ndarray, mode: str = "raw_counts"
) -> ClassDistribution:
    """Softmax of the labeled pool's per-class instance counts.

    ``normalized_counts`` divides by the total first, which keeps the
    softmax unsaturated for large pools; ``raw_counts`` is the faithful
    default.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if counts.sum() <= 0:
        raise EmptyPoolError("labeled pool has no object instances")
    if mode not in POOL_COUNT_MODES:
        raise ConfigError(f"pool count mode must be one of {POOL_COUNT_MODES}, got {mode!r}")
    if mode == "normalized_counts":
        counts = counts / counts.sum()
    return ClassDistribution(softmax(counts))


def unlabeled_image_distribution(
    original_preds: Sequence[PredictionRecord],
    augmented_preds: Sequence[Sequence[PredictionRecord]],
    num_classes: int,
) -> ClassDistribution:
    """Class distribution of an unlabeled image from its peak confidences.

    Per class: max confidence over original predictions plus max over all
    augmented predictions pooled across augmentations (each 0 when absent),
    then softmax. With no predictions at all this is the uniform
    distribution.
    """
    delta = np.zeros(num_classes, dtype=np.float64)
    if original_preds:
        delta += np.max([rec.scores for rec in original_preds], axis=0)
    pooled = [rec for group in augmented_preds for rec in group]
    if pooled:
        delta += np.max([rec.scores for rec in pooled], axis=0)
    return ClassDistribution(softmax(delta))


def mutual_information(img_dist: ClassDistribution, pool_dist: ClassDistribution) -> float:
    """Divergence between an image's and the labeled pool's class distributions.

    Higher means the image complements the labeled pool more.
    """
    return js_divergence(img_dist.probs, pool_dist.probs)


def select_by_mutual_information(
    initial_pool: Sequence[tuple[str, ClassDistribution]],
    pool_dist: ClassDistribution,
    budget: int,
) -> list[str]:
    """Greedy selection of the ``budget`` most complementary images.

    The pool distribution is fixed for the whole loop, so repeatedly
    removing the argmax equals taking the top ``budget`` images sorted by
    divergence descending (ties by image id ascending). The returned order
    is the selection order.
    """
    if budget < 0:
        raise ConfigError(f"budget must be nonnegative, got {budget}")
    if budget > len(initial_pool):
        raise InsufficientCandidatesError(
            f"budget {budget} exceeds initial pool size {len(initial_pool)}"
        )
    scored = [
        (-mutual_information(dist, pool_dist), image_id)
        for image_id, dist in initial_pool
    ]
    scored.sort()
    return [image_id for _, image_id in scored[:budget]]
