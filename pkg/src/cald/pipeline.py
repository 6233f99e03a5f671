"""Cycle orchestration: scoring fan-out, two-stage selection, pool updates.

Stage 1 ranks unlabeled images by the consistency metric and keeps slightly
more than the budget; Stage 2 trims back to the budget by class-distribution
divergence against the labeled pool. The labeled-pool distribution is held
fixed within a cycle and recomputed only after oracle labeling.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .consistency import (
    EMPTY_IMAGE_POLICIES,
    METRIC_VARIANTS,
    ImageInformation,
    image_information,
)
from .dataio import ImagePredictions
from .distribution import (
    POOL_COUNT_MODES,
    ClassDistribution,
    labeled_pool_distribution,
    mutual_information,
    select_by_mutual_information,
    unlabeled_image_distribution,
)
from .errors import ConfigError, IncompleteInputError, InsufficientCandidatesError
from .geometry import AugmentationSpec, PredictionRecord, map_predictions

DEFAULT_AUGMENTATION_SPECS = (
    AugmentationSpec.horizontal_flip(),
    AugmentationSpec.cutout(),
    AugmentationSpec.downsize(0.8),
    AugmentationSpec.rotation(5.0),
)

# Image id -> per-class ground-truth instance counts.
LabelOracle = Callable[[str], np.ndarray]


@dataclass(frozen=True)
class SelectionConfig:
    """Tuning knobs for one selection run. Defaults are the reference setup."""

    budget_per_cycle: int
    beta: float = 1.3
    expansion_ratio: float = 0.20
    cycles: int = 1
    augmentations: tuple[AugmentationSpec, ...] = DEFAULT_AUGMENTATION_SPECS
    retention_threshold: float = 0.1
    metric_variant: str = "min"
    empty_image_policy: str = "beta"
    pool_count_mode: str = "raw_counts"

    def __post_init__(self):
        if self.budget_per_cycle < 0:
            raise ConfigError(f"budget must be nonnegative, got {self.budget_per_cycle}")
        # upper bound inclusive: beta = 2 is a meaningful ablation (least
        # informative samples selected)
        if not 0.0 < self.beta <= 2.0:
            raise ConfigError(f"beta must be in (0, 2], got {self.beta}")
        if self.expansion_ratio < 0.0:
            raise ConfigError(f"expansion ratio must be >= 0, got {self.expansion_ratio}")
        if self.cycles < 1:
            raise ConfigError(f"cycles must be >= 1, got {self.cycles}")
        if not self.augmentations:
            raise ConfigError("at least one augmentation is required")
        if not 0.0 <= self.retention_threshold <= 1.0:
            raise ConfigError(
                f"retention threshold must be in [0, 1], got {self.retention_threshold}"
            )
        if self.metric_variant not in METRIC_VARIANTS:
            raise ConfigError(f"metric variant must be one of {METRIC_VARIANTS}")
        if self.empty_image_policy not in EMPTY_IMAGE_POLICIES:
            raise ConfigError(f"empty-image policy must be one of {EMPTY_IMAGE_POLICIES}")
        if self.pool_count_mode not in POOL_COUNT_MODES:
            raise ConfigError(f"pool count mode must be one of {POOL_COUNT_MODES}")
        object.__setattr__(self, "augmentations", tuple(self.augmentations))


@dataclass
class SelectionRow:
    """One ranked image in a cycle report."""

    image_id: str
    metric: float
    js: float | None = None


@dataclass
class CycleRecord:
    """Stage-1 (initial) and Stage-2 (final) rankings of one cycle."""

    cycle: int
    initial: list[SelectionRow]
    final: list[SelectionRow]


@dataclass
class PoolState:
    """Labeled/unlabeled split plus the per-cycle selection history."""

    labeled: dict[str, np.ndarray]
    unlabeled: set[str]
    cycle_index: int = 0
    history: list[CycleRecord] = field(default_factory=list)

    def __post_init__(self):
        overlap = set(self.labeled) & self.unlabeled
        if overlap:
            raise ConfigError(f"labeled and unlabeled pools overlap: {sorted(overlap)[:5]}")

    def labeled_counts(self, num_classes: int) -> np.ndarray:
        counts = np.zeros(num_classes, dtype=np.int64)
        for per_image in self.labeled.values():
            counts += np.asarray(per_image, dtype=np.int64)
        return counts


def retained(records: Sequence[PredictionRecord], threshold: float) -> list[PredictionRecord]:
    """Detections whose peak confidence clears the retention threshold."""
    return [r for r in records if float(r.scores.max()) >= threshold]


def _image_groups(entry: ImagePredictions, config: SelectionConfig):
    """Build (augmentation, mapped references, candidates) triples for one image."""
    original = retained(entry.original, config.retention_threshold)
    groups = []
    for aug in config.augmentations:
        refs = map_predictions(original, aug, entry.size)
        preds = retained(entry.by_aug[aug.tag], config.retention_threshold)
        groups.append((aug, refs, preds))
    return groups


def _check_coverage(
    predictions: Mapping[str, ImagePredictions],
    image_ids: Sequence[str],
    config: SelectionConfig,
) -> None:
    tags = [aug.tag for aug in config.augmentations]
    missing = []
    for image_id in image_ids:
        entry = predictions.get(image_id)
        if entry is None:
            missing.append(image_id)
        else:
            absent = [t for t in tags if t not in entry.by_aug]
            if absent:
                missing.append(f"{image_id} (augmentations: {', '.join(absent)})")
    if missing:
        raise IncompleteInputError(
            f"predictions missing for {len(missing)} image(s): "
            + ", ".join(sorted(missing)[:10])
            + ("..." if len(missing) > 10 else ""),
            missing=sorted(missing),
        )


def score_images(
    predictions: Mapping[str, ImagePredictions],
    image_ids: Sequence[str],
    config: SelectionConfig,
    jobs: int = 1,
) -> dict[str, ImageInformation]:
    """Consistency metric for every listed image.

    Per-image jobs are independent; results are identical for any ``jobs``
    value because each image is scored in isolation and merged by id.
    """
    ids = sorted(image_ids)
    _check_coverage(predictions, ids, config)

    def _score_one(image_id: str) -> ImageInformation:
        return image_information(
            image_id,
            _image_groups(predictions[image_id], config),
            config.beta,
            variant=config.metric_variant,
            empty_image_policy=config.empty_image_policy,
        )

    if jobs <= 1 or len(ids) < 2:
        return {i: _score_one(i) for i in ids}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        infos = list(pool.map(_score_one, ids))
    return {info.image_id: info for info in infos}


def stage_one(scores: Sequence[ImageInformation], config: SelectionConfig) -> list[str]:
    """Initial selected pool: the smallest-metric images, slightly over budget.

    Keeps ceil(budget * (1 + expansion_ratio)) ids ascending by metric
    (ties by id); returns everything when fewer images exist.
    """
    # tiny epsilon so binary representations of e.g. 500 * 1.2 do not ceil to 601
    target = math.ceil(config.budget_per_cycle * (1.0 + config.expansion_ratio) - 1e-9)
    ordered = sorted(scores, key=lambda s: (s.metric, s.image_id))
    return [s.image_id for s in ordered[: max(target, 0)]]


def plan_selection(
    pool: PoolState,
    predictions: Mapping[str, ImagePredictions],
    config: SelectionConfig,
    num_classes: int,
    jobs: int = 1,
    scores: Mapping[str, ImageInformation] | None = None,
) -> tuple[CycleRecord, dict[str, ImageInformation]]:
    """Both selection stages for the current cycle, without labeling.

    Returns the cycle report and the per-image scores it was built from.
    ``scores`` may be supplied when the caller has already scored the
    unlabeled pool.
    """
    unlabeled = sorted(pool.unlabeled)
    if scores is None:
        scores = score_images(predictions, unlabeled, config, jobs=jobs)
    infos = [scores[i] for i in unlabeled]
    initial_ids = stage_one(infos, config)
    budget = min(config.budget_per_cycle, len(unlabeled))

    pool_dist = labeled_pool_distribution(
        pool.labeled_counts(num_classes), mode=config.pool_count_mode
    )
    dists: dict[str, ClassDistribution] = {}
    js_map: dict[str, float] = {}
    for image_id in initial_ids:
        entry = predictions[image_id]
        original = retained(entry.original, config.retention_threshold)
        augmented = [
            retained(entry.by_aug[aug.tag], config.retention_threshold)
            for aug in config.augmentations
        ]
        dists[image_id] = unlabeled_image_distribution(original, augmented, num_classes)
        js_map[image_id] = mutual_information(dists[image_id], pool_dist)
    final_ids = select_by_mutual_information(
        [(i, dists[i]) for i in initial_ids], pool_dist, budget
    )

    record = CycleRecord(
        cycle=pool.cycle_index + 1,
        initial=[
            SelectionRow(i, metric=scores[i].metric, js=js_map[i]) for i in initial_ids
        ],
        final=[
            SelectionRow(i, metric=scores[i].metric, js=js_map[i]) for i in final_ids
        ],
    )
    return record, dict(scores)


def run_cycle(
    pool: PoolState,
    predictions: Mapping[str, ImagePredictions],
    oracle: LabelOracle,
    config: SelectionConfig,
    num_classes: int,
    jobs: int = 1,
    scores: Mapping[str, ImageInformation] | None = None,
) -> PoolState:
    """One full cycle: select, query the oracle, move images labeled-ward.

    Returns a new pool state; the input state is left untouched. When the
    unlabeled pool is smaller than the budget everything is selected.
    """
    if not pool.unlabeled:
        raise InsufficientCandidatesError("unlabeled pool is empty")
    record, _ = plan_selection(pool, predictions, config, num_classes, jobs=jobs, scores=scores)
    selected = [row.image_id for row in record.final]
    labeled = dict(pool.labeled)
    for image_id in selected:
        labeled[image_id] = np.asarray(oracle(image_id), dtype=np.int64)
    return PoolState(
        labeled=labeled,
        unlabeled=pool.unlabeled - set(selected),
        cycle_index=pool.cycle_index + 1,
        history=[*pool.history, record],
    )


def beta_search(
    evaluate: Callable[[float], float], step: float = 0.1, max_steps: int = 5
) -> float:
    """Hill-climb the base point from the midpoint of the metric's bounds.

    Each step evaluates the current point and both neighbors and moves to
    the best strict improvement; stops at a local optimum or after
    ``max_steps`` moves. Candidates outside (0, 2) are never evaluated.
    """
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    if max_steps < 1:
        raise ConfigError(f"max_steps must be >= 1, got {max_steps}")
    beta = 1.0
    best = evaluate(beta)
    for _ in range(max_steps):
        candidates = [c for c in (beta + step, beta - step) if 0.0 < c < 2.0]
        if not candidates:
            break
        values = [evaluate(c) for c in candidates]
        pick = int(np.argmax(values))
        if values[pick] <= best:
            break
        beta, best = candidates[pick], values[pick]
    return beta


def random_baseline(pool: PoolState, budget: int, seed: int) -> list[str]:
    """Uniform sample without replacement from the unlabeled pool."""
    ids = sorted(pool.unlabeled)
    if budget > len(ids):
        raise InsufficientCandidatesError(
            f"budget {budget} exceeds unlabeled pool size {len(ids)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    return [ids[i] for i in order[:budget]]
