"""Seeded synthetic world and detector model for desk-scale evaluation.

The world is a set of images with ground-truth objects drawn from a
Zipf-like class distribution. The detector model's per-class skill grows
with the number of labeled instances of that class; all of its noise
sources (box jitter, misclassification, confidence softening) shrink as
skill grows, and at skill 1 it reproduces ground truth exactly under every
augmentation. That monotone link between labeled data and prediction
consistency is what lets selection trends be evaluated end to end.

All predictions and labels flow through the same line formats the engine
ingests from disk, so every experiment also exercises the real parsers.
"""

from __future__ import annotations

import csv
import json
import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from . import _kernels
from .consistency import js_divergence
from .dataio import DatasetManifest, parse_labels, parse_predictions
from .errors import ConfigError, MappingDegenerateError
from .geometry import (
    AugKind,
    AugmentationSpec,
    BoundingBox,
    ImageSize,
    PredictionRecord,
    map_box,
)
from .pipeline import (
    PoolState,
    SelectionConfig,
    random_baseline,
    retained,
    run_cycle,
    score_images,
)

# Fixed per-tag stream indices so (seed, image, augmentation) substreams are
# reproducible in isolation and independent of call order.
_AUG_STREAM = {tag.value: i for i, tag in enumerate(AugKind)}

METRICS_COLUMNS = (
    "strategy",
    "seed",
    "cycle",
    "mean_error",
    "balance_js",
    "mean_M_selected",
    "mean_M_labeled",
)

STRATEGY_NAMES = ("cald", "random", "cald_mean_variant", "cald_beta:<beta>")


@dataclass(frozen=True)
class SimObject:
    class_id: int
    box: BoundingBox


@dataclass(frozen=True)
class SimImage:
    image_id: str
    size: ImageSize
    objects: tuple[SimObject, ...]


@dataclass
class SimWorld:
    """Synthetic dataset: every image has at least one ground-truth object."""

    images: list[SimImage]
    class_frequencies: np.ndarray
    seed: int

    def __post_init__(self):
        self._index = {img.image_id: i for i, img in enumerate(self.images)}
        # ground truth never changes, so mapped boxes are shared across
        # cycles and strategies
        self._mapped_cache: dict = {}

    @property
    def num_classes(self) -> int:
        return len(self.class_frequencies)

    @property
    def class_names(self) -> list[str]:
        return [f"class_{i:02d}" for i in range(self.num_classes)]

    @property
    def image_ids(self) -> list[str]:
        return [img.image_id for img in self.images]

    def image(self, image_id: str) -> SimImage:
        return self.images[self._index[image_id]]

    def label_counts(self, image_id: str) -> np.ndarray:
        counts = np.zeros(self.num_classes, dtype=np.int64)
        for obj in self.image(image_id).objects:
            counts[obj.class_id] += 1
        return counts

    def manifest(self, augmentations: Sequence[AugmentationSpec]) -> DatasetManifest:
        return DatasetManifest(
            class_names=self.class_names,
            image_ids=self.image_ids,
            augmentations={spec.tag: _spec_params(spec) for spec in augmentations},
        )


def _spec_params(spec: AugmentationSpec) -> dict:
    if spec.kind == AugKind.DOWNSIZE:
        return {"ratio": spec.ratio}
    if spec.kind == AugKind.ROTATION:
        return {"angle": spec.angle}
    if spec.kind == AugKind.CUTOUT:
        return {"area_fraction": spec.area_fraction}
    if spec.kind in (AugKind.GAUSSIAN_NOISE, AugKind.SALT_PEPPER):
        return {"noise_scale": spec.noise_scale}
    return {}


def generate_world(
    num_images: int,
    num_classes: int,
    imbalance_exponent: float,
    seed: int,
    *,
    width: int = 640,
    height: int = 480,
    min_objects: int = 1,
    max_objects: int = 5,
) -> SimWorld:
    """Deterministic synthetic world with rank^(-exponent) class frequencies."""
    if num_images < 1 or num_classes < 1:
        raise ConfigError("num_images and num_classes must be positive")
    if imbalance_exponent < 0:
        raise ConfigError(f"imbalance exponent must be >= 0, got {imbalance_exponent}")
    if not 1 <= min_objects <= max_objects:
        raise ConfigError("need 1 <= min_objects <= max_objects")
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    freqs = ranks ** (-imbalance_exponent)
    freqs /= freqs.sum()
    pad = max(5, len(str(num_images - 1)))
    images = []
    for i in range(num_images):
        n_obj = int(rng.integers(min_objects, max_objects + 1))
        classes = rng.choice(num_classes, size=n_obj, p=freqs)
        objects = []
        for cls in classes:
            w = rng.uniform(0.08, 0.4) * width
            h = rng.uniform(0.08, 0.4) * height
            x0 = rng.uniform(0.0, width - w)
            y0 = rng.uniform(0.0, height - h)
            objects.append(SimObject(int(cls), BoundingBox(x0, y0, x0 + w, y0 + h)))
        images.append(
            SimImage(
                image_id=f"img_{i:0{pad}d}",
                size=ImageSize(width, height),
                objects=tuple(objects),
            )
        )
    return SimWorld(images=images, class_frequencies=freqs, seed=seed)


@dataclass(frozen=True)
class SimDetectorModel:
    """Detector whose quality is a per-class skill in [0, 1].

    Box jitter, misclassification probability, and confidence temperature
    all scale with (1 - skill); skill 1 reproduces ground truth exactly.
    """

    skills: np.ndarray
    jitter_scale: float = 0.09
    misclass_rate: float = 0.25
    temp_scale: float = 0.55

    def __post_init__(self):
        skills = np.asarray(self.skills, dtype=np.float64)
        object.__setattr__(self, "skills", skills)
        if np.any(skills < 0) or np.any(skills > 1):
            raise ConfigError("skills must lie in [0, 1]")

    @classmethod
    def from_label_counts(
        cls,
        counts: np.ndarray,
        kappa: float = 20.0,
        *,
        jitter_scale: float = 0.09,
        misclass_rate: float = 0.25,
        temp_scale: float = 0.55,
    ) -> "SimDetectorModel":
        """Skill grows and saturates with labeled instances: n / (n + kappa)."""
        counts = np.asarray(counts, dtype=np.float64)
        return cls(
            skills=counts / (counts + kappa),
            jitter_scale=jitter_scale,
            misclass_rate=misclass_rate,
            temp_scale=temp_scale,
        )


def augmented_frame(size: ImageSize, aug: AugmentationSpec) -> ImageSize:
    """Frame dimensions of the augmented image (only downsizing changes them)."""
    if aug.kind == AugKind.DOWNSIZE:
        return ImageSize(
            max(1, math.ceil(size.width * aug.ratio)),
            max(1, math.ceil(size.height * aug.ratio)),
        )
    return size


def simulate_detector(
    world: SimWorld,
    model: SimDetectorModel,
    image_id: str,
    aug: AugmentationSpec,
    seed: int,
) -> list[PredictionRecord]:
    """Detector output for one (image, augmentation) pair.

    Deterministic per (seed, image_id, aug): each pair draws from its own
    substream, so augmented copies receive independent noise.
    """
    idx = world._index[image_id]
    img = world.images[idx]
    rng = np.random.default_rng(np.random.SeedSequence([seed, idx, _AUG_STREAM[aug.tag]]))
    frame = augmented_frame(img.size, aug)
    num_classes = world.num_classes
    n_obj = len(img.objects)
    # one batch of draws per object, in a fixed order, so the stream is
    # stable regardless of which objects end up detected
    detect_u = rng.random(n_obj)
    jitter = rng.normal(0.0, 1.0, size=(n_obj, 4))
    misclass_u = rng.random(n_obj)
    wrong_cls = rng.integers(0, max(num_classes - 1, 1), size=n_obj)
    mapped_boxes = world._mapped_cache.get((idx, aug))
    if mapped_boxes is None:
        mapped_boxes = []
        for obj in img.objects:
            try:
                mapped_boxes.append(map_box(obj.box, aug, img.size))
            except MappingDegenerateError:
                mapped_boxes.append(None)
        world._mapped_cache[(idx, aug)] = mapped_boxes
    out = []
    for t, obj in enumerate(img.objects):
        mapped = mapped_boxes[t]
        if mapped is None:
            continue
        skill = float(model.skills[obj.class_id])
        if detect_u[t] > 0.5 + 0.5 * skill:
            continue
        noise = 1.0 - skill
        if noise > 0.0:
            sx = noise * model.jitter_scale * mapped.width
            sy = noise * model.jitter_scale * mapped.height
            x0 = mapped.x_min + jitter[t, 0] * sx
            x1 = mapped.x_max + jitter[t, 1] * sx
            y0 = mapped.y_min + jitter[t, 2] * sy
            y1 = mapped.y_max + jitter[t, 3] * sy
            if x1 < x0:
                x0, x1 = x1, x0
            if y1 < y0:
                y0, y1 = y1, y0
            x0 = max(0.0, x0)
            y0 = max(0.0, y0)
            x1 = min(float(frame.width), x1)
            y1 = min(float(frame.height), y1)
            if x1 - x0 < 1e-6 or y1 - y0 < 1e-6:
                continue
            box = BoundingBox(x0, y0, x1, y1)
        else:
            box = mapped
        cls = obj.class_id
        if noise > 0.0 and num_classes > 1 and misclass_u[t] < noise * model.misclass_rate:
            wrong = int(wrong_cls[t])
            cls = wrong if wrong < cls else wrong + 1
        if noise > 0.0:
            tau = max(model.temp_scale * noise, 1e-3)
            scores = _softened_one_hot(num_classes, cls, tau)
        else:
            scores = np.zeros(num_classes)
            scores[cls] = 1.0
        out.append(PredictionRecord(box=box, scores=scores))
    return out


@lru_cache(maxsize=4096)
def _softened_one_hot(num_classes: int, hot: int, tau: float) -> np.ndarray:
    """Softmax of a one-hot vector at temperature tau, cached per class/skill."""
    cold = math.exp(-1.0 / tau)
    denom = 1.0 + (num_classes - 1) * cold
    scores = np.full(num_classes, cold / denom)
    scores[hot] = 1.0 / denom
    scores.setflags(write=False)
    return scores


def predictions_lines(
    world: SimWorld,
    model: SimDetectorModel,
    augmentations: Sequence[AugmentationSpec],
    seed: int,
    image_ids: Sequence[str] | None = None,
) -> Iterator[str]:
    """Detector output for the given images in the on-disk prediction format."""
    names = tuple(world.class_names)
    specs = [AugmentationSpec.original(), *augmentations]
    ids = world.image_ids if image_ids is None else list(image_ids)

    @lru_cache(maxsize=4096)
    def score_map(key: tuple) -> dict:
        return {names[c]: v for c, v in enumerate(key) if v > 0.0}

    for image_id in ids:
        img = world.image(image_id)
        for spec in specs:
            frame = augmented_frame(img.size, spec)
            records = simulate_detector(world, model, image_id, spec, seed)
            detections = [
                {
                    "box": [rec.box.x_min, rec.box.y_min, rec.box.x_max, rec.box.y_max],
                    "scores": score_map(tuple(rec.scores)),
                }
                for rec in records
            ]
            yield json.dumps(
                {
                    "image_id": image_id,
                    "augmentation": spec.tag,
                    "width": frame.width,
                    "height": frame.height,
                    "detections": detections,
                },
                separators=(",", ":"),
            )


def labels_lines(world: SimWorld, image_ids: Sequence[str]) -> Iterator[str]:
    """Ground-truth labels for the given images in the on-disk label format."""
    names = world.class_names
    for image_id in image_ids:
        objects = [{"class": names[obj.class_id]} for obj in world.image(image_id).objects]
        yield json.dumps({"image_id": image_id, "objects": objects}, separators=(",", ":"))


@dataclass(frozen=True)
class ExperimentConfig:
    """World, detector, and selection settings for one experiment."""

    num_images: int = 2000
    num_classes: int = 10
    imbalance_exponent: float = 1.0
    initial_labeled: int = 100
    selection: SelectionConfig = field(
        default_factory=lambda: SelectionConfig(budget_per_cycle=100, cycles=2)
    )
    kappa: float = 20.0
    jitter_scale: float = 0.09
    misclass_rate: float = 0.25
    temp_scale: float = 0.55
    image_width: int = 640
    image_height: int = 480
    min_objects: int = 1
    max_objects: int = 5

    def __post_init__(self):
        if self.initial_labeled < 1 or self.initial_labeled > self.num_images:
            raise ConfigError("initial_labeled must be in [1, num_images]")
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class MetricsRow:
    """One (strategy, seed, cycle) measurement."""

    strategy: str
    seed: int
    cycle: int
    mean_error: float
    balance_js: float
    mean_M_selected: float
    mean_M_labeled: float


def parse_strategy(name: str) -> tuple[str, dict]:
    """Split a strategy name into its base kind and selection overrides.

    ``cald_beta:<x>`` carries the base point as a parameter.
    """
    if name == "cald":
        return "cald", {}
    if name == "random":
        return "random", {}
    if name == "cald_mean_variant":
        return "cald", {"metric_variant": "mean"}
    if name.startswith("cald_beta:"):
        raw = name.split(":", 1)[1]
        try:
            beta = float(raw)
        except ValueError:
            raise ConfigError(f"cannot parse beta from strategy {name!r}") from None
        return "cald", {"beta": beta}
    raise ConfigError(
        f"unknown strategy {name!r}; valid strategies: {', '.join(STRATEGY_NAMES)}"
    )


def _cycle_seeds(seed: int, cycle: int) -> tuple[int, int, int]:
    state = np.random.SeedSequence([seed, cycle]).generate_state(3, np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def _oracle_counts(
    world: SimWorld, manifest: DatasetManifest, image_ids: Sequence[str]
) -> dict[str, np.ndarray]:
    """Ground-truth counts routed through the on-disk label format."""
    return parse_labels(labels_lines(world, image_ids), manifest)


def _detector_error(
    world: SimWorld, predictions, image_ids: Sequence[str], threshold: float
) -> float:
    """Informativeness proxy: box misfit plus misclassification on a set.

    Per ground-truth object, the best original-image prediction by IoU; an
    object with no overlapping prediction counts as a miss.
    """
    if not image_ids:
        return float("nan")
    errors = []
    for image_id in image_ids:
        img = world.image(image_id)
        preds = retained(predictions[image_id].original, threshold)
        n = len(img.objects)
        iou_total = 0.0
        miss = 0
        if preds:
            gt = np.stack([o.box.as_array() for o in img.objects])
            pb = np.stack([p.box.as_array() for p in preds])
            ious = _kernels.iou_matrix(gt, pb)
            best = ious.argmax(axis=1)
            for t, obj in enumerate(img.objects):
                value = ious[t, best[t]]
                if value > 0.0:
                    iou_total += value
                    if int(np.argmax(preds[best[t]].scores)) != obj.class_id:
                        miss += 1
                else:
                    miss += 1
        else:
            miss = n
        errors.append((1.0 - iou_total / n) + miss / n)
    return float(np.mean(errors))


def _balance_js(counts: np.ndarray) -> float:
    """Divergence of the count-normalized class distribution from uniform."""
    total = counts.sum()
    uniform = np.full(len(counts), 1.0 / len(counts))
    return js_divergence(counts / total, uniform)


def run_experiment(
    strategy: str,
    config: ExperimentConfig,
    seeds: Sequence[int],
    jobs: int = 1,
) -> list[MetricsRow]:
    """Run the selection loop per seed and record per-cycle metrics.

    Per cycle: the mean detector error over the selected set (higher means
    more informative samples were picked), the labeled pool's class balance
    after labeling, and the mean consistency metric of the selected and
    previously labeled pools.
    """
    base, overrides = parse_strategy(strategy)
    if not seeds:
        raise ConfigError("at least one seed is required")
    rows: list[MetricsRow] = []
    for seed in seeds:
        rows.extend(_run_seed(strategy, base, overrides, config, int(seed), jobs))
    return rows


def _run_seed(
    label: str, base: str, overrides: dict, config: ExperimentConfig, seed: int, jobs: int
) -> list[MetricsRow]:
    if seed < 0:
        raise ConfigError(f"seeds must be nonnegative, got {seed}")
    sel = replace(config.selection, **overrides) if overrides else config.selection
    world = generate_world(
        config.num_images,
        config.num_classes,
        config.imbalance_exponent,
        seed,
        width=config.image_width,
        height=config.image_height,
        min_objects=config.min_objects,
        max_objects=config.max_objects,
    )
    manifest = world.manifest(sel.augmentations)
    all_ids = world.image_ids
    empty_pool = PoolState(labeled={}, unlabeled=set(all_ids))
    init_ids = random_baseline(empty_pool, config.initial_labeled, seed)
    pool = PoolState(
        labeled=_oracle_counts(world, manifest, init_ids),
        unlabeled=set(all_ids) - set(init_ids),
    )

    def oracle(image_id: str) -> np.ndarray:
        return _oracle_counts(world, manifest, [image_id])[image_id]

    rows = []
    for cycle in range(1, sel.cycles + 1):
        if not pool.unlabeled:
            break
        model = SimDetectorModel.from_label_counts(
            pool.labeled_counts(config.num_classes),
            kappa=config.kappa,
            jitter_scale=config.jitter_scale,
            misclass_rate=config.misclass_rate,
            temp_scale=config.temp_scale,
        )
        sim_seed, select_seed, eval_seed = _cycle_seeds(seed, cycle)
        lines = predictions_lines(world, model, sel.augmentations, sim_seed)
        predictions = parse_predictions(lines, manifest)
        scores = score_images(predictions, all_ids, sel, jobs=jobs)
        labeled_before = sorted(pool.labeled)
        budget = min(sel.budget_per_cycle, len(pool.unlabeled))
        if base == "random":
            selected = random_baseline(pool, budget, select_seed)
            labeled = dict(pool.labeled)
            labeled.update(_oracle_counts(world, manifest, selected))
            pool = PoolState(
                labeled=labeled,
                unlabeled=pool.unlabeled - set(selected),
                cycle_index=pool.cycle_index + 1,
                history=pool.history,
            )
        else:
            pool = run_cycle(
                pool, predictions, oracle, sel, config.num_classes, jobs=jobs, scores=scores
            )
            selected = [row.image_id for row in pool.history[-1].final]
        # error is measured on an independent prediction draw of the same
        # model: reusing the selection draw would reward images whose
        # objects merely got lucky in it
        eval_lines = predictions_lines(world, model, [], eval_seed, image_ids=selected)
        eval_predictions = parse_predictions(eval_lines, manifest)
        rows.append(
            MetricsRow(
                strategy=label,
                seed=seed,
                cycle=cycle,
                mean_error=_detector_error(
                    world, eval_predictions, selected, sel.retention_threshold
                ),
                balance_js=_balance_js(pool.labeled_counts(config.num_classes)),
                mean_M_selected=float(np.mean([scores[i].metric for i in selected])),
                mean_M_labeled=float(np.mean([scores[i].metric for i in labeled_before])),
            )
        )
    return rows


def write_metrics_csv(rows: Iterable[MetricsRow], stream: IO[str]) -> None:
    """Write the metrics table with one row per (strategy, seed, cycle)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.strategy,
                row.seed,
                row.cycle,
                repr(row.mean_error),
                repr(row.balance_js),
                repr(row.mean_M_selected),
                repr(row.mean_M_labeled),
            ]
        )


def summarize_metrics(rows: Sequence[MetricsRow]) -> str:
    """Aggregate mean and standard deviation across seeds, per strategy and cycle."""
    keys = sorted({(r.strategy, r.cycle) for r in rows})
    lines = [
        f"{'strategy':<18} {'cycle':>5} {'mean_error':>22} {'balance_js':>22} "
        f"{'M_selected':>22} {'M_labeled':>22}"
    ]
    for strategy, cycle in keys:
        group = [r for r in rows if r.strategy == strategy and r.cycle == cycle]
        cells = []
        for attr in ("mean_error", "balance_js", "mean_M_selected", "mean_M_labeled"):
            values = np.array([getattr(r, attr) for r in group], dtype=np.float64)
            cells.append(f"{values.mean():.4f} +/- {values.std():.4f}")
        lines.append(
            f"{strategy:<18} {cycle:>5} " + " ".join(f"{c:>22}" for c in cells)
        )
    return "\n".join(lines)
