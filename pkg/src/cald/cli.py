"""Command-line interface: score, select, simulate.

Exit codes: 0 success, 1 usage or configuration problem, 2 malformed or
inconsistent input data. All defaults reproduce the reference selection
setup (beta 1.3, 20% expansion, the F/C/D/R augmentations).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .dataio import (
    DatasetManifest,
    parse_labels,
    parse_predictions,
    write_score_report,
    write_selection,
)
from .errors import (
    CaldError,
    ConfigError,
    DataFormatError,
    EmptyPoolError,
    IncompleteInputError,
    InsufficientCandidatesError,
)
from .pipeline import PoolState, SelectionConfig, plan_selection, score_images
from .simulator import (
    ExperimentConfig,
    parse_strategy,
    run_experiment,
    summarize_metrics,
    write_metrics_csv,
)

DEFAULT_AUG_TAGS = "FCDR"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this surface reserves 2 for data errors."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="cald", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="JSON file overriding selection defaults")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for per-image scoring")

    score = sub.add_parser("score", help="rank images by the consistency metric, no selection")
    score.add_argument("--manifest", type=Path, required=True, help="dataset manifest JSON")
    score.add_argument("--predictions", type=Path, required=True, help="predictions JSONL")
    score.add_argument("--beta", type=float, default=None, help="base point in (0, 2], default 1.3")
    score.add_argument("--variant", choices=("min", "mean"), default=None, help="per-image reduction over predictions")
    score.add_argument("--out", type=Path, required=True, help="output report JSONL")
    common(score)

    select = sub.add_parser("select", help="two-stage selection against a labeled pool")
    select.add_argument("--manifest", type=Path, required=True)
    select.add_argument("--predictions", type=Path, required=True)
    select.add_argument("--labels", type=Path, required=True, help="labeled-pool labels JSONL")
    select.add_argument("--budget", type=int, required=True, help="images to select")
    select.add_argument("--expansion", type=float, default=None, help="stage-1 over-selection ratio, default 0.2")
    select.add_argument("--beta", type=float, default=None)
    select.add_argument("--variant", choices=("min", "mean"), default=None)
    select.add_argument("--out", type=Path, required=True, help="selection report JSONL")
    common(select)

    simulate = sub.add_parser("simulate", help="run the synthetic-world selection loop")
    simulate.add_argument(
        "--strategy",
        default="cald",
        help="cald | random | cald_mean_variant | cald_beta:<beta>",
    )
    simulate.add_argument("--cycles", type=int, default=2)
    simulate.add_argument("--budget", type=int, default=100)
    simulate.add_argument(
        "--seeds",
        default=None,
        help="comma-separated seed list; defaults to CALD_SEED or 0",
    )
    simulate.add_argument("--out-csv", type=Path, required=True, help="metrics table CSV")
    simulate.add_argument("--num-images", type=int, default=2000)
    simulate.add_argument("--num-classes", type=int, default=10)
    simulate.add_argument("--imbalance", type=float, default=1.0)
    simulate.add_argument("--initial-labeled", type=int, default=100)
    simulate.add_argument("--expansion", type=float, default=None)
    simulate.add_argument("--beta", type=float, default=None)
    common(simulate)
    return parser


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    allowed = {
        "beta",
        "expansion_ratio",
        "budget_per_cycle",
        "cycles",
        "augmentations",
        "retention_threshold",
        "metric_variant",
        "empty_image_policy",
        "pool_count_mode",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    return data


def _augmentation_specs(manifest: DatasetManifest, file_cfg: dict):
    tags = file_cfg.get("augmentations", list(DEFAULT_AUG_TAGS))
    if isinstance(tags, str):
        tags = list(tags)
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise ConfigError("augmentations must be a tag string or list of tags")
    missing = [t for t in tags if t not in manifest.augmentations]
    if missing:
        raise ConfigError(
            f"augmentation tag(s) {missing} not declared in the manifest "
            f"(declared: {sorted(manifest.augmentations)})"
        )
    return tuple(manifest.augmentation_specs(tags))


def _selection_config(args, manifest: DatasetManifest, file_cfg: dict, budget: int) -> SelectionConfig:
    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    return SelectionConfig(
        budget_per_cycle=budget,
        beta=pick(getattr(args, "beta", None), "beta", 1.3),
        expansion_ratio=pick(getattr(args, "expansion", None), "expansion_ratio", 0.20),
        cycles=int(file_cfg.get("cycles", getattr(args, "cycles", 1) or 1)),
        augmentations=_augmentation_specs(manifest, file_cfg),
        retention_threshold=float(file_cfg.get("retention_threshold", 0.1)),
        metric_variant=pick(getattr(args, "variant", None), "metric_variant", "min"),
        empty_image_policy=str(file_cfg.get("empty_image_policy", "beta")),
        pool_count_mode=str(file_cfg.get("pool_count_mode", "raw_counts")),
    )


def _read_lines(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.readlines()
    except FileNotFoundError:
        raise DataFormatError(f"input file not found: {path}") from None


def _cmd_score(args) -> int:
    file_cfg = _load_config_file(args.config)
    manifest = DatasetManifest.load(args.manifest)
    config = _selection_config(args, manifest, file_cfg, budget=0)
    predictions = parse_predictions(_read_lines(args.predictions), manifest)
    scores = score_images(predictions, list(predictions), config, jobs=args.jobs)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_score_report(scores.values(), fh)
    print(f"scored {len(scores)} image(s) -> {args.out}")
    return 0


def _cmd_select(args) -> int:
    file_cfg = _load_config_file(args.config)
    manifest = DatasetManifest.load(args.manifest)
    config = _selection_config(args, manifest, file_cfg, budget=args.budget)
    predictions = parse_predictions(_read_lines(args.predictions), manifest)
    labels = parse_labels(_read_lines(args.labels), manifest)
    unlabeled = {i for i in predictions if i not in labels}
    if args.budget > len(unlabeled):
        raise InsufficientCandidatesError(
            f"budget {args.budget} exceeds the {len(unlabeled)} unlabeled image(s)"
        )
    pool = PoolState(labeled=dict(labels), unlabeled=unlabeled)
    record, _ = plan_selection(
        pool, predictions, config, manifest.num_classes, jobs=args.jobs
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        write_selection([record], fh)
    print(
        f"cycle {record.cycle}: {len(record.initial)} initial -> "
        f"{len(record.final)} final -> {args.out}"
    )
    return 0


def _parse_seeds(raw: str | None) -> list[int]:
    if raw is None:
        raw = os.environ.get("CALD_SEED", "0")
    try:
        seeds = [int(part) for part in str(raw).split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(f"seeds must be comma-separated integers, got {raw!r}") from None
    if not seeds:
        raise ConfigError("at least one seed is required")
    return seeds


def _cmd_simulate(args) -> int:
    parse_strategy(args.strategy)
    file_cfg = _load_config_file(args.config)
    seeds = _parse_seeds(args.seeds)
    selection = SelectionConfig(
        budget_per_cycle=args.budget,
        beta=args.beta if args.beta is not None else float(file_cfg.get("beta", 1.3)),
        expansion_ratio=(
            args.expansion
            if args.expansion is not None
            else float(file_cfg.get("expansion_ratio", 0.20))
        ),
        cycles=args.cycles,
        retention_threshold=float(file_cfg.get("retention_threshold", 0.1)),
        metric_variant=str(file_cfg.get("metric_variant", "min")),
        empty_image_policy=str(file_cfg.get("empty_image_policy", "beta")),
        pool_count_mode=str(file_cfg.get("pool_count_mode", "raw_counts")),
    )
    config = ExperimentConfig(
        num_images=args.num_images,
        num_classes=args.num_classes,
        imbalance_exponent=args.imbalance,
        initial_labeled=args.initial_labeled,
        selection=selection,
    )
    total = len(seeds)
    rows = []
    for i, seed in enumerate(seeds, start=1):
        rows.extend(run_experiment(args.strategy, config, [seed], jobs=args.jobs))
        print(f"[{i}/{total}] seed {seed} done", file=sys.stderr)
    with open(args.out_csv, "w", encoding="utf-8") as fh:
        write_metrics_csv(rows, fh)
    print(summarize_metrics(rows))
    print(f"metrics -> {args.out_csv}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        if args.command == "score":
            return _cmd_score(args)
        if args.command == "select":
            return _cmd_select(args)
        return _cmd_simulate(args)
    except (DataFormatError, IncompleteInputError, EmptyPoolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, InsufficientCandidatesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CaldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
