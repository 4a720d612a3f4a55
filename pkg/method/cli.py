"""Command-line surface: synth, train, predict, refine, eval, plot.

Config precedence is flags > ``--config`` file > built-in defaults. Every
command writes the effective config next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from loguru import logger

from benchmarking.synthetic import SyntheticDataset, build_dataset
from config.settings import setting
from core.anchor import AnchorSet, YSampling
from core.exceptions import ConfigError, DatasetIoError, Lane3DError
from core.lane import Lane3D, Proposal
from core.schemas import EvalConfig, OnceEvalConfig, RunConfig
from engine.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from engine.data_files import (
    atomic_write_text,
    read_json,
    read_lane_collection,
    write_json,
    write_lane_collection,
    write_records_csv,
    write_scene_lanes,
)
from engine.svg_plot import write_lane_plot
from method.head.temporal import FUSION_STRATEGIES
from method.pipeline import LanePipeline, evaluate_predictions, refine_predictions
from method.pipeline.lane_pipeline import PROTOCOLS
from method.trainer import train_heads
from utils.json_utils import flatten_record, to_jsonable

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DOMAIN = 4

PREDICTIONS_NAME = "predictions.json"
CHECKPOINT_NAME = "checkpoint.a3lc"

_EVAL = EvalConfig()
_ONCE = OnceEvalConfig()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a3l",
        description="3D lane anchors on synthetic scenes: generate, train, predict, refine, evaluate, plot.",
    )
    parser.add_argument("--config", type=Path, help="YAML/JSON/TOML run config (default: config/pipeline.yaml if present)")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--jobs", type=int, default=1, help="Scene-level worker threads")
    parser.add_argument("--seed", type=int, help="Seed for synthesis and training")
    parser.add_argument("--output-dir", type=Path, help="Output directory (default: $A3L_OUTPUT_DIR/<command>)")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Build a synthetic dataset directory")
    synth.add_argument("--scenes", type=int, help="Number of sequences")
    synth.add_argument("--frames", type=int, help="Frames per sequence")
    synth.add_argument("--ego-speed", type=float, help="Ego advance per frame (m)")
    synth.add_argument("--grounds", nargs="+", choices=("flat", "uphill", "downhill", "hill"), help="Surface kinds to draw from")
    synth.add_argument("--occlusion-prob", type=float, help="Per-lane probability of an occluded span")
    synth.add_argument("--num-categories", type=int, help="Number of non-background lane categories")
    synth.add_argument("--occlude-features", action="store_true", default=None, help="Zero feature cells over occluded spans")
    synth.add_argument("--feature-noise", type=float, help="Gaussian noise std added to ground cells")

    train = sub.add_parser("train", help="Fit head(s) and write a checkpoint plus loss curve")
    train.add_argument("--dataset", type=Path, help="Dataset directory")
    train.add_argument("--split", default="train", help="Manifest split to train on")
    train.add_argument("--iterations", type=int, help="Number of regression iterations (one head each)")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float, help="Learning rate")
    train.add_argument("--share-heads", action="store_true", default=None, help="Reuse one head for every iteration")
    train.add_argument("--fusion", choices=FUSION_STRATEGIES, help="Enable temporal fusion with this strategy")

    predict = sub.add_parser("predict", help="Emit lane JSON per scene")
    predict.add_argument("--dataset", type=Path)
    predict.add_argument("--checkpoint", type=Path)
    predict.add_argument("--split", default="val", help="Manifest split to predict (use 'all' for every scene)")
    predict.add_argument("--iters", type=int, help="Regression iterations at inference")
    predict.add_argument("--temporal", action="store_true", help="Fuse features of an earlier frame")
    predict.add_argument("--fusion", choices=FUSION_STRATEGIES, help="Expected fusion strategy of the checkpoint")
    predict.add_argument("--refine", action="store_true", help="Apply equal-width refinement before writing")

    refine = sub.add_parser("refine", help="Apply the equal-width optimizer to a predictions file")
    refine.add_argument("--predictions", type=Path, required=True)
    refine.add_argument("--alpha", type=float, help="Adjustment penalty weight")

    evaluate = sub.add_parser("eval", help="Write metrics JSON and CSV")
    evaluate.add_argument("--predictions", type=Path, required=True)
    gt = evaluate.add_mutually_exclusive_group()
    gt.add_argument("--dataset", type=Path, help="Dataset directory providing ground truth and splits")
    gt.add_argument("--ground-truth", type=Path, help="Lane collection JSON used as ground truth")
    evaluate.add_argument("--split", help="Restrict dataset ground truth to this split")
    evaluate.add_argument("--protocol", choices=PROTOCOLS, default="standard")
    thresholds = evaluate.add_argument_group("thresholds", "Unset flags keep the config value")
    thresholds.add_argument("--tp-dist", type=float, help=f"Point distance limit in m (default {_EVAL.tp_dist})")
    thresholds.add_argument(
        "--tp-point-frac", type=float, help=f"Share of evaluated points within --tp-dist for a true positive (default {_EVAL.tp_point_frac})"
    )
    thresholds.add_argument(
        "--close-range", type=float, nargs=2, metavar=("LO", "HI"), help=f"Close y-range in m (default {_EVAL.close_range})"
    )
    thresholds.add_argument(
        "--far-range", type=float, nargs=2, metavar=("LO", "HI"), help=f"Far y-range in m (default {_EVAL.far_range})"
    )
    thresholds.add_argument(
        "--squared-cost", action="store_true", default=None, help="Match on sqrt(sum d^2) instead of sqrt(sum d)"
    )
    thresholds.add_argument("--tau-cd", type=float, help=f"ONCE Chamfer threshold in m (default {_ONCE.tau_cd})")
    thresholds.add_argument(
        "--iou-threshold", type=float, help=f"ONCE 2D IoU threshold (default {_ONCE.iou_threshold})"
    )

    plot = sub.add_parser("plot", help="Top-view and side-view SVG overlays")
    plot.add_argument("--predictions", type=Path, required=True)
    plot_gt = plot.add_mutually_exclusive_group()
    plot_gt.add_argument("--dataset", type=Path)
    plot_gt.add_argument("--ground-truth", type=Path)
    plot.add_argument("--scene", action="append", dest="scenes", help="Scene id to plot (repeatable)")
    plot.add_argument("--limit", type=int, default=10, help="Plot at most this many scenes when --scene is not given")
    return parser


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO", backtrace=False, diagnose=False)


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "train.seed": args.seed,
        "synth.seed": args.seed,
        "output_dir": args.output_dir,
    }
    match args.command:
        case "synth":
            overrides.update(
                {
                    "synth.scenes": args.scenes,
                    "synth.frames": args.frames,
                    "synth.ego_speed": args.ego_speed,
                    "synth.grounds": args.grounds,
                    "synth.occlusion_prob": args.occlusion_prob,
                    "synth.num_categories": args.num_categories,
                    "render.occlude_features": args.occlude_features,
                    "render.feature_noise": args.feature_noise,
                }
            )
            if args.num_categories is not None:
                overrides["render.num_classes"] = args.num_categories + 1
        case "train":
            overrides.update(
                {
                    "dataset_dir": args.dataset,
                    "train.iterations": args.iterations,
                    "train.epochs": args.epochs,
                    "train.learning_rate": args.lr,
                    "train.share_heads": args.share_heads,
                }
            )
            if args.fusion is not None:
                overrides.update({"fusion.enabled": True, "fusion.strategy": args.fusion})
        case "predict":
            overrides.update(
                {
                    "dataset_dir": args.dataset,
                    "checkpoint": args.checkpoint,
                    "inference.iterations": args.iters,
                }
            )
        case "refine":
            overrides["ewc.alpha"] = args.alpha
        case "eval":
            overrides.update(
                {
                    "dataset_dir": args.dataset,
                    "evaluation.tp_dist": args.tp_dist,
                    "evaluation.tp_point_frac": args.tp_point_frac,
                    "evaluation.close_range": args.close_range,
                    "evaluation.far_range": args.far_range,
                    "evaluation.squared_cost": args.squared_cost,
                    "once.tau_cd": args.tau_cd,
                    "once.iou_threshold": args.iou_threshold,
                }
            )
        case "plot":
            overrides["dataset_dir"] = args.dataset
    return overrides


def resolve_config(args: argparse.Namespace) -> RunConfig:
    path = args.config
    if path is None and setting.DEFAULT_RUN_CONFIG_PATH.is_file():
        path = setting.DEFAULT_RUN_CONFIG_PATH
    return RunConfig.load(path).with_overrides(_overrides(args))


def output_dir_for(cfg: RunConfig, command: str) -> Path:
    out = cfg.output_dir if cfg.output_dir is not None else setting.output_root() / command
    out.mkdir(parents=True, exist_ok=True)
    # without output_dir, so reruns into another directory are byte-identical
    atomic_write_text(out / "effective_config.yaml", cfg.model_copy(update={"output_dir": None}).to_yaml())
    return out


def _require(value: Path | None, flag: str) -> Path:
    if value is None:
        raise ConfigError(f"{flag} is required (flag or config file)")
    return value


def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    out = output_dir_for(cfg, "synth")
    ys = YSampling.from_config(cfg.anchor)
    build_dataset(out, cfg.synth, ys, cfg.render, jobs=args.jobs, show_progress=args.verbose)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    dataset = SyntheticDataset(_require(cfg.dataset_dir, "--dataset"))
    if cfg.anchor.y_samples is not None and not dataset.ys.matches(cfg.anchor.y_samples):
        raise ConfigError("anchor.y_samples differs from the dataset y-sampling")
    max_gap = cfg.fusion.max_frame_gap if cfg.fusion.enabled else 0
    scenes = dataset.training_scenes(args.split, max_gap)
    if not scenes:
        raise ConfigError(f"Split '{args.split}' has no scenes in {dataset.root}")
    out = output_dir_for(cfg, "train")
    grid = AnchorSet.from_grid(cfg.anchor, dataset.ys)
    head_cfg = cfg.head
    categories = dataset.manifest.get("synth", {}).get("num_categories")
    if categories is not None and head_cfg.num_classes != categories + 1:
        logger.info("Dataset has {} lane categories, head uses {} classes", categories, categories + 1)
        head_cfg = head_cfg.model_copy(update={"num_classes": categories + 1})
    logger.info("Training on {} scenes with {} anchors", len(scenes), len(grid))
    result = train_heads(scenes, grid, head_cfg, cfg.train, cfg.fusion, show_progress=args.verbose)

    checkpoint = Checkpoint(
        heads=result.heads,
        ys=dataset.ys,
        channels=tuple(dataset.manifest.get("channels", cfg.render.channels)),
        anchor=cfg.anchor,
        head=head_cfg,
        train=cfg.train,
        fusion=cfg.fusion,
        seed=cfg.train.seed,
    )
    save_checkpoint(out / CHECKPOINT_NAME, checkpoint)
    write_records_csv(out / "loss_curve.csv", result.loss_curve)
    summary = {
        "scenes": len(scenes),
        "iterations": cfg.train.iterations,
        "epoch_losses": {str(i + 1): result.epoch_losses(i + 1) for i in range(cfg.train.iterations)},
    }
    write_json(out / "train_summary.json", to_jsonable(summary))
    first = result.epoch_losses(1)
    if first:
        logger.info("Iteration 1 epoch loss {:.4f} -> {:.4f}", first[0], first[-1])
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, cfg: RunConfig) -> int:
    dataset = SyntheticDataset(_require(cfg.dataset_dir, "--dataset"))
    checkpoint = load_checkpoint(_require(cfg.checkpoint, "--checkpoint"))
    if args.fusion is not None:
        strategies = {h.fusion_strategy for h in checkpoint.heads}
        if strategies != {args.fusion}:
            raise ConfigError(f"--fusion {args.fusion} does not match the checkpoint heads {sorted(map(str, strategies))}")
    pipeline = LanePipeline(checkpoint, cfg.inference, cfg.ewc)
    split = None if args.split == "all" else args.split
    scene_ids = dataset.scene_ids(split)
    if not scene_ids:
        raise ConfigError(f"Split '{args.split}' has no scenes in {dataset.root}")
    out = output_dir_for(cfg, "predict")
    predictions = pipeline.predict_dataset(
        dataset,
        scene_ids,
        iterations=cfg.inference.iterations,
        temporal=args.temporal,
        max_frame_gap=checkpoint.fusion.max_frame_gap,
        refine=args.refine,
        jobs=args.jobs,
        show_progress=args.verbose,
    )
    for scene_id, proposals in predictions.items():
        write_scene_lanes(out / "scenes" / f"{scene_id}.json", dataset.ys, proposals)
    extra = {"split": args.split, "iterations": cfg.inference.iterations, "temporal": args.temporal, "refined": args.refine}
    write_lane_collection(out / PREDICTIONS_NAME, dataset.ys, predictions, extra)
    logger.info("Predicted {} scenes into {}", len(predictions), out)
    return EXIT_OK


def cmd_refine(args: argparse.Namespace, cfg: RunConfig) -> int:
    ys, predictions = read_lane_collection(args.predictions, as_proposals=True)
    out = output_dir_for(cfg, "refine")
    refined = refine_predictions(predictions, cfg.ewc, jobs=args.jobs)
    extra = {key: value for key, value in read_json(args.predictions).items() if key not in ("y_samples", "scenes")}
    extra["refined"] = True
    write_lane_collection(out / PREDICTIONS_NAME, ys, refined, extra)
    logger.info("Refined {} scenes into {}", len(refined), out)
    return EXIT_OK


def _ground_truth(args: argparse.Namespace, cfg: RunConfig, split: str | None) -> tuple[YSampling, dict[str, list[Lane3D]]]:
    if args.ground_truth is not None:
        return read_lane_collection(args.ground_truth)
    dataset = SyntheticDataset(_require(cfg.dataset_dir, "--dataset or --ground-truth"))
    ids = dataset.scene_ids(split)
    return dataset.ys, {sid: list(dataset.load_scene(sid).gts) for sid in ids}


def _split_of(predictions_path: Path, requested: str | None) -> str | None:
    split = requested or read_json(predictions_path).get("split")
    return None if split in (None, "all") else str(split)


def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    pred_ys, predictions = read_lane_collection(args.predictions, as_proposals=True)
    gt_ys, ground_truth = _ground_truth(args, cfg, _split_of(args.predictions, args.split))
    if pred_ys != gt_ys:
        raise ConfigError("Predictions and ground truth use different y-samplings")
    out = output_dir_for(cfg, "eval")
    reports = evaluate_predictions(predictions, ground_truth, args.protocol, cfg.evaluation, cfg.once)
    payload = {name: report.model_dump(mode="json") for name, report in reports.items()}
    write_json(out / "metrics.json", payload)
    write_records_csv(out / "metrics.csv", [flatten_record(report) for report in payload.values()])
    for name, report in reports.items():
        logger.info("{} protocol: F1 {:.4f} (precision {:.4f}, recall {:.4f})", name, report.f1, report.precision, report.recall)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, cfg: RunConfig) -> int:
    _, predictions = read_lane_collection(args.predictions, as_proposals=True)
    _, ground_truth = _ground_truth(args, cfg, None)
    out = output_dir_for(cfg, "plot")
    scene_ids = args.scenes or sorted(predictions)[: args.limit]
    for scene_id in scene_ids:
        if scene_id not in predictions and scene_id not in ground_truth:
            raise DatasetIoError(f"Scene '{scene_id}' is in neither predictions nor ground truth")
        preds: list[Proposal] = predictions.get(scene_id, [])
        write_lane_plot(out / f"{scene_id}.svg", preds, ground_truth.get(scene_id, []), title=scene_id)
    logger.info("Wrote {} plots to {}", len(scene_ids), out)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "plot": cmd_plot,
}


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def dispatch(argv: Sequence[str]) -> int:
    """Run one subcommand; returns the process exit code."""
    args = build_parser().parse_args(list(argv))
    configure_logging(args.verbose)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except DatasetIoError as exc:
        return _fail(EXIT_IO, exc)
    except Lane3DError as exc:
        return _fail(EXIT_DOMAIN, exc)
    except Exception as exc:
        logger.exception("Unexpected failure in '{}'", args.command)
        return _fail(EXIT_UNEXPECTED, exc)


def main(argv: Sequence[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
