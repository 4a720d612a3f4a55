#!/usr/bin/env python3
"""End-to-end trend checks on synthetic data.

Runs the accuracy, height, iteration, temporal and refinement experiments
and prints a JSON verdict. Takes minutes, not seconds.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
from dotenv import load_dotenv
from loguru import logger

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

load_dotenv(PROJECT_ROOT / ".env")

from benchmarking.synthetic import SyntheticDataset, build_dataset  # noqa: E402
from core.anchor import AnchorSet, YSampling  # noqa: E402
from core.lane import Proposal  # noqa: E402
from core.schemas import RenderConfig, RunConfig, SynthConfig  # noqa: E402
from engine.checkpoint import Checkpoint  # noqa: E402
from method.eval import compute_dataset_metrics  # noqa: E402
from method.pipeline import LanePipeline, refine_predictions  # noqa: E402
from method.schemas import MetricsReport  # noqa: E402
from method.trainer import train_heads  # noqa: E402
from utils.json_utils import to_jsonable  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Synthetic benchmark with a JSON verdict.")
    parser.add_argument("--output-dir", type=Path, default=PROJECT_ROOT / "output" / "benchmark")
    parser.add_argument("--config", type=Path, default=PROJECT_ROOT / "config" / "pipeline.yaml")
    parser.add_argument("--scenes", type=int, default=200)
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=7)
    return parser.parse_args()


def make_dataset(root: Path, synth: SynthConfig, render: RenderConfig, cfg: RunConfig, jobs: int) -> SyntheticDataset:
    if not (root / "manifest.json").is_file():
        build_dataset(root, synth, YSampling.from_config(cfg.anchor), render, jobs=jobs)
    return SyntheticDataset(root)


def train_and_evaluate(
    dataset: SyntheticDataset,
    cfg: RunConfig,
    *,
    iterations: int = 1,
    temporal: bool = False,
    jobs: int = 1,
) -> tuple[MetricsReport, dict[str, list[Proposal]]]:
    train_cfg = cfg.train.model_copy(update={"iterations": iterations})
    fusion = cfg.fusion.model_copy(update={"enabled": temporal})
    max_gap = fusion.max_frame_gap if temporal else 0
    scenes = dataset.training_scenes("train", max_gap)
    grid = AnchorSet.from_grid(cfg.anchor, dataset.ys)
    result = train_heads(scenes, grid, cfg.head, train_cfg, fusion)
    checkpoint = Checkpoint(
        heads=result.heads,
        ys=dataset.ys,
        channels=tuple(dataset.manifest["channels"]),
        anchor=cfg.anchor,
        head=cfg.head,
        train=train_cfg,
        fusion=fusion,
        seed=train_cfg.seed,
    )
    pipeline = LanePipeline(checkpoint, cfg.inference, cfg.ewc)
    val_ids = dataset.scene_ids("val")
    predictions = pipeline.predict_dataset(
        dataset, val_ids, iterations=iterations, temporal=temporal, max_frame_gap=fusion.max_frame_gap, jobs=jobs
    )
    report = compute_dataset_metrics(
        {sid: (predictions[sid], dataset.load_scene(sid).gts) for sid in val_ids}, cfg.evaluation
    )
    return report, predictions


def noisy_ground_truth(dataset: SyntheticDataset, seed: int) -> dict[str, list[Proposal]]:
    """Ground truth with a shared lateral drift plus noise, both growing with distance."""
    rng = np.random.default_rng(seed)
    noisy: dict[str, list[Proposal]] = {}
    for sid in dataset.scene_ids("val"):
        lanes = []
        for lane in dataset.load_scene(sid).gts:
            ys = lane.ys.ys
            drift = rng.normal(0.0, 0.004) * ys
            noise = rng.normal(0.0, 0.003, size=ys.shape) * ys
            lanes.append(Proposal(replace(lane, xs=lane.xs + drift + noise), np.array([0.1, 0.9])))
        noisy[sid] = lanes
    return noisy


def main() -> int:
    args = parse_args()
    logger.remove()
    logger.add(sys.stderr, level="INFO")
    cfg = RunConfig.load(args.config).with_overrides(
        {"train.epochs": args.epochs, "train.learning_rate": args.learning_rate, "train.seed": args.seed}
    )
    root = args.output_dir
    started = time.monotonic()
    verdict: dict[str, Any] = {}

    base = SynthConfig(scenes=args.scenes, seed=args.seed, curvature_max=4e-4, grounds=("flat",))
    flat = make_dataset(root / "flat_curved", base, cfg.render, cfg, args.jobs)
    one_iter, _ = train_and_evaluate(flat, cfg, iterations=1, jobs=args.jobs)
    verdict["accuracy"] = {"f1": one_iter.f1, "pass": one_iter.f1 >= 0.90}
    verdict["train_minutes"] = (time.monotonic() - started) / 60.0

    slopes = base.model_copy(update={"grounds": ("uphill", "downhill"), "grade_max": 0.08})
    sloped = make_dataset(root / "up_down", slopes, cfg.render, cfg, args.jobs)
    sloped_report, _ = train_and_evaluate(sloped, cfg, iterations=1, jobs=args.jobs)
    verdict["height"] = {"z_err_close": sloped_report.z_err_close, "pass": sloped_report.z_err_close <= 0.10}

    two_iter, _ = train_and_evaluate(flat, cfg, iterations=2, jobs=args.jobs)
    verdict["iterations"] = {
        "f1": [one_iter.f1, two_iter.f1],
        "x_err_far": [one_iter.x_err_far, two_iter.x_err_far],
        "pass": two_iter.f1 >= one_iter.f1 - 0.02 and two_iter.x_err_far <= one_iter.x_err_far + 0.01,
    }

    occluded_synth = base.model_copy(
        update={"scenes": max(2, args.scenes // 3), "frames": 3, "occlusion_prob": 0.5, "ego_speed": 5.0}
    )
    occluded_render = cfg.render.model_copy(update={"occlude_features": True})
    occluded = make_dataset(root / "occluded", occluded_synth, occluded_render, cfg, args.jobs)
    single, _ = train_and_evaluate(occluded, cfg, iterations=1, jobs=args.jobs)
    fused, _ = train_and_evaluate(occluded, cfg, iterations=1, temporal=True, jobs=args.jobs)
    verdict["temporal"] = {"f1": [single.f1, fused.f1], "pass": fused.f1 >= single.f1 - 0.01}

    noisy = noisy_ground_truth(flat, args.seed)
    refined = refine_predictions(noisy, cfg.ewc, jobs=args.jobs)
    truth = {sid: flat.load_scene(sid).gts for sid in noisy}
    before = compute_dataset_metrics({sid: (noisy[sid], truth[sid]) for sid in noisy}, cfg.evaluation)
    after = compute_dataset_metrics({sid: (refined[sid], truth[sid]) for sid in noisy}, cfg.evaluation)
    verdict["refinement"] = {
        "x_err_far": [before.x_err_far, after.x_err_far],
        "x_err_close": [before.x_err_close, after.x_err_close],
        "pass": after.x_err_far < before.x_err_far and abs(after.x_err_close - before.x_err_close) <= 0.01,
    }

    verdict["all_pass"] = all(v["pass"] for v in verdict.values() if isinstance(v, dict))
    print(json.dumps(to_jsonable(verdict), indent=2))
    return 0 if verdict["all_pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
