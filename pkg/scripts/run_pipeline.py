#!/usr/bin/env python3
"""synth -> train -> predict -> eval -> plot in one go, through the CLI commands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

load_dotenv(PROJECT_ROOT / ".env")

from method.cli import dispatch  # noqa: E402


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run the whole lane pipeline on a fresh synthetic dataset.")
    parser.add_argument("--output-dir", type=Path, default=PROJECT_ROOT / "output" / "pipeline")
    parser.add_argument("--config", type=Path)
    parser.add_argument("--scenes", type=int, default=50)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--iters", type=int, default=1)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--protocol", choices=("standard", "once", "both"), default="both")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    root = args.output_dir
    common = ["--jobs", str(args.jobs), "--seed", str(args.seed)]
    if args.config is not None:
        common += ["--config", str(args.config)]
    train_flags = ["--iterations", str(args.iters)]
    if args.epochs is not None:
        train_flags += ["--epochs", str(args.epochs)]

    steps = [
        [*common, "--output-dir", str(root / "dataset"), "synth", "--scenes", str(args.scenes)],
        [*common, "--output-dir", str(root / "train"), "train", "--dataset", str(root / "dataset"), *train_flags],
        [
            *common,
            "--output-dir",
            str(root / "predict"),
            "predict",
            "--dataset",
            str(root / "dataset"),
            "--checkpoint",
            str(root / "train" / "checkpoint.a3lc"),
            "--iters",
            str(args.iters),
        ],
        [
            *common,
            "--output-dir",
            str(root / "eval"),
            "eval",
            "--predictions",
            str(root / "predict" / "predictions.json"),
            "--dataset",
            str(root / "dataset"),
            "--protocol",
            args.protocol,
        ],
        [
            *common,
            "--output-dir",
            str(root / "plot"),
            "plot",
            "--predictions",
            str(root / "predict" / "predictions.json"),
            "--dataset",
            str(root / "dataset"),
        ],
    ]
    for argv in steps:
        code = dispatch(argv)
        if code != 0:
            return code
    print((root / "eval" / "metrics.json").read_text(encoding="utf-8"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
