"""Head checkpoints.

File layout: b"A3LC", little-endian uint32 header length, UTF-8 JSON header,
then per head one A3LF block per tensor in header order, followed by the
Adam first and second moments in the same order when "moments" is set.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from config.constants import CHECKPOINT_SCHEMA_VERSION
from core.anchor import YSampling
from core.exceptions import DatasetIoError
from core.schemas import AnchorGridConfig, FusionConfig, HeadConfig, TrainConfig
from method.head.model import HeadParams

from .data_files import atomic_write_bytes, encode_block, read_block

CHECKPOINT_MAGIC = b"A3LC"
_LENGTH = struct.Struct("<I")


@dataclass
class Checkpoint:
    heads: list[HeadParams]
    ys: YSampling
    channels: tuple[str, ...]
    anchor: AnchorGridConfig = field(default_factory=AnchorGridConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    seed: int = 0

    @property
    def iterations(self) -> int:
        return len(self.heads)

    def heads_for(self, iterations: int) -> list[HeadParams]:
        """The first ``iterations`` heads; the last head is reused past the trained count."""
        if iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {iterations}")
        if iterations > len(self.heads):
            logger.warning(
                "Checkpoint holds {} heads, reusing the last one for iterations {}..{}",
                len(self.heads),
                len(self.heads) + 1,
                iterations,
            )
        return [self.heads[min(i, len(self.heads) - 1)] for i in range(iterations)]


def _header(ckpt: Checkpoint) -> dict[str, Any]:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "seed": ckpt.seed,
        "iterations": ckpt.iterations,
        "y_samples": ckpt.ys.to_list(),
        "channels": list(ckpt.channels),
        "config": {
            "anchor": ckpt.anchor.model_dump(mode="json", by_alias=True),
            "head": ckpt.head.model_dump(mode="json"),
            "train": ckpt.train.model_dump(mode="json"),
            "fusion": ckpt.fusion.model_dump(mode="json"),
        },
        "heads": [
            {
                "n_points": p.n_points,
                "channels": p.channels,
                "hidden": p.hidden,
                "num_classes": p.num_classes,
                "fusion_strategy": p.fusion_strategy,
                "step": p.step,
                "moments": True,
                "tensors": [{"name": name, "shape": list(p.tensors[name].shape)} for name in p.names],
            }
            for p in ckpt.heads
        ],
    }


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    header = json.dumps(_header(ckpt), indent=None, sort_keys=False).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(_LENGTH.pack(len(header)))
    buffer.write(header)
    for params in ckpt.heads:
        for name in params.names:
            buffer.write(encode_block(params.tensors[name]))
        for moments in (params.m, params.v):
            for name in params.names:
                buffer.write(encode_block(moments[name]))
    path = atomic_write_bytes(path, buffer.getvalue())
    logger.info("Checkpoint with {} head(s) written to {}", ckpt.iterations, path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Raises DatasetIoError for missing, truncated or inconsistent files."""
    path = Path(path)
    if not path.is_file():
        raise DatasetIoError(f"Checkpoint not found: {path}")
    with path.open("rb") as handle:
        if handle.read(4) != CHECKPOINT_MAGIC:
            raise DatasetIoError(f"{path} is not a checkpoint (bad magic)")
        raw_length = handle.read(_LENGTH.size)
        if len(raw_length) != _LENGTH.size:
            raise DatasetIoError(f"Truncated checkpoint header in {path}")
        (length,) = _LENGTH.unpack(raw_length)
        try:
            header = json.loads(handle.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatasetIoError(f"Malformed checkpoint header in {path}: {exc}") from exc
        if header.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise DatasetIoError(f"Unsupported checkpoint schema '{header.get('schema_version')}' in {path}")

        heads: list[HeadParams] = []
        try:
            for spec in header["heads"]:
                shapes = {item["name"]: tuple(int(s) for s in item["shape"]) for item in spec["tensors"]}
                tensors = {name: read_block(handle, str(path)).reshape(shape) for name, shape in shapes.items()}
                m: dict[str, np.ndarray] = {}
                v: dict[str, np.ndarray] = {}
                if spec.get("moments", False):
                    m = {name: read_block(handle, str(path)).reshape(shape) for name, shape in shapes.items()}
                    v = {name: read_block(handle, str(path)).reshape(shape) for name, shape in shapes.items()}
                params = HeadParams(
                    int(spec["n_points"]),
                    int(spec["channels"]),
                    int(spec["hidden"]),
                    int(spec["num_classes"]),
                    tensors,
                    fusion_strategy=spec.get("fusion_strategy"),
                    m=m,
                    v=v,
                    step=int(spec.get("step", 0)),
                )
                heads.append(params)
            config = header["config"]
            return Checkpoint(
                heads=heads,
                ys=YSampling(np.asarray(header["y_samples"], dtype=np.float64)),
                channels=tuple(header["channels"]),
                anchor=AnchorGridConfig.model_validate(config["anchor"]),
                head=HeadConfig.model_validate(config["head"]),
                train=TrainConfig.model_validate(config["train"]),
                fusion=FusionConfig.model_validate(config["fusion"]),
                seed=int(header.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetIoError(f"Inconsistent checkpoint {path}: {exc}") from exc
