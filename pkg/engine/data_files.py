"""On-disk formats.

- A3LF feature blocks: b"A3LF", three little-endian uint32 (h_f, w_f, c),
  then h_f * w_f * c little-endian float32, row-major.
- Lane collections: {"y_samples": [...], "scenes": [{"scene_id", "lanes"}]}.
- Scene directories: camera.json, lanes.json, features.a3lf, pose.json.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np
import pandas as pd

from core.anchor import YSampling
from core.exceptions import DatasetIoError
from core.geometry import CameraRig, RigidTransform
from core.lane import Lane3D, Proposal
from core.sampling import FeatureMap

A3LF_MAGIC = b"A3LF"
_A3LF_HEADER = struct.Struct("<III")


def atomic_write_bytes(path: str | Path, payload: bytes) -> Path:
    """Write via a temp file in the same directory, then os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, ensure_ascii=False) + "\n")


def read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DatasetIoError(f"File not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetIoError(f"Malformed JSON in {path}: {exc}") from exc


def encode_block(array: np.ndarray) -> bytes:
    """One A3LF block; 1-D and 2-D arrays are stored as (rows, cols, 1)."""
    array = np.asarray(array)
    if array.ndim == 1:
        shape = (1, array.shape[0], 1)
    elif array.ndim == 2:
        shape = (array.shape[0], array.shape[1], 1)
    elif array.ndim == 3:
        shape = array.shape
    else:
        raise ValueError(f"A3LF blocks hold at most 3 dimensions, got {array.shape}")
    body = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return A3LF_MAGIC + _A3LF_HEADER.pack(*shape) + body


def read_block(handle: BinaryIO, source: str = "<stream>") -> np.ndarray:
    """Read one A3LF block as an (h_f, w_f, c) float64 array."""
    magic = handle.read(4)
    if magic != A3LF_MAGIC:
        raise DatasetIoError(f"Bad A3LF magic {magic!r} in {source}")
    header = handle.read(_A3LF_HEADER.size)
    if len(header) != _A3LF_HEADER.size:
        raise DatasetIoError(f"Truncated A3LF header in {source}")
    h_f, w_f, c = _A3LF_HEADER.unpack(header)
    count = h_f * w_f * c
    body = handle.read(4 * count)
    if len(body) != 4 * count:
        raise DatasetIoError(f"Truncated A3LF body in {source}: expected {count} floats")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(h_f, w_f, c)


def write_feature_map(path: str | Path, fm: FeatureMap) -> Path:
    return atomic_write_bytes(path, encode_block(fm.data))


def read_feature_map(path: str | Path) -> FeatureMap:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            return FeatureMap(read_block(handle, str(path)))
    except FileNotFoundError as exc:
        raise DatasetIoError(f"Feature map not found: {path}") from exc


def write_camera(path: str | Path, rig: CameraRig) -> Path:
    return write_json(path, rig.to_json())


def read_camera(path: str | Path) -> CameraRig:
    payload = read_json(path)
    try:
        return CameraRig.from_json(payload)
    except (KeyError, ValueError) as exc:
        raise DatasetIoError(f"Invalid camera file {path}: {exc}") from exc


def write_pose(path: str | Path, pose_to_prev: RigidTransform | None, prev_scene: str | None) -> Path:
    payload = {"T": pose_to_prev.to_json()["T"] if pose_to_prev is not None else None, "prev": prev_scene}
    return write_json(path, payload)


def read_pose(path: str | Path) -> tuple[RigidTransform | None, str | None]:
    payload = read_json(path)
    if payload.get("T") is None:
        return None, payload.get("prev")
    try:
        return RigidTransform.from_json(payload), payload.get("prev")
    except ValueError as exc:
        raise DatasetIoError(f"Invalid pose file {path}: {exc}") from exc


def lanes_to_json(lanes: Sequence[Lane3D | Proposal]) -> list[dict[str, Any]]:
    return [lane.to_json() for lane in lanes]


def write_scene_lanes(path: str | Path, ys: YSampling, lanes: Sequence[Lane3D | Proposal]) -> Path:
    return write_json(path, {"y_samples": ys.to_list(), "lanes": lanes_to_json(lanes)})


def read_scene_lanes(path: str | Path) -> tuple[YSampling, list[Lane3D]]:
    payload = read_json(path)
    try:
        ys = YSampling(np.asarray(payload["y_samples"], dtype=np.float64))
        return ys, [Lane3D.from_json(item, ys) for item in payload["lanes"]]
    except (KeyError, ValueError) as exc:
        raise DatasetIoError(f"Invalid lane file {path}: {exc}") from exc


def write_lane_collection(
    path: str | Path,
    ys: YSampling,
    scenes: Mapping[str, Sequence[Lane3D | Proposal]],
    extra: Mapping[str, Any] | None = None,
) -> Path:
    """Scenes are written in sorted id order so reruns are byte-identical."""
    payload: dict[str, Any] = dict(extra or {})
    payload["y_samples"] = ys.to_list()
    payload["scenes"] = [
        {"scene_id": scene_id, "lanes": lanes_to_json(scenes[scene_id])} for scene_id in sorted(scenes)
    ]
    return write_json(path, payload)


def read_lane_collection(path: str | Path, *, as_proposals: bool = False) -> tuple[YSampling, dict[str, list[Any]]]:
    """Load a collection; with as_proposals every lane becomes a Proposal."""
    payload = read_json(path)
    try:
        ys = YSampling(np.asarray(payload["y_samples"], dtype=np.float64))
        decode = Proposal.from_json if as_proposals else Lane3D.from_json
        scenes = {
            str(item["scene_id"]): [decode(lane, ys) for lane in item["lanes"]] for item in payload["scenes"]
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetIoError(f"Invalid lane collection {path}: {exc}") from exc
    return ys, scenes


def write_records_csv(path: str | Path, records: Sequence[Mapping[str, Any]]) -> Path:
    """Flat records to CSV through pandas, written atomically."""
    df = pd.DataFrame.from_records(list(records))
    return atomic_write_text(path, df.to_csv(index=False, lineterminator="\n"))


def read_records_csv(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DatasetIoError(f"CSV not found: {path}")
    return pd.read_csv(path)
