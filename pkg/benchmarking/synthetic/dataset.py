"""Build and read synthetic dataset directories.

Layout::

    <root>/manifest.json
    <root>/ground_truth.json
    <root>/scene_0000/{camera.json, lanes.json, features.a3lf, pose.json}
"""

from __future__ import annotations

from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger
from tqdm import tqdm

from config.constants import DATASET_SCHEMA_VERSION
from core.anchor import YSampling
from core.exceptions import DatasetIoError
from core.geometry import CameraRig, RigidTransform, compose
from core.lane import Lane3D
from core.sampling import FeatureMap
from core.schemas import GroundSpec, RenderConfig, SceneSpec, SynthConfig
from engine.data_files import (
    read_camera,
    read_feature_map,
    read_json,
    read_pose,
    read_scene_lanes,
    write_camera,
    write_feature_map,
    write_json,
    write_lane_collection,
    write_pose,
    write_scene_lanes,
)
from method.head.inference import PreviousFrame
from method.trainer import TrainingScene

from .scene import Scene
from .sequence import generate_sequence

MANIFEST_NAME = "manifest.json"
GROUND_TRUTH_NAME = "ground_truth.json"


def scene_dir_name(index: int) -> str:
    return f"scene_{index:04d}"


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def sample_spec(rng: np.random.Generator, cfg: SynthConfig) -> SceneSpec:
    """Draw one SceneSpec from the configured distribution."""
    lo, hi = cfg.num_lanes_range
    num_lanes = int(rng.integers(lo, hi + 1))
    kind = str(cfg.grounds[int(rng.integers(len(cfg.grounds)))])
    match kind:
        case "uphill" | "downhill":
            ground = GroundSpec(kind=kind, grade=_uniform(rng, (0.0, cfg.grade_max)))
        case "hill":
            ground = GroundSpec(
                kind="hill",
                amplitude=_uniform(rng, (0.0, cfg.hill_amplitude_max)),
                wavelength=cfg.hill_wavelength,
            )
        case _:
            ground = GroundSpec()
    spans = []
    for _ in range(num_lanes):
        if cfg.occlusion_prob > 0 and rng.random() < cfg.occlusion_prob:
            start = _uniform(rng, (10.0, 60.0))
            spans.append(((start, start + _uniform(rng, (5.0, 20.0))),))
        else:
            spans.append(())
    return SceneSpec(
        num_lanes=num_lanes,
        lane_spacing=_uniform(rng, cfg.lane_spacing_range),
        curvature=_uniform(rng, (-cfg.curvature_max, cfg.curvature_max)),
        ground=ground,
        camera_height=_uniform(rng, cfg.camera_height_range),
        camera_pitch=_uniform(rng, cfg.camera_pitch_range),
        categories=tuple(int(c) for c in rng.integers(1, cfg.num_categories + 1, size=num_lanes)),
        occlusion_spans=tuple(spans) if any(spans) else None,
    )


def _write_scene(scene_dir: Path, scene: Scene, ys: YSampling, prev_id: str | None) -> None:
    write_camera(scene_dir / "camera.json", scene.rig)
    write_scene_lanes(scene_dir / "lanes.json", ys, scene.gt)
    write_feature_map(scene_dir / "features.a3lf", scene.feature_map)
    write_pose(scene_dir / "pose.json", scene.pose_to_prev, prev_id)


def build_dataset(
    root: str | Path,
    synth: SynthConfig,
    ys: YSampling,
    render_cfg: RenderConfig,
    *,
    jobs: int = 1,
    show_progress: bool = False,
) -> dict[str, Any]:
    """Generate ``synth.scenes`` sequences of ``synth.frames`` frames each.

    Sequences are generated in parallel; ids, splits and file contents depend
    only on the config, never on ``jobs``.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(synth.seed).spawn(synth.scenes)
    split_rng = np.random.default_rng(synth.seed)
    order = split_rng.permutation(synth.scenes)
    n_train = max(1, int(round(synth.train_fraction * synth.scenes)))
    train_sequences = {int(i) for i in order[:n_train]}

    def _one(index: int) -> list[Scene]:
        rng = np.random.default_rng(seeds[index])
        spec = sample_spec(rng, synth)
        return generate_sequence(spec, synth.frames, synth.ego_speed, int(rng.integers(2**31)), ys, render_cfg)

    records: list[dict[str, Any]] = []
    ground_truth: dict[str, list[Lane3D]] = {}
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = pool.map(_one, range(synth.scenes))
        for sequence_index, frames in enumerate(
            tqdm(results, total=synth.scenes, desc="synth", disable=not show_progress)
        ):
            prev_id = None
            for frame_index, scene in enumerate(frames):
                scene_id = scene_dir_name(sequence_index * synth.frames + frame_index)
                _write_scene(root / scene_id, scene, ys, prev_id)
                ground_truth[scene_id] = list(scene.gt)
                records.append(
                    {
                        "scene_id": scene_id,
                        "sequence": sequence_index,
                        "frame": frame_index,
                        "prev": prev_id,
                        "split": "train" if sequence_index in train_sequences else "val",
                        "tags": list(scene.gt[0].tags) if scene.gt else [],
                    }
                )
                prev_id = scene_id

    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "y_samples": ys.to_list(),
        "channels": list(render_cfg.channels),
        "synth": synth.model_dump(mode="json"),
        "render": render_cfg.model_dump(mode="json"),
        "scenes": records,
    }
    write_json(root / MANIFEST_NAME, manifest)
    write_lane_collection(root / GROUND_TRUTH_NAME, ys, ground_truth)
    logger.info("Wrote {} scenes ({} sequences) to {}", len(records), synth.scenes, root)
    return manifest


@dataclass(frozen=True, eq=False)
class LoadedScene:
    scene_id: str
    rig: CameraRig
    feature_map: FeatureMap
    gts: tuple[Lane3D, ...]
    pose_to_prev: RigidTransform | None
    prev_id: str | None
    split: str
    tags: tuple[str, ...]


class SyntheticDataset:
    """Read access to a directory written by :func:`build_dataset`."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise DatasetIoError(f"Dataset manifest not found: {manifest_path}")
        self.manifest = read_json(manifest_path)
        version = self.manifest.get("schema_version")
        if version != DATASET_SCHEMA_VERSION:
            raise DatasetIoError(f"Unsupported dataset schema '{version}', expected '{DATASET_SCHEMA_VERSION}'")
        try:
            self.ys = YSampling(np.asarray(self.manifest["y_samples"], dtype=np.float64))
            self._records = {str(r["scene_id"]): r for r in self.manifest["scenes"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetIoError(f"Invalid manifest {manifest_path}: {exc}") from exc
        self._cache: dict[str, LoadedScene] = {}

    def scene_ids(self, split: str | None = None) -> list[str]:
        return sorted(sid for sid, r in self._records.items() if split is None or r.get("split") == split)

    def __iter__(self) -> Iterator[LoadedScene]:
        for scene_id in self.scene_ids():
            yield self.load_scene(scene_id)

    def load_scene(self, scene_id: str) -> LoadedScene:
        if scene_id in self._cache:
            return self._cache[scene_id]
        if scene_id not in self._records:
            raise DatasetIoError(f"Scene '{scene_id}' is not in the manifest")
        record = self._records[scene_id]
        scene_dir = self.root / scene_id
        ys, gts = read_scene_lanes(scene_dir / "lanes.json")
        if ys != self.ys:
            raise DatasetIoError(f"{scene_id}/lanes.json uses a different y-sampling than the manifest")
        pose, prev_id = read_pose(scene_dir / "pose.json")
        loaded = LoadedScene(
            scene_id=scene_id,
            rig=read_camera(scene_dir / "camera.json"),
            feature_map=read_feature_map(scene_dir / "features.a3lf"),
            gts=tuple(gts),
            pose_to_prev=pose,
            prev_id=prev_id,
            split=str(record.get("split", "train")),
            tags=tuple(record.get("tags", ())),
        )
        self._cache[scene_id] = loaded
        return loaded

    def history(self, scene_id: str, max_gap: int) -> tuple[PreviousFrame, ...]:
        """Up to ``max_gap`` previous frames, nearest first, with composed poses."""
        frames: list[PreviousFrame] = []
        current = self.load_scene(scene_id)
        pose = RigidTransform.identity()
        while len(frames) < max_gap and current.prev_id is not None and current.pose_to_prev is not None:
            pose = compose(current.pose_to_prev, pose)
            current = self.load_scene(current.prev_id)
            frames.append(PreviousFrame(current.feature_map, current.rig, pose))
        return tuple(frames)

    def training_scenes(self, split: str | None = "train", max_gap: int = 0) -> list[TrainingScene]:
        return [
            TrainingScene(
                scene_id=scene.scene_id,
                feature_map=scene.feature_map,
                rig=scene.rig,
                gts=scene.gts,
                history=self.history(scene.scene_id, max_gap) if max_gap > 0 else (),
            )
            for scene in (self.load_scene(sid) for sid in self.scene_ids(split))
        ]
