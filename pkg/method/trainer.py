"""Head training over scenes: one head per refinement iteration, or one shared head."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from tqdm import tqdm

from core.anchor import AnchorSet
from core.geometry import CameraRig
from core.lane import Assignment, Lane3D, assign_positives
from core.sampling import FeatureMap, sample_anchor_batch
from core.schemas import FusionConfig, HeadConfig, TrainConfig

from .head.batch import TrainingBatch, build_training_batch
from .head.inference import PreviousFrame, predict_iterative
from .head.model import HeadParams
from .head.optim import backward_and_step


@dataclass(frozen=True, eq=False)
class TrainingScene:
    """A scene ready for training; ``history[k]`` is the frame k + 1 steps back."""

    scene_id: str
    feature_map: FeatureMap
    rig: CameraRig
    gts: tuple[Lane3D, ...]
    history: tuple[PreviousFrame, ...] = ()

    def inference_previous(self, max_gap: int) -> PreviousFrame | None:
        """The earliest stored frame within ``max_gap`` steps."""
        usable = self.history[:max_gap]
        return usable[-1] if usable else None


@dataclass
class TrainResult:
    heads: list[HeadParams]
    loss_curve: list[dict[str, float | int | str]] = field(default_factory=list)

    def epoch_losses(self, iteration: int = 1) -> list[float]:
        by_epoch: dict[int, list[float]] = {}
        for row in self.loss_curve:
            if row["iteration"] == iteration:
                by_epoch.setdefault(int(row["epoch"]), []).append(float(row["loss"]))
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


@dataclass(frozen=True, eq=False)
class _Prepared:
    scene: TrainingScene
    anchors: AnchorSet
    features: np.ndarray
    gts: tuple[Lane3D, ...]
    assignment: Assignment


def _usable_gts(scene: TrainingScene) -> tuple[Lane3D, ...]:
    return tuple(gt for gt in scene.gts if gt.vis.sum() > 0)


def _iteration_anchors(
    scene: TrainingScene,
    grid: AnchorSet,
    heads: Sequence[HeadParams],
    fusion: FusionConfig,
) -> AnchorSet:
    if not heads:
        return grid
    previous = scene.inference_previous(fusion.max_frame_gap) if fusion.enabled else None
    proposals = predict_iterative(scene.feature_map, grid, heads, scene.rig, len(heads), previous)
    return AnchorSet.from_proposals(proposals, grid.ys)


def _prepare(
    scenes: Sequence[TrainingScene],
    grid: AnchorSet,
    frozen: Sequence[HeadParams],
    cfg: TrainConfig,
    fusion: FusionConfig,
) -> list[_Prepared]:
    prepared = []
    for scene in scenes:
        gts = _usable_gts(scene)
        if not gts:
            logger.warning("Skipping scene {}: no visible ground-truth lane", scene.scene_id)
            continue
        anchors = _iteration_anchors(scene, grid, frozen, fusion)
        try:
            assignment = assign_positives(gts, anchors, cfg.n_positives)
        except ValueError as exc:
            logger.warning("Skipping scene {}: {}", scene.scene_id, exc)
            continue
        features, _ = sample_anchor_batch(anchors, scene.feature_map, scene.rig)
        prepared.append(_Prepared(scene, anchors, features, gts, assignment))
    return prepared


def _batch_for_step(item: _Prepared, rng: np.random.Generator, fusion: FusionConfig) -> TrainingBatch:
    prev_features = None
    if fusion.enabled and item.scene.history:
        choices = item.scene.history[: fusion.max_frame_gap]
        frame = choices[int(rng.integers(len(choices)))]
        prev_features, _ = sample_anchor_batch(item.anchors, frame.feature_map, frame.rig, frame.pose)
    return build_training_batch(item.anchors, item.features, item.gts, item.assignment, prev_features)


def train_heads(
    scenes: Sequence[TrainingScene],
    grid: AnchorSet,
    head_cfg: HeadConfig,
    cfg: TrainConfig,
    fusion: FusionConfig | None = None,
    *,
    show_progress: bool = False,
) -> TrainResult:
    """Fit ``cfg.iterations`` heads in order.

    Head i is trained on the proposals of the frozen heads 1..i-1, with
    positives assigned against those proposals. With ``share_heads`` a single
    head is trained on the anchor grid and reused for every iteration.
    """
    fusion = fusion or FusionConfig()
    if not scenes:
        raise ValueError("train_heads needs at least one scene")
    channels = scenes[0].feature_map.c
    strategy = fusion.strategy if fusion.enabled else None
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.iterations)
    result = TrainResult(heads=[])

    for it in range(cfg.iterations):
        if cfg.share_heads and it > 0:
            result.heads.append(result.heads[0])
            continue
        rng = np.random.default_rng(seeds[it])
        params = HeadParams.init(grid.ys.n, channels, head_cfg, int(rng.integers(2**31)), strategy)
        prepared = _prepare(scenes, grid, result.heads, cfg, fusion)
        if not prepared:
            raise ValueError("No trainable scene: every scene lacks visible ground truth")
        logger.info("Iteration {}: training on {} scenes for {} epochs", it + 1, len(prepared), cfg.epochs)
        epochs = tqdm(range(cfg.epochs), desc=f"head {it + 1}", disable=not show_progress)
        for epoch in epochs:
            losses = []
            for index in rng.permutation(len(prepared)):
                item = prepared[int(index)]
                params, loss = backward_and_step(params, _batch_for_step(item, rng, fusion), cfg)
                losses.append(loss)
                result.loss_curve.append(
                    {
                        "iteration": it + 1,
                        "epoch": epoch + 1,
                        "step": params.step,
                        "scene_id": item.scene.scene_id,
                        "loss": float(loss),
                    }
                )
            logger.debug("Iteration {} epoch {}: mean loss {:.5f}", it + 1, epoch + 1, float(np.mean(losses)))
        result.heads.append(params)
    return result
