"""Proposal generation: single pass, iterative refinement and post-processing."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.anchor import Anchor, AnchorSet
from core.geometry import CameraRig, RigidTransform
from core.lane import Lane3D, Proposal, nms
from core.sampling import FeatureMap, sample_anchor_batch
from core.schemas import InferenceConfig

from .model import ForwardCache, HeadParams, forward_batch
from .temporal import fuse_features


@dataclass(frozen=True, eq=False)
class PreviousFrame:
    """A past frame and the pose carrying current ground points into it."""

    feature_map: FeatureMap
    rig: CameraRig
    pose: RigidTransform


def regress(
    anchors: AnchorSet,
    fm: FeatureMap,
    rig: CameraRig,
    params: HeadParams,
    previous: PreviousFrame | None = None,
) -> ForwardCache:
    features, _ = sample_anchor_batch(anchors, fm, rig)
    if params.fusion_strategy is not None:
        if previous is None:
            prev_features = features
        else:
            prev_features, _ = sample_anchor_batch(anchors, previous.feature_map, previous.rig, previous.pose)
        features = fuse_features(features, prev_features, params.fusion_strategy, params.tensors)
    return forward_batch(features, params)


def proposals_from_cache(anchors: AnchorSet, cache: ForwardCache) -> list[Proposal]:
    xs = anchors.xs + cache.dx
    zs = anchors.zs + cache.dz
    proposals = []
    for i in range(len(anchors)):
        probs = cache.probs[i]
        lane = Lane3D(
            ys=anchors.ys,
            xs=xs[i],
            zs=zs[i],
            vis=cache.vis[i],
            category=int(np.argmax(probs[1:]) + 1),
        )
        proposals.append(Proposal(lane=lane, class_probs=probs, anchor_index=i))
    return proposals


def predict_iterative(
    fm: FeatureMap,
    anchors: Sequence[Anchor] | AnchorSet,
    params_per_iter: Sequence[HeadParams],
    rig: CameraRig,
    iters: int,
    previous: PreviousFrame | None = None,
) -> list[Proposal]:
    """Regress from the anchors, then feed proposals back as anchors.

    Returns every proposal (one per input anchor) before NMS, with the class
    probabilities of the last iteration.
    """
    if iters < 1:
        raise ValueError(f"iters must be at least 1, got {iters}")
    if len(params_per_iter) != iters:
        raise ValueError(f"Need one head per iteration: {iters} iterations, {len(params_per_iter)} heads")
    current = anchors if isinstance(anchors, AnchorSet) else AnchorSet.from_anchors(anchors)
    proposals: list[Proposal] = []
    for params in params_per_iter:
        cache = regress(current, fm, rig, params, previous)
        proposals = proposals_from_cache(current, cache)
        current = AnchorSet.from_proposals(proposals, current.ys)
    return proposals


def postprocess(proposals: Sequence[Proposal], cfg: InferenceConfig) -> list[Proposal]:
    """Score filter, NMS, top-k cap, then binarized visibility for export."""
    candidates = [p for p in proposals if p.score >= cfg.score_threshold]
    kept = nms(candidates, cfg.nms_threshold, cfg.vis_threshold)[: cfg.max_lanes]
    return [
        Proposal(
            lane=p.lane.binarized(cfg.vis_threshold),
            class_probs=p.class_probs,
            anchor_index=p.anchor_index,
        )
        for p in kept
    ]
