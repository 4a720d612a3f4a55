"""Ego sequences along one synthetic road."""

from __future__ import annotations

import math

import numpy as np

from core.anchor import YSampling
from core.geometry import RigidTransform, compose
from core.schemas import RenderConfig, SceneSpec

from .scene import Scene, generate_scene


def ego_pose(spec: SceneSpec, distance: float) -> RigidTransform:
    """World-from-ego pose after driving ``distance`` along the road center.

    The ego keeps its ground frame level and yaws to follow the centerline.
    """
    c = spec.curvature
    yaw = -math.degrees(math.atan(2.0 * c * distance))
    return RigidTransform.from_yaw_translation(yaw, (c * distance**2, distance, float(spec.ground.height(distance))))


def generate_sequence(
    spec: SceneSpec,
    frames: int,
    ego_speed: float,
    seed: int,
    ys: YSampling | None = None,
    render_cfg: RenderConfig | None = None,
) -> list[Scene]:
    """Render ``frames`` consecutive frames; frame k's pose_to_prev maps its points into frame k-1."""
    if frames < 1:
        raise ValueError(f"frames must be at least 1, got {frames}")
    seeds = np.random.SeedSequence(seed).spawn(frames)
    scenes: list[Scene] = []
    previous: RigidTransform | None = None
    for k in range(frames):
        world_from_ego = ego_pose(spec, k * ego_speed)
        pose_to_prev = None if previous is None else compose(previous.inverse(), world_from_ego)
        frame_seed = int(seeds[k].generate_state(1)[0])
        scenes.append(
            generate_scene(spec, frame_seed, ys, render_cfg, world_from_ego=world_from_ego, pose_to_prev=pose_to_prev)
        )
        previous = world_from_ego
    return scenes


def chain_to_first(scenes: list[Scene], index: int) -> RigidTransform:
    """Compose pose_to_prev from frame ``index`` back to frame 0."""
    total = RigidTransform.identity()
    for k in range(index, 0, -1):
        pose = scenes[k].pose_to_prev
        if pose is None:
            raise ValueError(f"frame {k} has no pose_to_prev")
        total = compose(pose, total)
    return total
