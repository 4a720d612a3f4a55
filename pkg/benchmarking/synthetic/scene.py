"""Synthetic roads: lanes x = offset + c * y^2 on a parametric ground z = g(y)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from core.anchor import YSampling
from core.geometry import CameraIntrinsics, CameraRig, ImageDims, RigidTransform, project_points
from core.lane import Lane3D
from core.sampling import FeatureMap
from core.schemas import RenderConfig, SceneSpec

_NEWTON_STEPS = 60
_TERRAIN_SAMPLES = 64
_TERRAIN_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class RoadFrame:
    """The road seen from one ego pose.

    ``world_from_ego`` only rotates about z, so the ego ground frame stays
    level and the surface height is g(world y) minus the ego's own height.
    """

    spec: SceneSpec
    world_from_ego: RigidTransform = field(default_factory=RigidTransform.identity)

    @property
    def ego_from_world(self) -> RigidTransform:
        return self.world_from_ego.inverse()

    def ground_height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r, t = self.world_from_ego.r, self.world_from_ego.t
        world_y = r[1, 0] * np.asarray(x) + r[1, 1] * np.asarray(y) + t[1]
        return self.spec.ground.height(world_y) - t[2]

    def lane_world(self, lane: int, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        offset = self.spec.lane_offsets()[lane]
        return np.stack([offset + self.spec.curvature * s**2, s, self.spec.ground.height(s)], axis=-1)

    def lane_ego(self, lane: int, s: np.ndarray) -> np.ndarray:
        return self.ego_from_world.apply(self.lane_world(lane, s))

    def lane_tangent_ego(self, lane: int, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.float64)
        world = np.stack([2.0 * self.spec.curvature * s, np.ones_like(s), self.spec.ground.slope(s)], axis=-1)
        return world @ self.world_from_ego.r

    def solve_lane_parameter(self, lane: int, ego_ys: np.ndarray) -> np.ndarray:
        """World parameter s whose lane point sits at each ego y (Newton)."""
        r, t = self.world_from_ego.r, self.world_from_ego.t
        offset = self.spec.lane_offsets()[lane]
        c = self.spec.curvature
        ego_ys = np.asarray(ego_ys, dtype=np.float64)
        s = ego_ys + t[1]
        for _ in range(_NEWTON_STEPS):
            x_w = offset + c * s**2
            z_w = self.spec.ground.height(s)
            f = r[0, 1] * (x_w - t[0]) + r[1, 1] * (s - t[1]) + r[2, 1] * (z_w - t[2]) - ego_ys
            df = r[0, 1] * 2.0 * c * s + r[1, 1] + r[2, 1] * self.spec.ground.slope(s)
            delta = f / df
            s = s - delta
            if np.all(np.abs(delta) < 1e-13):
                break
        return s

    def can_self_occlude(self) -> bool:
        return self.spec.ground.kind == "hill"

    def terrain_blocked(self, camera: np.ndarray, points: np.ndarray) -> np.ndarray:
        """True where the segment camera -> point dips below the ground."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if not self.can_self_occlude() or points.size == 0:
            return np.zeros(points.shape[0], dtype=bool)
        t = np.linspace(0.02, 0.98, _TERRAIN_SAMPLES)
        path = camera[None, None, :] + t[None, :, None] * (points[:, None, :] - camera[None, None, :])
        ground = self.ground_height(path[..., 0], path[..., 1])
        return np.any(ground > path[..., 2] + _TERRAIN_TOL, axis=1)


@dataclass(frozen=True, eq=False)
class Scene:
    rig: CameraRig
    gt: tuple[Lane3D, ...]
    feature_map: FeatureMap
    pose_to_prev: RigidTransform | None
    frame: RoadFrame

    @property
    def spec(self) -> SceneSpec:
        return self.frame.spec


def build_rig(spec: SceneSpec, cfg: RenderConfig) -> CameraRig:
    dims = ImageDims(cfg.image_height, cfg.image_width, cfg.feature_height, cfg.feature_width)
    intrinsics = CameraIntrinsics.from_focal(cfg.focal_length, cfg.focal_length, cfg.image_width / 2.0, cfg.image_height / 2.0)
    return CameraRig.from_height_pitch(spec.camera_height, spec.camera_pitch, intrinsics, dims)


def in_view(rig: CameraRig, points: np.ndarray) -> np.ndarray:
    """Projects in front of the camera and inside the feature grid."""
    u, v, d = project_points(points, rig)
    with np.errstate(invalid="ignore"):
        return (d > 0) & (u >= 0) & (u <= rig.dims.w_f - 1) & (v >= 0) & (v <= rig.dims.h_f - 1)


def scene_tags(spec: SceneSpec) -> tuple[str, ...]:
    tags = list(spec.tags)
    if abs(spec.curvature) > 1e-4 and "curve" not in tags:
        tags.append("curve")
    if spec.ground.kind != "flat" and "up_down" not in tags:
        tags.append("up_down")
    return tuple(tags)


def occlusion_mask(spec: SceneSpec, lane: int, ys: np.ndarray) -> np.ndarray:
    mask = np.zeros(np.shape(ys), dtype=bool)
    if spec.occlusion_spans is None:
        return mask
    for lo, hi in spec.occlusion_spans[lane]:
        mask |= (ys >= lo) & (ys <= hi)
    return mask


def ground_truth_lanes(frame: RoadFrame, rig: CameraRig, ys: YSampling) -> tuple[Lane3D, ...]:
    """Lanes at the ego y-samples; hidden points (spans, off-image, behind crests) get vis 0."""
    spec = frame.spec
    tags = scene_tags(spec)
    camera = rig.camera_center()
    lanes = []
    for i, category in enumerate(spec.lane_categories()):
        s = frame.solve_lane_parameter(i, ys.ys)
        points = frame.lane_ego(i, s)
        visible = in_view(rig, points) & ~occlusion_mask(spec, i, ys.ys) & ~frame.terrain_blocked(camera, points)
        lanes.append(
            Lane3D(
                ys=ys,
                xs=points[:, 0],
                zs=points[:, 2],
                vis=visible.astype(np.float64),
                category=int(category),
                tags=tags,
            )
        )
    return tuple(lanes)


def generate_scene(
    spec: SceneSpec,
    seed: int,
    ys: YSampling | None = None,
    render_cfg: RenderConfig | None = None,
    *,
    world_from_ego: RigidTransform | None = None,
    pose_to_prev: RigidTransform | None = None,
) -> Scene:
    """Deterministic per (spec, seed); the seed only drives optional feature noise."""
    from .render import render_feature_map

    ys = ys if ys is not None else YSampling.preset("apollosim")
    render_cfg = render_cfg if render_cfg is not None else RenderConfig()
    frame = RoadFrame(spec, world_from_ego or RigidTransform.identity())
    rig = build_rig(spec, render_cfg)
    return Scene(
        rig=rig,
        gt=ground_truth_lanes(frame, rig, ys),
        feature_map=render_feature_map(frame, rig, render_cfg, seed=seed),
        pose_to_prev=pose_to_prev,
        frame=frame,
    )
