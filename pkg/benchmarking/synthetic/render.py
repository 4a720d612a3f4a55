"""Analytic feature maps: cast each feature-cell ray onto the road surface
and describe the hit point relative to the nearest lane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.spatial import cKDTree

from core.geometry import CameraRig, feature_rays, project_points
from core.sampling import FeatureMap
from core.schemas import RenderConfig

from .scene import RoadFrame, occlusion_mask

_MARCH_STEP = 0.5
_BISECT_STEPS = 40
_POLYLINE_STEP = 0.05
_BEHIND_MARGIN = 10.0


@dataclass(frozen=True, eq=False)
class _LaneCloud:
    """Dense ego-frame polylines of every lane, stacked."""

    points: np.ndarray
    tangents: np.ndarray
    lane_ids: np.ndarray
    categories: np.ndarray

    @classmethod
    def build(cls, frame: RoadFrame, max_range: float) -> _LaneCloud:
        start = frame.world_from_ego.t[1] - _BEHIND_MARGIN
        s = np.arange(start, start + max_range + 2.0 * _BEHIND_MARGIN, _POLYLINE_STEP)
        points, tangents, ids, cats = [], [], [], []
        for i, category in enumerate(frame.spec.lane_categories()):
            points.append(frame.lane_ego(i, s))
            tangents.append(frame.lane_tangent_ego(i, s))
            ids.append(np.full(s.shape, i))
            cats.append(np.full(s.shape, category))
        return cls(np.concatenate(points), np.concatenate(tangents), np.concatenate(ids), np.concatenate(cats))


def intersect_ground(
    frame: RoadFrame,
    origin: np.ndarray,
    directions: np.ndarray,
    max_range: float,
) -> tuple[np.ndarray, np.ndarray]:
    """First crossing of each ray with the surface.

    Returns hit points (K, 3) and a hit mask; rays that stay above the ground
    up to ``max_range`` are misses.
    """
    t = np.arange(_MARCH_STEP, max_range + _MARCH_STEP, _MARCH_STEP)
    path = origin[None, None, :] + t[None, :, None] * directions[:, None, :]
    above = path[..., 2] - frame.ground_height(path[..., 0], path[..., 1])
    below = above <= 0.0
    hit = below.any(axis=1)
    first = np.argmax(below, axis=1)

    lo = np.where(first > 0, t[np.maximum(first - 1, 0)], 0.0)
    hi = t[first]
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        p = origin[None, :] + mid[:, None] * directions
        under = p[:, 2] - frame.ground_height(p[:, 0], p[:, 1]) <= 0.0
        hi = np.where(under, mid, hi)
        lo = np.where(under, lo, mid)
    points = origin[None, :] + hi[:, None] * directions
    # snap onto the surface so the ground_height channel is exact
    points[:, 2] = frame.ground_height(points[:, 0], points[:, 1])
    return points, hit


def _nearest_on_polyline(cloud: _LaneCloud, tree: cKDTree, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed lateral distance (+ right of travel), tangent and index of the nearest lane point."""
    _, idx = tree.query(xy)
    best_dist = np.full(len(xy), np.inf)
    best_signed = np.zeros(len(xy))
    best_tangent = cloud.tangents[idx, :2]
    n = len(cloud.points)
    for shift in (-1, 0):
        a = np.clip(idx + shift, 0, n - 1)
        b = np.clip(idx + shift + 1, 0, n - 1)
        same = cloud.lane_ids[a] == cloud.lane_ids[b]
        pa, pb = cloud.points[a, :2], cloud.points[b, :2]
        seg = pb - pa
        length_sq = np.einsum("ij,ij->i", seg, seg)
        frac = np.where(same & (length_sq > 0), np.einsum("ij,ij->i", xy - pa, seg) / np.maximum(length_sq, 1e-18), 0.0)
        frac = np.clip(frac, 0.0, 1.0)
        closest = pa + frac[:, None] * seg
        offset = xy - closest
        dist = np.linalg.norm(offset, axis=1)
        tangent = np.where(same[:, None] & (length_sq[:, None] > 0), seg, cloud.tangents[a, :2])
        tangent = tangent / np.linalg.norm(tangent, axis=1, keepdims=True)
        signed = offset[:, 0] * tangent[:, 1] - offset[:, 1] * tangent[:, 0]
        better = dist < best_dist
        best_dist = np.where(better, dist, best_dist)
        best_signed = np.where(better, signed, best_signed)
        best_tangent = np.where(better[:, None], tangent, best_tangent)
    return best_signed, best_tangent, idx


def render_feature_map(
    frame: RoadFrame,
    rig: CameraRig,
    cfg: RenderConfig,
    *,
    seed: int = 0,
) -> FeatureMap:
    """Encode the configured channels for every cell of the feature grid.

    Sky cells (no ground hit) carry lateral = +clamp and zeros elsewhere.
    """
    h_f, w_f = rig.dims.h_f, rig.dims.w_f
    vv, uu = np.meshgrid(np.arange(h_f, dtype=np.float64), np.arange(w_f, dtype=np.float64), indexing="ij")
    origin, directions = feature_rays(rig, uu.ravel(), vv.ravel())
    hits, hit = intersect_ground(frame, origin, directions, cfg.max_range)

    cloud = _LaneCloud.build(frame, cfg.max_range)
    tree = cKDTree(cloud.points[:, :2])
    signed, tangent, nearest = _nearest_on_polyline(cloud, tree, hits[:, :2])

    # lane evidence as seen by the camera: projected, in front, not behind a crest
    u, v, d = project_points(cloud.points, rig)
    seen = np.isfinite(u) & (d > 0)
    seen &= (u > -2.0) & (u < w_f + 1.0) & (v > -2.0) & (v < h_f + 1.0)
    if frame.can_self_occlude() and np.any(seen):
        seen[seen] = ~frame.terrain_blocked(origin, cloud.points[seen])
    cells = np.stack([uu.ravel(), vv.ravel()], axis=1)
    if np.any(seen):
        image_tree = cKDTree(np.stack([u[seen], v[seen]], axis=1))
        image_dist, image_idx = image_tree.query(cells)
        image_du = cells[:, 0] - u[seen][image_idx]
    else:
        image_dist = np.full(len(cells), np.inf)
        image_du = np.full(len(cells), cfg.column_clamp)

    presence = np.abs(signed) <= cfg.presence_radius
    if cfg.presence_radius_cells > 0:
        presence |= image_dist <= cfg.presence_radius_cells
    presence &= hit

    channels: dict[str, np.ndarray] = {
        "lateral_distance": np.clip(signed, -cfg.lateral_clamp, cfg.lateral_clamp),
        "presence": presence.astype(np.float64),
        "heading_sin": tangent[:, 0],
        "heading_cos": tangent[:, 1],
        "ground_height": hits[:, 2],
        "column_offset": np.clip(image_du, -cfg.column_clamp, cfg.column_clamp),
        "lane_category": np.where(presence, cloud.categories[nearest] / (cfg.num_classes - 1), 0.0),
    }
    data = np.stack([channels[name] for name in cfg.channels], axis=-1)

    sky = np.array([cfg.lateral_clamp if name == "lateral_distance" else 0.0 for name in cfg.channels])
    data[~hit] = sky

    if cfg.occlude_features and frame.spec.occlusion_spans is not None:
        hidden = np.zeros(len(data), dtype=bool)
        near = np.abs(signed) <= frame.spec.lane_spacing / 2.0
        for i in range(frame.spec.num_lanes):
            lane_cells = hit & near & (cloud.lane_ids[nearest] == i)
            hidden |= lane_cells & occlusion_mask(frame.spec, i, hits[:, 1])
        data[hidden] = 0.0
        logger.debug("Occluded {} of {} feature cells", int(hidden.sum()), len(data))

    if cfg.feature_noise > 0:
        rng = np.random.default_rng(seed)
        data[hit] += rng.normal(0.0, cfg.feature_noise, size=data[hit].shape)

    return FeatureMap(data.reshape(h_f, w_f, len(cfg.channels)))
