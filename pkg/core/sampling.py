"""Feature maps, bilinear interpolation and anchor feature extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from config.constants import BEHIND_CAMERA_DEPTH

from .anchor import Anchor, AnchorSet
from .exceptions import ShapeMismatch
from .geometry import CameraRig, RigidTransform, project_points


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """h_f x w_f x c grid; cell (row v, column u) is centered at integer (u, v)."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3 or min(data.shape) <= 0:
            raise ValueError(f"FeatureMap data must be (h_f, w_f, c) with positive sizes, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("FeatureMap data must be finite")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def h_f(self) -> int:
        return int(self.data.shape[0])

    @property
    def w_f(self) -> int:
        return int(self.data.shape[1])

    @property
    def c(self) -> int:
        return int(self.data.shape[2])

    @classmethod
    def from_flat(cls, h_f: int, w_f: int, c: int, values: np.ndarray) -> FeatureMap:
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.size != h_f * w_f * c:
            raise ValueError(f"Expected {h_f * w_f * c} values for ({h_f}, {w_f}, {c}), got {values.size}")
        return cls(values.reshape(h_f, w_f, c))

    @classmethod
    def constant(cls, h_f: int, w_f: int, c: int, value: float) -> FeatureMap:
        return cls(np.full((h_f, w_f, c), value, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class AnchorFeature:
    per_point: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self) -> None:
        per_point = np.asarray(self.per_point, dtype=np.float64)
        mask = np.asarray(self.valid_mask, dtype=bool)
        if per_point.ndim != 2 or mask.shape != (per_point.shape[0],):
            raise ShapeMismatch(f"AnchorFeature needs (N, C) features and (N,) mask, got {per_point.shape} and {mask.shape}")
        object.__setattr__(self, "per_point", per_point)
        object.__setattr__(self, "valid_mask", mask)

    @property
    def n(self) -> int:
        return int(self.per_point.shape[0])

    @property
    def c(self) -> int:
        return int(self.per_point.shape[1])


def bilinear_sample_many(fm: FeatureMap, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized bilinear lookup.

    Returns features of shape (*u.shape, c) and the in-bounds mask; anything
    outside [0, w_f-1] x [0, h_f-1] (or NaN) samples as zeros.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    shape = u.shape
    u = u.reshape(-1)
    v = v.reshape(-1)
    with np.errstate(invalid="ignore"):
        inside = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= fm.w_f - 1) & (v >= 0) & (v <= fm.h_f - 1)
    uc = np.where(inside, u, 0.0)
    vc = np.where(inside, v, 0.0)
    u0 = np.minimum(np.floor(uc).astype(np.int64), max(fm.w_f - 2, 0))
    v0 = np.minimum(np.floor(vc).astype(np.int64), max(fm.h_f - 2, 0))
    u1 = np.minimum(u0 + 1, fm.w_f - 1)
    v1 = np.minimum(v0 + 1, fm.h_f - 1)
    fu = (uc - u0)[:, None]
    fv = (vc - v0)[:, None]
    d = fm.data
    out = (
        (1 - fu) * (1 - fv) * d[v0, u0]
        + fu * (1 - fv) * d[v0, u1]
        + (1 - fu) * fv * d[v1, u0]
        + fu * fv * d[v1, u1]
    )
    out[~inside] = 0.0
    return out.reshape(*shape, fm.c), inside.reshape(shape)


def bilinear_sample(fm: FeatureMap, u: float, v: float) -> np.ndarray:
    features, _ = bilinear_sample_many(fm, np.array([u]), np.array([v]))
    return features[0]


def _check_rig(fm: FeatureMap, rig: CameraRig) -> None:
    if (fm.h_f, fm.w_f) != (rig.dims.h_f, rig.dims.w_f):
        raise ShapeMismatch(
            f"Feature map is {fm.h_f}x{fm.w_f} but the camera expects {rig.dims.h_f}x{rig.dims.w_f}"
        )


def sample_points(points: np.ndarray, fm: FeatureMap, rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Project (..., 3) ground points and sample; invalid points get zero features."""
    _check_rig(fm, rig)
    u, v, d = project_points(points, rig)
    features, inside = bilinear_sample_many(fm, u, v)
    valid = inside & (d > BEHIND_CAMERA_DEPTH)
    features[~valid] = 0.0
    return features, valid


def sample_anchor_features(a: Anchor, fm: FeatureMap, rig: CameraRig) -> AnchorFeature:
    features, valid = sample_points(a.as_array(), fm, rig)
    return AnchorFeature(per_point=features, valid_mask=valid)


def sample_cross_frame(a: Anchor, prev_fm: FeatureMap, prev_rig: CameraRig, pose: RigidTransform) -> AnchorFeature:
    """Sample the previous frame at the anchor's points carried through ``pose``."""
    features, valid = sample_points(pose.apply(a.as_array()), prev_fm, prev_rig)
    return AnchorFeature(per_point=features, valid_mask=valid)


def sample_anchor_batch(
    anchors: AnchorSet,
    fm: FeatureMap,
    rig: CameraRig,
    pose: RigidTransform | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(M, N, C) features and (M, N) valid mask for a whole anchor set.

    With ``pose`` the points are first moved into that frame, as in
    sample_cross_frame.
    """
    points = anchors.points()
    if pose is not None:
        points = pose.apply(points.reshape(-1, 3)).reshape(points.shape)
    return sample_points(points, fm, rig)
