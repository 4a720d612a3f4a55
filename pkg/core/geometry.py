"""Ground/camera coordinate systems and the rigid and projective transforms.

Ground frame: origin on the ground below the camera, x right, y forward, z up.
Camera frame: x right, y down, z along the optical axis. All math runs in
float64; every value type is immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from config.constants import BEHIND_CAMERA_DEPTH

from .exceptions import DepthNonPositive

_ORTHO_TOL = 1e-9


def _frozen_array(value: Any, shape: tuple[int, ...], name: str) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    if array.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} must be finite")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, slots=True)
class GroundPoint:
    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"GroundPoint coordinates must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def from_array(cls, values: np.ndarray) -> GroundPoint:
        return cls(float(values[0]), float(values[1]), float(values[2]))


@dataclass(frozen=True, eq=False)
class CameraIntrinsics:
    """Pinhole intrinsics K (row-major 3x3)."""

    k: np.ndarray

    def __post_init__(self) -> None:
        k = _frozen_array(self.k, (3, 3), "K")
        if k[2, 2] != 1.0:
            raise ValueError(f"K[2][2] must be 1, got {k[2, 2]}")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("Focal lengths K[0][0] and K[1][1] must be positive")
        object.__setattr__(self, "k", k)

    @classmethod
    def from_focal(cls, fx: float, fy: float, cx: float, cy: float) -> CameraIntrinsics:
        return cls(np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]))

    def to_json(self) -> dict[str, list[float]]:
        return {"K": [float(v) for v in self.k.reshape(-1)]}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> CameraIntrinsics:
        values = payload["K"]
        if len(values) != 9:
            raise ValueError(f"'K' needs 9 values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(3, 3))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """p' = r @ p + t, with r a proper rotation."""

    r: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        r = _frozen_array(self.r, (3, 3), "rotation")
        t = _frozen_array(self.t, (3,), "translation")
        if not np.allclose(r.T @ r, np.eye(3), rtol=0.0, atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation determinant must be +1")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, tx: float, ty: float, tz: float) -> RigidTransform:
        return cls(np.eye(3), np.array([tx, ty, tz], dtype=np.float64))

    @classmethod
    def rot_z(cls, degrees: float, translation: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> RigidTransform:
        c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(r, np.asarray(translation, dtype=np.float64))

    @classmethod
    def from_yaw_translation(cls, yaw_deg: float, translation: tuple[float, float, float]) -> RigidTransform:
        """Heading change about the ground z axis followed by a translation."""
        return cls.rot_z(yaw_deg, translation)

    def inverse(self) -> RigidTransform:
        return RigidTransform(self.r.T, -(self.r.T @ self.t))

    def matrix(self) -> np.ndarray:
        """3x4 [r | t]."""
        return np.hstack([self.r, self.t[:, None]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (K, 3) array of points."""
        return np.asarray(points, dtype=np.float64) @ self.r.T + self.t

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.r, np.eye(3)) and not np.any(self.t))

    def to_json(self) -> dict[str, list[float]]:
        return {"T": [float(v) for v in self.matrix().reshape(-1)]}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> RigidTransform:
        values = payload["T"]
        if len(values) != 12:
            raise ValueError(f"'T' needs 12 values, got {len(values)}")
        m = np.asarray(values, dtype=np.float64).reshape(3, 4)
        return cls(m[:, :3], m[:, 3])


@dataclass(frozen=True, slots=True)
class ImageDims:
    h: int
    w: int
    h_f: int
    w_f: int

    def __post_init__(self) -> None:
        if min(self.h, self.w, self.h_f, self.w_f) <= 0:
            raise ValueError(f"Image dimensions must be positive: {self}")
        if self.h_f > self.h or self.w_f > self.w:
            raise ValueError(f"Feature grid cannot exceed the image: {self}")

    @property
    def scale_u(self) -> float:
        return self.w_f / self.w

    @property
    def scale_v(self) -> float:
        return self.h_f / self.h

    def to_json(self) -> dict[str, int]:
        return {"H": self.h, "W": self.w, "Hf": self.h_f, "Wf": self.w_f}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> ImageDims:
        return cls(int(payload["H"]), int(payload["W"]), int(payload["Hf"]), int(payload["Wf"]))


@dataclass(frozen=True, slots=True)
class FeaturePoint:
    u: float
    v: float
    d: float


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Everything needed to project ground points into one feature map."""

    intrinsics: CameraIntrinsics
    t_gc: RigidTransform
    dims: ImageDims

    @classmethod
    def from_height_pitch(
        cls,
        height: float,
        pitch_deg: float,
        intrinsics: CameraIntrinsics,
        dims: ImageDims,
    ) -> CameraRig:
        """Camera at (0, 0, height) looking along +y, pitched down by pitch_deg."""
        p = math.radians(pitch_deg)
        r = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, -math.sin(p), -math.cos(p)],
                [0.0, math.cos(p), -math.sin(p)],
            ]
        )
        t = -(r @ np.array([0.0, 0.0, height]))
        return cls(intrinsics, RigidTransform(r, t), dims)

    def camera_center(self) -> np.ndarray:
        return -(self.t_gc.r.T @ self.t_gc.t)

    def to_json(self) -> dict[str, Any]:
        return {**self.intrinsics.to_json(), **self.t_gc.to_json(), **self.dims.to_json()}

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> CameraRig:
        return cls(
            CameraIntrinsics.from_json(payload),
            RigidTransform.from_json(payload),
            ImageDims.from_json(payload),
        )


def transform_point(p: GroundPoint, t: RigidTransform) -> GroundPoint:
    return GroundPoint.from_array(t.r @ p.as_array() + t.t)


def transform_points(points: np.ndarray, t: RigidTransform) -> np.ndarray:
    return t.apply(points)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying b first, then a."""
    return RigidTransform(a.r @ b.r, a.r @ b.t + a.t)


def project_ground_to_feature(
    p: GroundPoint,
    k: CameraIntrinsics,
    t_gc: RigidTransform,
    dims: ImageDims,
) -> FeaturePoint:
    """Pinhole projection onto the feature grid.

    Raises:
        DepthNonPositive: depth d <= 1e-6, the point is not in front of the camera.
    """
    u_tilde, v_tilde, d = k.k @ (t_gc.r @ p.as_array() + t_gc.t)
    if d <= BEHIND_CAMERA_DEPTH:
        raise DepthNonPositive(float(d))
    return FeaturePoint(
        u=float(dims.scale_u * u_tilde / d),
        v=float(dims.scale_v * v_tilde / d),
        d=float(d),
    )


def project_points(points: np.ndarray, rig: CameraRig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of (..., 3) ground points.

    Returns (u, v, d) with the leading shape of ``points``; u and v are NaN
    wherever d <= 1e-6 so callers can mask instead of catching errors.
    """
    points = np.asarray(points, dtype=np.float64)
    flat = points.reshape(-1, 3)
    uvd = (flat @ rig.t_gc.r.T + rig.t_gc.t) @ rig.intrinsics.k.T
    d = uvd[:, 2]
    in_front = d > BEHIND_CAMERA_DEPTH
    safe_d = np.where(in_front, d, 1.0)
    u = np.where(in_front, rig.dims.scale_u * uvd[:, 0] / safe_d, np.nan)
    v = np.where(in_front, rig.dims.scale_v * uvd[:, 1] / safe_d, np.nan)
    shape = points.shape[:-1]
    return u.reshape(shape), v.reshape(shape), d.reshape(shape)


def back_project_feature(
    fp: FeaturePoint,
    k: CameraIntrinsics,
    t_gc: RigidTransform,
    dims: ImageDims,
) -> GroundPoint:
    """Inverse of project_ground_to_feature for a known depth."""
    homogeneous = np.array([fp.u / dims.scale_u * fp.d, fp.v / dims.scale_v * fp.d, fp.d])
    camera_point = np.linalg.solve(k.k, homogeneous)
    return GroundPoint.from_array(t_gc.r.T @ (camera_point - t_gc.t))


def feature_rays(rig: CameraRig, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ground-frame rays through feature coordinates.

    Returns the camera center (3,) and unit directions (K, 3).
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    pixels = np.stack([u / rig.dims.scale_u, v / rig.dims.scale_v, np.ones_like(u)], axis=1)
    directions_cam = np.linalg.solve(rig.intrinsics.k, pixels.T).T
    directions = directions_cam @ rig.t_gc.r
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return rig.camera_center(), directions
