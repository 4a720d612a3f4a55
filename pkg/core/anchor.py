"""3D lane anchors: rays from (x_s, 0, z_s) sampled at fixed y-coordinates."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from config.constants import Y_SAMPLING_PRESETS

from .exceptions import EmptyGrid, LengthMismatch
from .geometry import GroundPoint
from .schemas import AnchorGridConfig

if TYPE_CHECKING:
    from .lane import Proposal


@dataclass(frozen=True, eq=False)
class YSampling:
    """Strictly ascending, positive y-coordinates shared by anchors and lanes."""

    ys: np.ndarray

    def __post_init__(self) -> None:
        ys = np.array(self.ys, dtype=np.float64).reshape(-1)
        if ys.size < 2:
            raise ValueError(f"YSampling needs at least 2 values, got {ys.size}")
        if not np.all(np.isfinite(ys)) or np.any(ys <= 0):
            raise ValueError(f"YSampling values must be finite and positive: {ys.tolist()}")
        if np.any(np.diff(ys) <= 0):
            raise ValueError(f"YSampling must be strictly increasing: {ys.tolist()}")
        ys.flags.writeable = False
        object.__setattr__(self, "ys", ys)

    @classmethod
    def preset(cls, name: str) -> YSampling:
        if name not in Y_SAMPLING_PRESETS:
            raise ValueError(f"Unknown y-sampling preset '{name}', choose from {sorted(Y_SAMPLING_PRESETS)}")
        return cls(np.asarray(Y_SAMPLING_PRESETS[name], dtype=np.float64))

    @classmethod
    def from_config(cls, cfg: AnchorGridConfig) -> YSampling:
        return cls(np.asarray(cfg.y_values(), dtype=np.float64))

    @property
    def n(self) -> int:
        return int(self.ys.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, YSampling):
            return NotImplemented
        return bool(np.array_equal(self.ys, other.ys))

    def __hash__(self) -> int:
        return hash(self.ys.tobytes())

    def to_list(self) -> list[float]:
        return [float(y) for y in self.ys]

    def matches(self, values: Iterable[float], tol: float = 1e-6) -> bool:
        values = np.asarray(list(values), dtype=np.float64)
        return values.shape == self.ys.shape and bool(np.all(np.abs(values - self.ys) <= tol))


@dataclass(frozen=True, slots=True)
class AnchorParams:
    x_s: float
    pitch: float
    yaw: float
    z_s: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.pitch) >= 90 or abs(self.yaw) >= 90:
            raise ValueError(f"Anchor pitch/yaw must lie in (-90, 90) degrees: {self}")


@dataclass(frozen=True, eq=False)
class Anchor:
    params: AnchorParams
    ys: YSampling
    xs: np.ndarray
    zs: np.ndarray

    def __post_init__(self) -> None:
        for name in ("xs", "zs"):
            values = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if values.size != self.ys.n:
                raise LengthMismatch(f"Anchor {name} has {values.size} values, y-sampling has {self.ys.n}")
            values.flags.writeable = False
            object.__setattr__(self, name, values)

    @property
    def points(self) -> list[GroundPoint]:
        return [GroundPoint(float(x), float(y), float(z)) for x, y, z in zip(self.xs, self.ys.ys, self.zs, strict=True)]

    def as_array(self) -> np.ndarray:
        """(N, 3) ground points."""
        return np.stack([self.xs, self.ys.ys, self.zs], axis=1)


@dataclass(frozen=True, eq=False)
class AnchorSet:
    """M anchors stacked into (M, N) arrays for vectorized work."""

    ys: YSampling
    xs: np.ndarray
    zs: np.ndarray
    params: tuple[AnchorParams, ...]

    def __post_init__(self) -> None:
        xs = np.array(self.xs, dtype=np.float64)
        zs = np.array(self.zs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape != zs.shape or xs.shape[1] != self.ys.n:
            raise LengthMismatch(f"AnchorSet arrays must be (M, {self.ys.n}), got {xs.shape} and {zs.shape}")
        if len(self.params) != xs.shape[0]:
            raise LengthMismatch(f"AnchorSet has {xs.shape[0]} rows but {len(self.params)} params")
        xs.flags.writeable = False
        zs.flags.writeable = False
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "zs", zs)

    def __len__(self) -> int:
        return int(self.xs.shape[0])

    def __getitem__(self, index: int) -> Anchor:
        return Anchor(self.params[index], self.ys, self.xs[index], self.zs[index])

    def points(self) -> np.ndarray:
        """(M, N, 3) ground points."""
        ys = np.broadcast_to(self.ys.ys, self.xs.shape)
        return np.stack([self.xs, ys, self.zs], axis=-1)

    @classmethod
    def from_anchors(cls, anchors: Sequence[Anchor]) -> AnchorSet:
        if not anchors:
            raise EmptyGrid("Cannot stack an empty anchor list")
        ys = anchors[0].ys
        if any(a.ys != ys for a in anchors):
            raise LengthMismatch("Anchors do not share one y-sampling")
        return cls(
            ys=ys,
            xs=np.stack([a.xs for a in anchors]),
            zs=np.stack([a.zs for a in anchors]),
            params=tuple(a.params for a in anchors),
        )

    @classmethod
    def from_proposals(cls, proposals: Sequence[Proposal], ys: YSampling) -> AnchorSet:
        return cls.from_anchors([proposal_to_anchor(p, ys) for p in proposals])

    @classmethod
    def from_grid(cls, cfg: AnchorGridConfig, ys: YSampling) -> AnchorSet:
        return cls.from_anchors(build_anchor_grid(cfg, ys))


def build_anchor(params: AnchorParams, ys: YSampling) -> Anchor:
    """Point k is (x_s + y_k tan(yaw), y_k, z_s + y_k tan(pitch))."""
    tan_yaw = math.tan(math.radians(params.yaw))
    tan_pitch = math.tan(math.radians(params.pitch))
    return Anchor(
        params=params,
        ys=ys,
        xs=params.x_s + ys.ys * tan_yaw,
        zs=params.z_s + ys.ys * tan_pitch,
    )


def anchor_start_positions(cfg: AnchorGridConfig) -> list[float]:
    lo, hi = cfg.x_range
    count = math.floor((hi - lo) / cfg.x_interval + 1e-9) + 1
    return [lo + i * cfg.x_interval for i in range(count)]


def build_anchor_grid(cfg: AnchorGridConfig, ys: YSampling) -> list[Anchor]:
    """One anchor per (x_s, yaw, pitch), x_s outermost.

    Raises:
        EmptyGrid: yaws or pitches is empty.
    """
    if not cfg.yaws or not cfg.pitches:
        raise EmptyGrid(f"Anchor grid needs yaws and pitches, got {len(cfg.yaws)} yaws and {len(cfg.pitches)} pitches")
    return [
        build_anchor(AnchorParams(x_s=x_s, pitch=pitch, yaw=yaw, z_s=cfg.z_s), ys)
        for x_s in anchor_start_positions(cfg)
        for yaw in cfg.yaws
        for pitch in cfg.pitches
    ]


def proposal_to_anchor(p: Proposal, ys: YSampling) -> Anchor:
    """Reuse a proposal's points as the anchor for another regression pass.

    Pitch and yaw are placeholders; x_s and z_s copy the nearest point.
    """
    lane = p.lane
    if lane.xs.size != ys.n or lane.ys != ys:
        raise LengthMismatch(f"Proposal has {lane.xs.size} points, y-sampling has {ys.n}")
    params = AnchorParams(x_s=float(lane.xs[0]), pitch=0.0, yaw=0.0, z_s=float(lane.zs[0]))
    return Anchor(params=params, ys=ys, xs=lane.xs.copy(), zs=lane.zs.copy())
