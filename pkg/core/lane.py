"""Lane and proposal containers, the anchor/lane distance, positive assignment and NMS."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .anchor import Anchor, AnchorSet, YSampling
from .exceptions import LengthMismatch, NoVisiblePoints

VIS_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class Lane3D:
    """N points (x, z, vis) at the shared y-coordinates."""

    ys: YSampling
    xs: np.ndarray
    zs: np.ndarray
    vis: np.ndarray
    category: int = 1
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("xs", "zs", "vis"):
            values = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if values.size != self.ys.n:
                raise LengthMismatch(f"Lane {name} has {values.size} values, y-sampling has {self.ys.n}")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"Lane {name} must be finite")
            values.flags.writeable = False
            object.__setattr__(self, name, values)
        if np.any(self.vis < 0) or np.any(self.vis > 1):
            raise ValueError(f"Lane visibility must lie in [0, 1]: {self.vis.tolist()}")
        if self.category < 0:
            raise ValueError(f"Lane category must be non-negative, got {self.category}")
        object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def n(self) -> int:
        return self.ys.n

    def points(self) -> np.ndarray:
        return np.stack([self.xs, self.ys.ys, self.zs], axis=1)

    def visible(self, threshold: float = VIS_THRESHOLD) -> np.ndarray:
        return self.vis >= threshold

    def with_xs(self, xs: np.ndarray) -> Lane3D:
        return replace(self, xs=np.asarray(xs, dtype=np.float64))

    def binarized(self, threshold: float = VIS_THRESHOLD) -> Lane3D:
        return replace(self, vis=(self.vis >= threshold).astype(np.float64))

    def to_json(self) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "category": int(self.category),
            "points": [
                [float(x), float(y), float(z), float(v)]
                for x, y, z, v in zip(self.xs, self.ys.ys, self.zs, self.vis, strict=True)
            ],
        }
        if self.tags:
            payload["tags"] = list(self.tags)
        return payload

    @classmethod
    def from_json(cls, payload: dict[str, Any], ys: YSampling) -> Lane3D:
        points = np.asarray(payload["points"], dtype=np.float64).reshape(-1, 4)
        if not ys.matches(points[:, 1]):
            raise LengthMismatch(f"Lane y-values {points[:, 1].tolist()} do not match y-sampling {ys.to_list()}")
        return cls(
            ys=ys,
            xs=points[:, 0],
            zs=points[:, 2],
            vis=points[:, 3],
            category=int(payload.get("category", 1)),
            tags=tuple(payload.get("tags", ())),
        )


@dataclass(frozen=True, eq=False)
class Proposal:
    """A predicted lane with class probabilities; score ignores background class 0."""

    lane: Lane3D
    class_probs: np.ndarray
    anchor_index: int | None = None

    def __post_init__(self) -> None:
        probs = np.array(self.class_probs, dtype=np.float64).reshape(-1)
        if probs.size < 2:
            raise ValueError("class_probs needs the background class and at least one lane class")
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError(f"class_probs must lie in [0, 1]: {probs.tolist()}")
        probs.flags.writeable = False
        object.__setattr__(self, "class_probs", probs)

    @property
    def score(self) -> float:
        return float(self.class_probs[1:].max())

    @property
    def category(self) -> int:
        return int(np.argmax(self.class_probs[1:]) + 1)

    def to_json(self) -> dict[str, Any]:
        payload = self.lane.to_json()
        payload["score"] = self.score
        payload["class_probs"] = [float(p) for p in self.class_probs]
        return payload

    @classmethod
    def from_json(cls, payload: dict[str, Any], ys: YSampling) -> Proposal:
        lane = Lane3D.from_json(payload, ys)
        if "class_probs" in payload:
            probs = np.asarray(payload["class_probs"], dtype=np.float64)
        else:
            # Bare lanes (e.g. ground truth exported as predictions) carry only a score.
            score = float(payload.get("score", 1.0))
            probs = np.zeros(max(2, lane.category + 1))
            probs[lane.category] = score
            probs[0] = 1.0 - score
        return cls(lane=lane, class_probs=probs)


@dataclass(frozen=True)
class Assignment:
    """Positive (gt, anchor) pairs, one block of n per ground truth.

    Nearby ground truths may pick the same anchor; ``owners`` then names the
    closest of them (lower gt index on ties) as that anchor's target.
    """

    pairs: tuple[tuple[int, int], ...]
    negatives: frozenset[int] = field(default_factory=frozenset)
    owners: tuple[tuple[int, int], ...] = ()

    @property
    def positive_anchors(self) -> list[int]:
        return sorted({anchor for _, anchor in self.pairs})

    def gt_by_anchor(self) -> dict[int, int]:
        """anchor -> target gt, one entry per positive anchor."""
        if self.owners:
            return dict(self.owners)
        by_anchor: dict[int, int] = {}
        for gt, anchor in self.pairs:
            by_anchor.setdefault(anchor, gt)
        return by_anchor


def _anchor_arrays(anchors: Sequence[Anchor] | AnchorSet) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(anchors, AnchorSet):
        return anchors.xs, anchors.zs
    return np.stack([a.xs for a in anchors]), np.stack([a.zs for a in anchors])


def anchor_gt_distance(gt: Lane3D, a: Anchor | Lane3D) -> float:
    """Visibility-weighted mean point distance in the x-z plane.

    Raises:
        NoVisiblePoints: the ground truth has no visible point.
    """
    if a.xs.size != gt.n:
        raise LengthMismatch(f"Anchor has {a.xs.size} points, lane has {gt.n}")
    total_vis = gt.vis.sum()
    if total_vis <= 0:
        raise NoVisiblePoints("Ground-truth lane has no visible point")
    dist = np.hypot(gt.xs - a.xs, gt.zs - a.zs)
    return float((gt.vis * dist).sum() / total_vis)


def anchor_gt_distances(gt: Lane3D, anchors: Sequence[Anchor] | AnchorSet) -> np.ndarray:
    """anchor_gt_distance against every anchor at once, shape (M,)."""
    xs, zs = _anchor_arrays(anchors)
    if xs.shape[1] != gt.n:
        raise LengthMismatch(f"Anchors have {xs.shape[1]} points, lane has {gt.n}")
    total_vis = gt.vis.sum()
    if total_vis <= 0:
        raise NoVisiblePoints("Ground-truth lane has no visible point")
    dist = np.hypot(gt.xs[None, :] - xs, gt.zs[None, :] - zs)
    return (dist * gt.vis[None, :]).sum(axis=1) / total_vis


def assign_positives(gts: Sequence[Lane3D], anchors: Sequence[Anchor] | AnchorSet, n: int) -> Assignment:
    """The n nearest anchors of each ground truth, chosen independently.

    Ties go to the lower anchor index; with fewer than n anchors every anchor
    is taken. The result does not depend on ground-truth order.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    m = len(anchors)
    if m == 0:
        raise ValueError("assign_positives needs a non-empty anchor list")
    if not gts:
        return Assignment(pairs=(), negatives=frozenset(range(m)))
    dist = np.stack([anchor_gt_distances(gt, anchors) for gt in gts])
    claimed = np.zeros(m, dtype=bool)
    pairs: list[tuple[int, int]] = []
    for gi in range(len(gts)):
        picked = [int(a) for a in np.argsort(dist[gi], kind="stable")[:n]]
        claimed[picked] = True
        pairs.extend((gi, a) for a in picked)
    claimers: dict[int, list[int]] = {}
    for gi, a in pairs:
        claimers.setdefault(a, []).append(gi)
    # argmin returns the first minimum, i.e. the lower gt index on ties
    owners = tuple((a, int(g[int(np.argmin(dist[g, a]))])) for a, g in sorted(claimers.items()))
    negatives = frozenset(int(a) for a in np.flatnonzero(~claimed))
    return Assignment(pairs=tuple(pairs), negatives=negatives, owners=owners)


def visible_part_distance(a: Lane3D, b: Lane3D, vis_threshold: float = VIS_THRESHOLD) -> float:
    """Mean x-z distance over points visible in both lanes, +inf without overlap."""
    both = (a.vis >= vis_threshold) & (b.vis >= vis_threshold)
    if not both.any():
        return float("inf")
    return float(np.hypot(a.xs[both] - b.xs[both], a.zs[both] - b.zs[both]).mean())


def nms(proposals: Sequence[Proposal], threshold: float, vis_threshold: float = VIS_THRESHOLD) -> list[Proposal]:
    """Greedy suppression by descending score on the visible-part distance."""
    if threshold <= 0:
        raise ValueError(f"NMS threshold must be positive, got {threshold}")
    order = sorted(range(len(proposals)), key=lambda i: -proposals[i].score)
    kept: list[Proposal] = []
    for i in order:
        candidate = proposals[i]
        if all(visible_part_distance(candidate.lane, k.lane, vis_threshold) >= threshold for k in kept):
            kept.append(candidate)
    return kept
