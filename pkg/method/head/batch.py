from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from core.anchor import AnchorSet
from core.exceptions import ShapeMismatch
from core.lane import Assignment, Lane3D


@dataclass(frozen=True, eq=False)
class TrainingBatch:
    """One scene's proposals with their targets.

    labels: (M,) target class per proposal, 0 for negatives.
    positives: (P,) proposal indices; gt_* rows align with it.
    prev_features: optional (M, N, C) features from a previous frame.
    """

    features: np.ndarray
    anchor_xs: np.ndarray
    anchor_zs: np.ndarray
    labels: np.ndarray
    positives: np.ndarray
    gt_xs: np.ndarray
    gt_zs: np.ndarray
    gt_vis: np.ndarray
    prev_features: np.ndarray | None = None

    def __post_init__(self) -> None:
        m, n, _ = self.features.shape
        if self.anchor_xs.shape != (m, n) or self.anchor_zs.shape != (m, n):
            raise ShapeMismatch(f"Anchor arrays must be ({m}, {n})")
        if self.labels.shape != (m,):
            raise ShapeMismatch(f"labels must be ({m},), got {self.labels.shape}")
        p = self.positives.shape[0]
        for name in ("gt_xs", "gt_zs", "gt_vis"):
            if getattr(self, name).shape != (p, n):
                raise ShapeMismatch(f"{name} must be ({p}, {n}), got {getattr(self, name).shape}")
        if self.prev_features is not None and self.prev_features.shape != self.features.shape:
            raise ShapeMismatch(f"prev_features {self.prev_features.shape} != features {self.features.shape}")

    @property
    def size(self) -> int:
        return int(self.features.shape[0])


def build_training_batch(
    anchors: AnchorSet,
    features: np.ndarray,
    gts: Sequence[Lane3D],
    assignment: Assignment,
    prev_features: np.ndarray | None = None,
) -> TrainingBatch:
    m = len(anchors)
    labels = np.zeros(m, dtype=np.int64)
    owners = sorted(assignment.gt_by_anchor().items())
    positives = np.array([a for a, _ in owners], dtype=np.int64)
    gt_index = [g for _, g in owners]
    for a, g in owners:
        labels[a] = gts[g].category
    n = anchors.ys.n
    if gt_index:
        gt_xs = np.stack([gts[g].xs for g in gt_index])
        gt_zs = np.stack([gts[g].zs for g in gt_index])
        gt_vis = np.stack([gts[g].vis for g in gt_index])
    else:
        gt_xs = gt_zs = gt_vis = np.zeros((0, n))
    return TrainingBatch(
        features=np.asarray(features, dtype=np.float64),
        anchor_xs=np.asarray(anchors.xs),
        anchor_zs=np.asarray(anchors.zs),
        labels=labels,
        positives=positives,
        gt_xs=gt_xs,
        gt_zs=gt_zs,
        gt_vis=gt_vis,
        prev_features=None if prev_features is None else np.asarray(prev_features, dtype=np.float64),
    )
