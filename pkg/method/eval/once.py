"""ONCE-style protocol: top-view IoU gate, then unilateral Chamfer distance."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.lane import VIS_THRESHOLD, Lane3D
from core.schemas import OnceEvalConfig
from method.schemas import OnceReport

from .matching import LaneLike, as_lane
from .metrics import prf

_KEY_SHIFT = np.int64(1 << 32)


def _visible_runs(lane: Lane3D) -> list[np.ndarray]:
    """Consecutive runs of visible points as (K, 3) arrays."""
    visible = lane.vis >= VIS_THRESHOLD
    points = lane.points()
    runs, start = [], None
    for k, flag in enumerate([*visible, False]):
        if flag and start is None:
            start = k
        elif not flag and start is not None:
            runs.append(points[start:k])
            start = None
    return runs


def rasterize_top_view(lane: LaneLike, half_width: float, resolution: float) -> np.ndarray:
    """Sorted unique cell keys covered by the visible polyline dilated by ``half_width``."""
    lane = as_lane(lane)
    radius = int(np.ceil(half_width / resolution))
    offsets = np.arange(-radius, radius + 1)
    du, dv = np.meshgrid(offsets, offsets, indexing="ij")
    disc = (du**2 + dv**2) * resolution**2 <= half_width**2
    du, dv = du[disc], dv[disc]
    keys = []
    for run in _visible_runs(lane):
        xy = run[:, :2]
        if len(xy) > 1:
            seg_len = np.linalg.norm(np.diff(xy, axis=0), axis=1)
            samples = [
                xy[i] + np.outer(np.linspace(0.0, 1.0, max(2, int(np.ceil(seg_len[i] / (resolution / 2))) + 1)), xy[i + 1] - xy[i])
                for i in range(len(xy) - 1)
            ]
            xy = np.vstack(samples)
        ix = np.floor(xy[:, 0] / resolution).astype(np.int64)
        iy = np.floor(xy[:, 1] / resolution).astype(np.int64)
        cells_x = (ix[:, None] + du[None, :]).reshape(-1)
        cells_y = (iy[:, None] + dv[None, :]).reshape(-1)
        keys.append(cells_x * _KEY_SHIFT + cells_y)
    if not keys:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(keys))


def top_view_iou(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0 or b.size == 0:
        return 0.0
    inter = np.intersect1d(a, b, assume_unique=True).size
    return inter / (a.size + b.size - inter)


def _point_to_segments(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    seg = ends - starts
    length_sq = np.maximum((seg**2).sum(axis=1), 1e-12)
    rel = points[:, None, :] - starts[None, :, :]
    t = np.clip((rel * seg[None]).sum(axis=2) / length_sq[None], 0.0, 1.0)
    closest = starts[None] + t[..., None] * seg[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2).min(axis=1)


def unilateral_chamfer(pred: LaneLike, gt: LaneLike) -> float:
    """Mean distance from visible prediction points to the visible ground-truth polyline."""
    pred, gt = as_lane(pred), as_lane(gt)
    points = pred.points()[pred.vis >= VIS_THRESHOLD]
    runs = _visible_runs(gt)
    if points.size == 0 or not runs:
        return float("inf")
    starts, ends = [], []
    for run in runs:
        if len(run) == 1:
            starts.append(run)
            ends.append(run)
        else:
            starts.append(run[:-1])
            ends.append(run[1:])
    return float(_point_to_segments(points, np.vstack(starts), np.vstack(ends)).mean())


def _scene_matches(
    preds: Sequence[LaneLike],
    gts: Sequence[Lane3D],
    cfg: OnceEvalConfig,
) -> list[tuple[int, int, float]]:
    """(pred, gt, cd) for IoU-gated matches that pass the Chamfer threshold."""
    if not preds or not gts:
        return []
    pred_cells = [rasterize_top_view(p, cfg.half_width, cfg.resolution) for p in preds]
    gt_cells = [rasterize_top_view(g, cfg.half_width, cfg.resolution) for g in gts]
    iou = np.array([[top_view_iou(p, g) for g in gt_cells] for p in pred_cells])
    cost = np.where(iou >= cfg.iou_threshold, 1.0 - iou, 2.0)
    rows, cols = linear_sum_assignment(cost)
    matches = []
    for r, c in zip(rows, cols, strict=True):
        if iou[r, c] < cfg.iou_threshold:
            continue
        cd = unilateral_chamfer(preds[r], gts[c])
        if cd < cfg.tau_cd:
            matches.append((int(r), int(c), cd))
    return matches


def once_dataset_metrics(
    scenes: Mapping[str, tuple[Sequence[LaneLike], Sequence[Lane3D]]],
    cfg: OnceEvalConfig | None = None,
) -> OnceReport:
    cfg = cfg or OnceEvalConfig()
    n_pred = n_gt = 0
    cds: list[float] = []
    for _, (preds, gts) in sorted(scenes.items()):
        usable = [gt for gt in gts if np.any(gt.vis >= VIS_THRESHOLD)]
        n_pred += len(preds)
        n_gt += len(usable)
        cds.extend(cd for _, _, cd in _scene_matches(list(preds), usable, cfg))
    precision, recall, f1 = prf(len(cds), n_pred, n_gt)
    return OnceReport(
        f1=f1,
        precision=precision,
        recall=recall,
        cd_error=float(np.mean(cds)) if cds else 0.0,
        tau_cd=cfg.tau_cd,
        num_predictions=n_pred,
        num_ground_truth=n_gt,
        true_positives=len(cds),
    )


def once_metrics(preds: Sequence[LaneLike], gts: Sequence[Lane3D], tau_cd: float, cfg: OnceEvalConfig | None = None) -> OnceReport:
    if tau_cd <= 0:
        raise ValueError(f"tau_cd must be positive, got {tau_cd}")
    cfg = (cfg or OnceEvalConfig()).model_copy(update={"tau_cd": tau_cd})
    return once_dataset_metrics({"scene": (preds, gts)}, cfg)
