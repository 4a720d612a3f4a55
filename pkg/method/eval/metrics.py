"""Standard protocol: matched lanes, F1/AP over score thresholds, x/z errors by range."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from loguru import logger

from core.exceptions import EmptyGroundTruth
from core.lane import VIS_THRESHOLD, Lane3D, Proposal
from core.schemas import EvalConfig
from method.schemas import MetricsReport

from .matching import LaneLike, as_lane, cost_matrix, solve_assignment, unmatched_cost

SceneLanes = tuple[Sequence[LaneLike], Sequence[Lane3D]]


def _score(item: LaneLike) -> float:
    return item.score if isinstance(item, Proposal) else 1.0


def prf(tp: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def is_true_positive(distances: np.ndarray, cfg: EvalConfig) -> bool:
    """Enough evaluated points lie within tp_dist."""
    evaluated = distances[~np.isnan(distances)]
    if evaluated.size == 0:
        return False
    return bool((evaluated < cfg.tp_dist).mean() >= cfg.tp_point_frac)


def average_precision(recalls: Sequence[float], precisions: Sequence[float]) -> float:
    """All-point interpolated area under the precision-recall curve."""
    if not recalls:
        return 0.0
    order = np.argsort(np.asarray(recalls), kind="stable")
    mrec = np.concatenate([[0.0], np.asarray(recalls)[order], [1.0]])
    mpre = np.concatenate([[0.0], np.asarray(precisions)[order], [0.0]])
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]).sum())


@dataclass
class _Scene:
    scene_id: str
    preds: list[LaneLike]
    gts: list[Lane3D]
    scores: np.ndarray
    costs: np.ndarray
    distances: list[list[np.ndarray]]
    cap: float

    def true_positives(self, threshold: float, cfg: EvalConfig) -> list[tuple[int, int]]:
        keep = np.flatnonzero(self.scores >= threshold)
        if keep.size == 0 or not self.gts:
            return []
        matched = solve_assignment(self.costs[keep], self.cap)
        return [
            (int(keep[r]), c)
            for r, c in matched
            if is_true_positive(self.distances[keep[r]][c], cfg)
        ]


def _prepare(scene_id: str, preds: Sequence[LaneLike], gts: Sequence[Lane3D], cfg: EvalConfig) -> _Scene:
    usable = [gt for gt in gts if np.any(gt.vis >= VIS_THRESHOLD)]
    if len(usable) != len(gts):
        logger.debug("Scene {}: ignoring {} ground-truth lanes without visible points", scene_id, len(gts) - len(usable))
    preds = list(preds)
    n_points = as_lane(usable[0]).n if usable else (as_lane(preds[0]).n if preds else 1)
    costs, distances = cost_matrix(preds, usable, cfg)
    return _Scene(
        scene_id=scene_id,
        preds=preds,
        gts=usable,
        scores=np.array([_score(p) for p in preds], dtype=np.float64),
        costs=costs,
        distances=distances,
        cap=unmatched_cost(n_points, cfg),
    )


def _range_errors(scenes: Sequence[_Scene], matches: Mapping[str, list[tuple[int, int]]], cfg: EvalConfig) -> dict[str, float]:
    sums = {key: [] for key in ("x_close", "x_far", "z_close", "z_far")}
    for scene in scenes:
        for pi, gi in matches[scene.scene_id]:
            pred, gt = as_lane(scene.preds[pi]), scene.gts[gi]
            both = (pred.vis >= VIS_THRESHOLD) & (gt.vis >= VIS_THRESHOLD)
            y = gt.ys.ys
            for band, (lo, hi) in (("close", cfg.close_range), ("far", cfg.far_range)):
                in_band = both & (y > lo) & (y <= hi)
                sums[f"x_{band}"].extend(np.abs(pred.xs[in_band] - gt.xs[in_band]).tolist())
                sums[f"z_{band}"].extend(np.abs(pred.zs[in_band] - gt.zs[in_band]).tolist())
    return {key: float(np.mean(values)) if values else 0.0 for key, values in sums.items()}


def _evaluate(scenes: list[_Scene], cfg: EvalConfig, with_tags: bool) -> MetricsReport:
    n_gt = sum(len(s.gts) for s in scenes)
    n_pred_total = sum(len(s.preds) for s in scenes)
    if n_gt == 0:
        if cfg.strict:
            raise EmptyGroundTruth("Cannot evaluate against zero visible ground-truth lanes")
        logger.warning("Evaluating against empty ground truth; reporting zeros")
        return MetricsReport(num_predictions=n_pred_total)

    thresholds = sorted({float(s) for scene in scenes for s in scene.scores}, reverse=True)
    scenes_at_score: dict[float, set[str]] = {}
    for scene in scenes:
        for s in scene.scores:
            scenes_at_score.setdefault(float(s), set()).add(scene.scene_id)

    by_id = {scene.scene_id: scene for scene in scenes}
    current: dict[str, list[tuple[int, int]]] = {scene.scene_id: [] for scene in scenes}
    n_pred = 0
    recalls, precisions = [], []
    best = (-1.0, None, 0.0, 0.0, dict(current))
    for threshold in thresholds:
        for scene_id in sorted(scenes_at_score[threshold]):
            current[scene_id] = by_id[scene_id].true_positives(threshold, cfg)
        n_pred = sum(int((scene.scores >= threshold).sum()) for scene in scenes)
        tp = sum(len(v) for v in current.values())
        precision, recall, f1 = prf(tp, n_pred, n_gt)
        recalls.append(recall)
        precisions.append(precision)
        if f1 > best[0]:
            best = (f1, threshold, precision, recall, dict(current))

    f1, threshold, precision, recall, matches = best
    f1 = max(f1, 0.0)
    tp_total = sum(len(v) for v in matches.values())
    correct = sum(
        by_id[sid].preds[pi].category == by_id[sid].gts[gi].category for sid, pairs in matches.items() for pi, gi in pairs
    )
    errors = _range_errors(scenes, matches, cfg)

    per_tag: dict[str, float] = {}
    if with_tags:
        tags = sorted({tag for scene in scenes for gt in scene.gts for tag in gt.tags})
        for tag in tags:
            subset = [scene for scene in scenes if any(tag in gt.tags for gt in scene.gts)]
            per_tag[tag] = _evaluate(subset, cfg, with_tags=False).f1

    return MetricsReport(
        f1=f1,
        ap=average_precision(recalls, precisions),
        precision=precision,
        recall=recall,
        x_err_close=errors["x_close"],
        x_err_far=errors["x_far"],
        z_err_close=errors["z_close"],
        z_err_far=errors["z_far"],
        category_accuracy=correct / tp_total if tp_total else 0.0,
        score_threshold=threshold,
        num_predictions=n_pred_total,
        num_ground_truth=n_gt,
        true_positives=tp_total,
        per_tag_f1=per_tag,
    )


def compute_dataset_metrics(scenes: Mapping[str, SceneLanes], cfg: EvalConfig | None = None) -> MetricsReport:
    """Metrics over many scenes; matching happens within each scene."""
    cfg = cfg or EvalConfig()
    prepared = [_prepare(scene_id, preds, gts, cfg) for scene_id, (preds, gts) in sorted(scenes.items())]
    return _evaluate(prepared, cfg, with_tags=True)


def compute_metrics(preds: Sequence[LaneLike], gts: Sequence[Lane3D], cfg: EvalConfig | None = None) -> MetricsReport:
    return compute_dataset_metrics({"scene": (preds, gts)}, cfg)
