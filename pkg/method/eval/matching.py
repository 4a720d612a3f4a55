"""Lane-to-lane costs and minimum-cost one-to-one matching."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.lane import VIS_THRESHOLD, Lane3D, Proposal
from core.schemas import EvalConfig

LaneLike = Lane3D | Proposal


def as_lane(item: LaneLike) -> Lane3D:
    return item.lane if isinstance(item, Proposal) else item


def point_distances(pred: LaneLike, gt: LaneLike, missing_dist: float) -> np.ndarray:
    """Per-point 3D distances; NaN where the ground truth is not visible.

    A visible ground-truth point the prediction does not cover costs
    ``missing_dist``.
    """
    pred, gt = as_lane(pred), as_lane(gt)
    dist = np.hypot(pred.xs - gt.xs, pred.zs - gt.zs)
    dist = np.where(pred.vis >= VIS_THRESHOLD, dist, missing_dist)
    return np.where(gt.vis >= VIS_THRESHOLD, dist, np.nan)


def cost_from_distances(distances: np.ndarray, squared: bool = False) -> float:
    evaluated = distances[~np.isnan(distances)]
    total = float((evaluated**2).sum()) if squared else float(evaluated.sum())
    return math.sqrt(total)


def pairwise_cost(pred: LaneLike, gt: LaneLike, squared: bool = False, missing_dist: float = 1.5) -> float:
    """sqrt of the summed point distances over evaluated points (squared distances with ``squared``)."""
    return cost_from_distances(point_distances(pred, gt, missing_dist), squared)


@dataclass(frozen=True, eq=False)
class MatchResult:
    pairs: tuple[tuple[int, int, np.ndarray], ...]
    unmatched_preds: frozenset[int]
    unmatched_gts: frozenset[int]
    total_cost: float = 0.0


def unmatched_cost(n_points: int, cfg: EvalConfig) -> float:
    return cfg.tp_dist * math.sqrt(n_points)


def cost_matrix(preds: Sequence[LaneLike], gts: Sequence[LaneLike], cfg: EvalConfig) -> tuple[np.ndarray, list[list[np.ndarray]]]:
    distances = [[point_distances(p, g, cfg.tp_dist) for g in gts] for p in preds]
    costs = np.array(
        [[cost_from_distances(d, cfg.squared_cost) for d in row] for row in distances],
        dtype=np.float64,
    ).reshape(len(preds), len(gts))
    return costs, distances


def solve_assignment(costs: np.ndarray, cap: float) -> list[tuple[int, int]]:
    """Min-cost matching where leaving a lane unmatched costs ``cap``.

    The (P + G) square matrix pads predictions and ground truths with dummy
    partners; for unit capacities this equals min-cost flow.
    """
    p, g = costs.shape
    if p == 0 or g == 0:
        return []
    padded = np.zeros((p + g, g + p))
    padded[:p, :g] = costs
    padded[:p, g:] = cap
    padded[p:, :g] = cap
    rows, cols = linear_sum_assignment(padded)
    return [(int(r), int(c)) for r, c in zip(rows, cols, strict=True) if r < p and c < g]


def match_lanes(preds: Sequence[LaneLike], gts: Sequence[LaneLike], cfg: EvalConfig | None = None) -> MatchResult:
    cfg = cfg or EvalConfig()
    if not preds or not gts:
        return MatchResult((), frozenset(range(len(preds))), frozenset(range(len(gts))))
    n_points = as_lane(gts[0]).n
    costs, distances = cost_matrix(preds, gts, cfg)
    cap = unmatched_cost(n_points, cfg)
    matched = solve_assignment(costs, cap)
    total = sum(costs[r, c] for r, c in matched) + cap * (len(preds) + len(gts) - 2 * len(matched))
    return MatchResult(
        pairs=tuple((r, c, distances[r][c]) for r, c in matched),
        unmatched_preds=frozenset(set(range(len(preds))) - {r for r, _ in matched}),
        unmatched_gts=frozenset(set(range(len(gts))) - {c for _, c in matched}),
        total_cost=float(total),
    )
