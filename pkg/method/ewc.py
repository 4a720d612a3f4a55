"""Equal-width post-optimization of lane x-coordinates.

For every ordered pair of comparable lanes (j, j') the width profile is
w^k = |x_j^k - x_j'^k| * cos(theta_j^k), theta being lane j's heading in the
x-y plane. The objective penalizes each profile's deviation from its own
mean plus an L2 penalty on the adjustments.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, replace

import numpy as np
from loguru import logger

from core.anchor import YSampling
from core.exceptions import TooFewLanes
from core.lane import VIS_THRESHOLD, Lane3D
from core.schemas import EwcConfig


@dataclass(frozen=True)
class LanePair:
    """Ordered pair; ``points`` are the indices where both lanes are visible."""

    j: int
    k: int
    points: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class EwcAdjustment:
    dx_adj: np.ndarray


@dataclass(frozen=True, eq=False)
class EwcResult:
    adjustment: EwcAdjustment
    pairs: tuple[LanePair, ...]
    initial_objective: float
    final_objective: float
    accepted_steps: int


def difference_matrix(ys: YSampling) -> np.ndarray:
    """D with (D @ x)[k] = dx/dy: central inside, one-sided at the ends."""
    y = ys.ys
    n = y.size
    d = np.zeros((n, n))
    d[0, 0], d[0, 1] = -1.0 / (y[1] - y[0]), 1.0 / (y[1] - y[0])
    d[-1, -2], d[-1, -1] = -1.0 / (y[-1] - y[-2]), 1.0 / (y[-1] - y[-2])
    for k in range(1, n - 1):
        span = y[k + 1] - y[k - 1]
        d[k, k - 1], d[k, k + 1] = -1.0 / span, 1.0 / span
    return d


def pair_width_profile(
    a: Lane3D,
    b: Lane3D,
    adj_a: np.ndarray | None = None,
    adj_b: np.ndarray | None = None,
) -> np.ndarray:
    """Widths at every sampled y, measured along lane a's normal."""
    xa = a.xs + (0.0 if adj_a is None else adj_a)
    xb = b.xs + (0.0 if adj_b is None else adj_b)
    slope = difference_matrix(a.ys) @ xa
    return np.abs(xa - xb) / np.sqrt(1.0 + slope**2)


def width_variation(widths: np.ndarray) -> float:
    """Sum of absolute deviations from the mean width."""
    widths = np.asarray(widths, dtype=np.float64)
    return float(np.abs(widths - widths.mean()).sum())


def comparable_pairs(lanes: Sequence[Lane3D], min_common_points: int = 3) -> list[LanePair]:
    pairs = []
    for j, a in enumerate(lanes):
        for k, b in enumerate(lanes):
            if j == k:
                continue
            common = np.flatnonzero((a.vis >= VIS_THRESHOLD) & (b.vis >= VIS_THRESHOLD))
            if common.size >= min_common_points:
                pairs.append(LanePair(j, k, tuple(int(i) for i in common)))
    return pairs


def is_fork(a: Lane3D, b: Lane3D, points: Sequence[int], slope_threshold: float) -> bool:
    """Raw widths drifting faster than ``slope_threshold`` m/m mark a fork or merge."""
    idx = list(points)
    widths = pair_width_profile(a, b)[idx]
    slope = np.polyfit(a.ys.ys[idx], widths, 1)[0]
    return bool(abs(slope) > slope_threshold)


def non_fork_pairs(lanes: Sequence[Lane3D], cfg: EwcConfig) -> list[LanePair]:
    pairs = comparable_pairs(lanes, cfg.min_common_points)
    forks = {
        frozenset((p.j, p.k))
        for p in pairs
        if is_fork(lanes[p.j], lanes[p.k], p.points, cfg.fork_slope_threshold)
    }
    return [p for p in pairs if frozenset((p.j, p.k)) not in forks]


def _check(lanes: Sequence[Lane3D], pairs: Sequence[LanePair]) -> None:
    if len(lanes) < 2:
        raise TooFewLanes(f"Equal-width refinement needs 2 or more lanes, got {len(lanes)}")
    if not pairs:
        raise TooFewLanes("No lane pair shares enough visible points")


def ewc_objective(
    lanes: Sequence[Lane3D],
    adjustments: np.ndarray | None,
    alpha: float,
    pairs: Sequence[LanePair] | None = None,
) -> float:
    """Mean width variation over ordered pairs plus alpha * mean adjustment norm.

    Raises:
        TooFewLanes: fewer than two lanes or no comparable pair.
    """
    pairs = comparable_pairs(lanes) if pairs is None else pairs
    _check(lanes, pairs)
    q = len(lanes)
    adj = np.zeros((q, lanes[0].n)) if adjustments is None else np.asarray(adjustments, dtype=np.float64)
    width_term = 0.0
    for p in pairs:
        widths = pair_width_profile(lanes[p.j], lanes[p.k], adj[p.j], adj[p.k])
        width_term += width_variation(widths[list(p.points)])
    regularizer = float(np.linalg.norm(adj, axis=1).sum())
    return width_term / (q * (q - 1)) + alpha * regularizer / q


def ewc_gradient(
    lanes: Sequence[Lane3D],
    adjustments: np.ndarray,
    alpha: float,
    pairs: Sequence[LanePair],
) -> np.ndarray:
    """Analytic (sub)gradient of ewc_objective, shape (Q, N); zero at |adj| = 0."""
    _check(lanes, pairs)
    q = len(lanes)
    adj = np.asarray(adjustments, dtype=np.float64)
    grad = np.zeros_like(adj)
    d = difference_matrix(lanes[0].ys)
    coef = 1.0 / (q * (q - 1))
    for p in pairs:
        idx = list(p.points)
        xa = lanes[p.j].xs + adj[p.j]
        xb = lanes[p.k].xs + adj[p.k]
        slope = d @ xa
        gap = xa - xb
        cos = 1.0 / np.sqrt(1.0 + slope**2)
        widths = np.abs(gap) * cos
        dev_sign = np.sign(widths[idx] - widths[idx].mean())
        d_w = np.zeros_like(gap)
        d_w[idx] = coef * (dev_sign - dev_sign.mean())
        d_gap = d_w * np.sign(gap) * cos
        d_slope = d_w * (-np.abs(gap) * slope * cos**3)
        grad[p.j] += d_gap + d.T @ d_slope
        grad[p.k] -= d_gap
    norms = np.linalg.norm(adj, axis=1)
    nonzero = norms > 0
    grad[nonzero] += alpha / q * adj[nonzero] / norms[nonzero, None]
    return grad


def ewc_gradient_check(
    lanes: Sequence[Lane3D],
    adjustments: np.ndarray,
    alpha: float,
    pairs: Sequence[LanePair] | None = None,
    step: float = 1e-6,
) -> float:
    """Max relative error of ewc_gradient against central differences."""
    pairs = comparable_pairs(lanes) if pairs is None else pairs
    adj = np.array(adjustments, dtype=np.float64)
    analytic = ewc_gradient(lanes, adj, alpha, pairs)
    worst = 0.0
    for index in np.ndindex(adj.shape):
        original = adj[index]
        adj[index] = original + step
        plus = ewc_objective(lanes, adj, alpha, pairs)
        adj[index] = original - step
        minus = ewc_objective(lanes, adj, alpha, pairs)
        adj[index] = original
        numeric = (plus - minus) / (2.0 * step)
        a = analytic[index]
        worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))
    return worst


def solve_equal_width(lanes: Sequence[Lane3D], cfg: EwcConfig) -> EwcResult:
    """Gradient descent with step halving; stops when no halving is accepted.

    Raises:
        TooFewLanes: nothing to compare after dropping fork pairs.
    """
    if len(lanes) < 2:
        raise TooFewLanes(f"Equal-width refinement needs 2 or more lanes, got {len(lanes)}")
    pairs = non_fork_pairs(lanes, cfg)
    _check(lanes, pairs)
    adj = np.zeros((len(lanes), lanes[0].n))
    objective = initial = ewc_objective(lanes, adj, cfg.alpha, pairs)
    accepted = 0
    for _ in range(cfg.steps):
        grad = ewc_gradient(lanes, adj, cfg.alpha, pairs)
        if not np.any(grad):
            break
        eta = cfg.step_size
        for _ in range(cfg.max_halvings + 1):
            trial = adj - eta * grad
            trial_objective = ewc_objective(lanes, trial, cfg.alpha, pairs)
            if trial_objective <= objective:
                adj, objective = trial, trial_objective
                accepted += 1
                break
            eta /= 2.0
        else:
            break
    return EwcResult(EwcAdjustment(adj), tuple(pairs), initial, objective, accepted)


def optimize_equal_width(lanes: Sequence[Lane3D], cfg: EwcConfig) -> list[Lane3D]:
    """Lanes with x shifted by the optimized adjustments; everything else untouched.

    Returns the input unchanged when there is nothing to compare.
    """
    try:
        result = solve_equal_width(lanes, cfg)
    except TooFewLanes as exc:
        logger.warning("Equal-width refinement skipped: {}", exc)
        return list(lanes)
    logger.debug(
        "Equal-width objective {:.5f} -> {:.5f} after {} steps",
        result.initial_objective,
        result.final_objective,
        result.accepted_steps,
    )
    return [replace(lane, xs=lane.xs + result.adjustment.dx_adj[i]) for i, lane in enumerate(lanes)]
