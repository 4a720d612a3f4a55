"""Fusing anchor features sampled in the current and a previous frame."""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from core.exceptions import ShapeMismatch, UnknownStrategy
from core.sampling import AnchorFeature

FUSION_STRATEGIES: tuple[str, ...] = ("weighted_sum", "linear")


def _check_strategy(strategy: str) -> None:
    if strategy not in FUSION_STRATEGIES:
        raise UnknownStrategy(f"Unknown fusion strategy '{strategy}', choose from {list(FUSION_STRATEGIES)}")


def fusion_shapes(strategy: str, n_points: int, channels: int) -> dict[str, tuple[int, ...]]:
    _check_strategy(strategy)
    if strategy == "weighted_sum":
        return {"Fw": (n_points, 2)}
    return {"Fl": (2 * channels, channels), "Fb": (channels,)}


def init_fusion_tensors(strategy: str, n_points: int, channels: int) -> dict[str, np.ndarray]:
    """Both strategies start as the plain mean of the two frames."""
    _check_strategy(strategy)
    if strategy == "weighted_sum":
        return {"Fw": np.full((n_points, 2), 0.5)}
    eye = np.eye(channels)
    return {"Fl": np.vstack([0.5 * eye, 0.5 * eye]), "Fb": np.zeros(channels)}


def fuse_features(
    current: np.ndarray,
    previous: np.ndarray,
    strategy: str,
    tensors: Mapping[str, np.ndarray],
) -> np.ndarray:
    """Fuse (M, N, C) feature stacks.

    weighted_sum: per y-coordinate weights (w_cur, w_prev).
    linear: concat([cur, prev]) @ Fl + Fb, back to C channels.
    """
    _check_strategy(strategy)
    if current.shape != previous.shape:
        raise ShapeMismatch(f"Current {current.shape} and previous {previous.shape} features differ")
    if strategy == "weighted_sum":
        w = tensors["Fw"]
        return w[None, :, 0:1] * current + w[None, :, 1:2] * previous
    stacked = np.concatenate([current, previous], axis=-1)
    return stacked @ tensors["Fl"] + tensors["Fb"]


def fuse_features_backward(
    d_fused: np.ndarray,
    current: np.ndarray,
    previous: np.ndarray,
    strategy: str,
    tensors: Mapping[str, np.ndarray],
) -> dict[str, np.ndarray]:
    """Gradients of the fusion weights given d(loss)/d(fused)."""
    _check_strategy(strategy)
    if strategy == "weighted_sum":
        grad = np.stack(
            [(d_fused * current).sum(axis=(0, 2)), (d_fused * previous).sum(axis=(0, 2))],
            axis=1,
        )
        return {"Fw": grad}
    stacked = np.concatenate([current, previous], axis=-1).reshape(-1, 2 * current.shape[-1])
    flat = d_fused.reshape(-1, d_fused.shape[-1])
    return {"Fl": stacked.T @ flat, "Fb": flat.sum(axis=0)}


def fuse_temporal(
    current: AnchorFeature,
    previous: AnchorFeature,
    strategy: str,
    fusion_params: Mapping[str, np.ndarray],
) -> AnchorFeature:
    """Single-anchor fusion; the valid mask is the OR of both frames."""
    _check_strategy(strategy)
    if current.per_point.shape != previous.per_point.shape:
        raise ShapeMismatch(f"Current {current.per_point.shape} and previous {previous.per_point.shape} differ")
    fused = fuse_features(current.per_point[None], previous.per_point[None], strategy, fusion_params)[0]
    return AnchorFeature(per_point=fused, valid_mask=current.valid_mask | previous.valid_mask)
