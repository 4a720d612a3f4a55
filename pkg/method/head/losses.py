"""Focal classification loss, visibility-weighted L1 regression and their gradients.

Normalization: classification is averaged over all proposals, regression
over positive proposals.
"""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np

from config.constants import FOCAL_PROB_CLAMP
from core.schemas import TrainConfig

from .batch import TrainingBatch
from .model import ForwardCache, HeadParams, forward_batch
from .temporal import fuse_features, fuse_features_backward

GradFn = Callable[[HeadParams, TrainingBatch, TrainConfig], dict[str, np.ndarray]]


def _focal(p_raw: np.ndarray, alpha: float, gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-proposal focal terms, d(term)/dp and the clamp mask."""
    p = np.clip(p_raw, FOCAL_PROB_CLAMP, 1.0 - FOCAL_PROB_CLAMP)
    clamped = p != p_raw
    one_minus = 1.0 - p
    log_p = np.log(p)
    terms = -alpha * one_minus**gamma * log_p
    d_p = alpha * gamma * one_minus ** (gamma - 1.0) * log_p - alpha * one_minus**gamma / p
    d_p[clamped] = 0.0
    return terms, d_p, clamped


def classification_loss(probs: np.ndarray, labels: np.ndarray, cfg: TrainConfig) -> float:
    """Mean focal loss of each proposal's target class (background 0 for negatives)."""
    probs = np.atleast_2d(probs)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    p_target = probs[np.arange(labels.size), labels]
    terms, _, _ = _focal(p_target, cfg.focal_alpha, cfg.focal_gamma)
    return float(terms.mean()) if terms.size else 0.0


def regression_loss(
    dx: np.ndarray,
    dz: np.ndarray,
    vis: np.ndarray,
    anchor_xs: np.ndarray,
    anchor_zs: np.ndarray,
    gt_xs: np.ndarray,
    gt_zs: np.ndarray,
    gt_vis: np.ndarray,
) -> float:
    """Mean over positives of |v(x+dx-x_gt)|_1 + |v(z+dz-z_gt)|_1 + |v - vis|_1; all arrays (P, N)."""
    gt_vis = np.atleast_2d(gt_vis)
    if gt_vis.shape[0] == 0:
        return 0.0
    per_positive = (
        np.abs(gt_vis * (anchor_xs + dx - gt_xs)).sum(axis=-1)
        + np.abs(gt_vis * (anchor_zs + dz - gt_zs)).sum(axis=-1)
        + np.abs(gt_vis - vis).sum(axis=-1)
    )
    return float(per_positive.mean())


def _fused_features(params: HeadParams, batch: TrainingBatch) -> np.ndarray:
    if params.fusion_strategy is None:
        return batch.features
    # First frames have no history; they fuse with themselves.
    previous = batch.prev_features if batch.prev_features is not None else batch.features
    return fuse_features(batch.features, previous, params.fusion_strategy, params.tensors)


def batch_losses(params: HeadParams, batch: TrainingBatch, cfg: TrainConfig) -> tuple[float, float, ForwardCache]:
    cache = forward_batch(_fused_features(params, batch), params)
    cls = classification_loss(cache.probs, batch.labels, cfg)
    pos = batch.positives
    reg = regression_loss(
        cache.dx[pos],
        cache.dz[pos],
        cache.vis[pos],
        batch.anchor_xs[pos],
        batch.anchor_zs[pos],
        batch.gt_xs,
        batch.gt_zs,
        batch.gt_vis,
    )
    return cls, reg, cache


def total_loss(params: HeadParams, batch: TrainingBatch, cfg: TrainConfig) -> float:
    cls, reg, _ = batch_losses(params, batch, cfg)
    return cfg.lambda_cls * cls + cfg.lambda_reg * reg


def loss_and_gradients(
    params: HeadParams,
    batch: TrainingBatch,
    cfg: TrainConfig,
) -> tuple[float, dict[str, np.ndarray], bytes]:
    """Total loss, analytic gradients for every tensor, and a kink signature.

    The signature records every non-smooth switch (ReLU gates, L1 signs,
    probability clamps); finite differences are only comparable while it
    stays fixed.
    """
    t = params.tensors
    n = params.n_points
    fused = _fused_features(params, batch)
    cache = forward_batch(fused, params)
    m = batch.size

    idx = np.arange(m)
    p_target = cache.probs[idx, batch.labels]
    terms, d_p, clamped = _focal(p_target, cfg.focal_alpha, cfg.focal_gamma)
    cls = float(terms.mean()) if m else 0.0
    onehot = np.zeros_like(cache.probs)
    onehot[idx, batch.labels] = 1.0
    d_logits = cfg.lambda_cls * (d_p / max(m, 1))[:, None] * p_target[:, None] * (onehot - cache.probs)

    pos = batch.positives
    p_count = pos.shape[0]
    d_reg = np.zeros((m, 2 * n))
    d_vis_logit = np.zeros((m, n))
    signs = [np.zeros(0)] * 3
    reg = 0.0
    if p_count:
        rx = batch.anchor_xs[pos] + cache.dx[pos] - batch.gt_xs
        rz = batch.anchor_zs[pos] + cache.dz[pos] - batch.gt_zs
        rv = cache.vis[pos] - batch.gt_vis
        gv = batch.gt_vis
        reg = float((np.abs(gv * rx).sum(-1) + np.abs(gv * rz).sum(-1) + np.abs(rv).sum(-1)).mean())
        scale = cfg.lambda_reg / p_count
        d_reg[pos, :n] = scale * gv * np.sign(rx)
        d_reg[pos, n:] = scale * gv * np.sign(rz)
        v = cache.vis[pos]
        d_vis_logit[pos] = scale * np.sign(rv) * v * (1.0 - v)
        signs = [np.sign(rx), np.sign(rz), np.sign(rv)]

    grads: dict[str, np.ndarray] = {
        "Wc": cache.h.T @ d_logits,
        "bc": d_logits.sum(axis=0),
        "Wr": cache.h.T @ d_reg,
        "br": d_reg.sum(axis=0),
        "Wv": cache.h.T @ d_vis_logit,
        "bv": d_vis_logit.sum(axis=0),
    }
    d_h = d_logits @ t["Wc"].T + d_reg @ t["Wr"].T + d_vis_logit @ t["Wv"].T
    d_h_pre = d_h * (cache.h_pre > 0)
    grads["W1"] = cache.x.T @ d_h_pre
    grads["b1"] = d_h_pre.sum(axis=0)
    if params.fusion_strategy is not None:
        d_fused = (d_h_pre @ t["W1"].T).reshape(fused.shape)
        previous = batch.prev_features if batch.prev_features is not None else batch.features
        grads.update(fuse_features_backward(d_fused, batch.features, previous, params.fusion_strategy, t))

    loss = cfg.lambda_cls * cls + cfg.lambda_reg * reg
    signature = b"".join(
        [
            (cache.h_pre > 0).tobytes(),
            clamped.tobytes(),
            *(s.astype(np.int8).tobytes() for s in signs),
        ]
    )
    return loss, grads, signature


def analytic_gradients(params: HeadParams, batch: TrainingBatch, cfg: TrainConfig) -> dict[str, np.ndarray]:
    return loss_and_gradients(params, batch, cfg)[1]


def gradient_check(
    params: HeadParams,
    batch: TrainingBatch,
    cfg: TrainConfig,
    *,
    num_samples: int = 200,
    step: float = 1e-5,
    seed: int = 0,
    grad_fn: GradFn | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples are stratified over every tensor. Samples that flip a
    kink (see loss_and_gradients) are replaced by fresh ones.
    """
    grad_fn = grad_fn or analytic_gradients
    grads = grad_fn(params, batch, cfg)
    _, _, base_signature = loss_and_gradients(params, batch, cfg)
    shifted = params.copy()
    rng = np.random.default_rng(seed)

    sizes = {name: shifted.tensors[name].size for name in shifted.names}
    total = sum(sizes.values())
    queues: dict[str, list[int]] = {
        name: rng.permutation(size).tolist() for name, size in sizes.items()
    }
    quota = {name: max(8, math.ceil(num_samples * size / total)) for name, size in sizes.items()}

    worst = 0.0
    evaluated = 0
    while True:
        progressed = False
        for name in shifted.names:
            taken = 0
            while queues[name] and taken < quota[name]:
                flat = queues[name].pop()
                tensor = shifted.tensors[name].reshape(-1)
                original = tensor[flat]
                tensor[flat] = original + step
                loss_plus, _, sig_plus = loss_and_gradients(shifted, batch, cfg)
                tensor[flat] = original - step
                loss_minus, _, sig_minus = loss_and_gradients(shifted, batch, cfg)
                tensor[flat] = original
                if sig_plus != base_signature or sig_minus != base_signature:
                    continue
                numeric = (loss_plus - loss_minus) / (2.0 * step)
                analytic = float(grads[name].reshape(-1)[flat])
                error = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
                worst = max(worst, error)
                evaluated += 1
                taken += 1
                progressed = True
        if evaluated >= num_samples or not progressed:
            break
    return worst
