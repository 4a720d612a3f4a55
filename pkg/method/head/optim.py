from __future__ import annotations

import numpy as np

from core.exceptions import NonFiniteGradient
from core.schemas import TrainConfig

from .batch import TrainingBatch
from .losses import loss_and_gradients
from .model import HeadParams


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    step: int,
    *,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One AdamW update; ``step`` is 1-based. Returns (param, m, v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    param = param - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * param)
    return param, m, v


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    """Step decay: lr * factor once ``lr_decay_step`` updates have happened."""
    if cfg.lr_decay_step is not None and step > cfg.lr_decay_step:
        return cfg.learning_rate * cfg.lr_decay_factor
    return cfg.learning_rate


def backward_and_step(
    params: HeadParams,
    batch: TrainingBatch,
    cfg: TrainConfig,
) -> tuple[HeadParams, float]:
    """Return updated params and the pre-step loss.

    Raises:
        NonFiniteGradient: any gradient entry is NaN or infinite.
    """
    loss, grads, _ = loss_and_gradients(params, batch, cfg)
    for name in params.names:
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(name)
    updated = params.copy()
    updated.step = params.step + 1
    lr = learning_rate_at(cfg, updated.step)
    for name in params.names:
        # Decoupled decay only on the perceptron weight matrices.
        decay = cfg.weight_decay if name.startswith("W") else 0.0
        updated.tensors[name], updated.m[name], updated.v[name] = adam_step(
            params.tensors[name],
            grads[name],
            params.m[name],
            params.v[name],
            updated.step,
            lr=lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.adam_eps,
            weight_decay=decay,
        )
    return updated, loss
