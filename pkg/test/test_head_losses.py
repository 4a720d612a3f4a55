from __future__ import annotations

import math
import unittest

import numpy as np

from core.exceptions import NonFiniteGradient
from core.schemas import HeadConfig, TrainConfig
from method.head import (
    HeadParams,
    TrainingBatch,
    adam_step,
    backward_and_step,
    classification_loss,
    gradient_check,
    regression_loss,
    total_loss,
)
from method.head.losses import analytic_gradients, batch_losses

N, C, HIDDEN = 4, 3, 8


def random_batch(seed: int, *, m: int = 6, classes: int = 3, zero: bool = False, history: bool = False) -> TrainingBatch:
    rng = np.random.default_rng(seed)
    features = np.zeros((m, N, C)) if zero else rng.normal(size=(m, N, C))
    positives = np.array([0, 2])
    labels = np.zeros(m, dtype=np.int64)
    labels[positives] = rng.integers(1, classes, size=positives.size)
    gt_vis = np.ones((positives.size, N))
    gt_vis[1, -1] = 0.0
    return TrainingBatch(
        features=features,
        anchor_xs=rng.normal(size=(m, N)),
        anchor_zs=rng.normal(0.0, 0.2, size=(m, N)),
        labels=labels,
        positives=positives,
        gt_xs=rng.normal(size=(positives.size, N)),
        gt_zs=rng.normal(0.0, 0.2, size=(positives.size, N)),
        gt_vis=gt_vis,
        prev_features=rng.normal(size=(m, N, C)) if history else None,
    )


def head(seed: int, fusion: str | None = None, classes: int = 3) -> HeadParams:
    return HeadParams.init(N, C, HeadConfig(hidden_width=HIDDEN, num_classes=classes), seed, fusion)


class ClassificationLossTest(unittest.TestCase):
    def test_certain_target_costs_nothing(self) -> None:
        loss = classification_loss(np.array([[0.0, 1.0]]), np.array([1]), TrainConfig())
        self.assertAlmostEqual(loss, 0.0, places=6)

    def test_half_probability(self) -> None:
        cfg = TrainConfig(focal_alpha=0.5, focal_gamma=2.0)
        loss = classification_loss(np.array([[0.5, 0.5]]), np.array([1]), cfg)
        self.assertAlmostEqual(loss, 0.5 * 0.25 * math.log(2.0), places=12)
        self.assertAlmostEqual(loss, 0.08664, places=5)

    def test_uniform_two_class_closed_form(self) -> None:
        cfg = TrainConfig()
        probs = np.full((5, 2), 0.5)
        loss = classification_loss(probs, np.array([0, 1, 0, 0, 1]), cfg)
        expected = cfg.focal_alpha * (1 - 0.5) ** cfg.focal_gamma * math.log(2.0)
        self.assertAlmostEqual(loss, expected, places=12)


class RegressionLossTest(unittest.TestCase):
    def test_exact_match_is_zero(self) -> None:
        xs = np.array([[0.5, 1.0, 1.5, 2.0]])
        vis = np.array([[1.0, 1.0, 0.0, 1.0]])
        loss = regression_loss(np.zeros_like(xs), np.zeros_like(xs), vis, xs, xs * 0.1, xs, xs * 0.1, vis)
        self.assertEqual(loss, 0.0)

    def test_single_lateral_error(self) -> None:
        gt_vis = np.array([[1.0, 0.0, 0.0, 0.0]])
        dx = np.array([[0.3, 0.7, -2.0, 0.0]])
        zeros = np.zeros((1, N))
        loss = regression_loss(dx, zeros, gt_vis, zeros, zeros, zeros, zeros, gt_vis)
        self.assertAlmostEqual(loss, 0.3, places=12)

    def test_term_by_term_oracle(self) -> None:
        rng = np.random.default_rng(8)
        shape = (3, N)
        dx, dz, ax, az, gx, gz = (rng.normal(size=shape) for _ in range(6))
        vis = rng.uniform(size=shape)
        gv = (rng.uniform(size=shape) > 0.3).astype(float)
        expected = 0.0
        for p in range(shape[0]):
            for k in range(N):
                expected += abs(gv[p, k] * (ax[p, k] + dx[p, k] - gx[p, k]))
                expected += abs(gv[p, k] * (az[p, k] + dz[p, k] - gz[p, k]))
                expected += abs(gv[p, k] - vis[p, k])
        self.assertAlmostEqual(regression_loss(dx, dz, vis, ax, az, gx, gz, gv), expected / shape[0], places=12)

    def test_no_positives(self) -> None:
        empty = np.zeros((0, N))
        self.assertEqual(regression_loss(empty, empty, empty, empty, empty, empty, empty, empty), 0.0)


class TotalLossTest(unittest.TestCase):
    def test_without_regression_weight(self) -> None:
        params, batch = head(1), random_batch(1)
        cfg = TrainConfig(lambda_reg=0.0)
        cls, _, _ = batch_losses(params, batch, cfg)
        self.assertAlmostEqual(total_loss(params, batch, cfg), cls, places=12)

    def test_never_negative(self) -> None:
        for seed in range(5):
            self.assertGreaterEqual(total_loss(head(seed), random_batch(seed), TrainConfig()), 0.0)


class GradientCheckTest(unittest.TestCase):
    def test_analytic_gradients_over_seeds(self) -> None:
        cfg = TrainConfig()
        for seed in range(20):
            with self.subTest(seed=seed):
                error = gradient_check(head(seed), random_batch(100 + seed), cfg, seed=seed)
                self.assertLess(error, 1e-4)

    def test_fusion_gradients(self) -> None:
        cfg = TrainConfig()
        for strategy in ("weighted_sum", "linear"):
            with self.subTest(strategy=strategy):
                params = head(3, strategy)
                params.tensors[next(k for k in params.tensors if k.startswith("F"))] += 0.1
                error = gradient_check(params, random_batch(7, history=True), cfg)
                self.assertLess(error, 1e-4)

    def test_scaled_gradient_is_detected(self) -> None:
        def doubled(params: HeadParams, batch: TrainingBatch, cfg: TrainConfig) -> dict[str, np.ndarray]:
            grads = analytic_gradients(params, batch, cfg)
            grads["Wc"] = grads["Wc"] * 2.0
            return grads

        error = gradient_check(head(0), random_batch(0), TrainConfig(), grad_fn=doubled)
        self.assertGreater(error, 0.3)

    def test_zero_input_batch(self) -> None:
        error = gradient_check(head(2), random_batch(2, zero=True), TrainConfig())
        self.assertLess(error, 1e-4)


class OptimizerTest(unittest.TestCase):
    def test_zero_learning_rate_keeps_params(self) -> None:
        params = head(4)
        updated, loss = backward_and_step(params, random_batch(4), TrainConfig(learning_rate=0.0))
        self.assertGreater(loss, 0.0)
        self.assertEqual(updated.step, 1)
        for name in params.names:
            np.testing.assert_array_equal(updated.tensors[name], params.tensors[name])

    def test_quadratic_matches_hand_stepped_rule(self) -> None:
        lr, b1, b2, eps, wd = 0.1, 0.9, 0.999, 1e-8, 0.01
        p, m, v = np.array([0.0]), np.zeros(1), np.zeros(1)
        q, mq, vq = 0.0, 0.0, 0.0
        for step in range(1, 11):
            p, m, v = adam_step(p, 2.0 * (p - 3.0), m, v, step, lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=wd)
            g = 2.0 * (q - 3.0)
            mq = b1 * mq + (1 - b1) * g
            vq = b2 * vq + (1 - b2) * g * g
            m_hat = mq / (1 - b1**step)
            v_hat = vq / (1 - b2**step)
            q = q - lr * (m_hat / (math.sqrt(v_hat) + eps) + wd * q)
            self.assertAlmostEqual(float(p[0]), q, places=12)
        self.assertGreater(q, 0.8)

    def test_single_batch_fit_halves_loss(self) -> None:
        cfg = TrainConfig(learning_rate=5e-3, weight_decay=0.0)
        params = HeadParams.init(N, C, HeadConfig(hidden_width=16, num_classes=3), seed=0)
        batch = random_batch(5)
        start = total_loss(params, batch, cfg)
        for _ in range(500):
            params, _ = backward_and_step(params, batch, cfg)
        self.assertLessEqual(total_loss(params, batch, cfg), 0.5 * start)

    def test_same_seed_trains_identically(self) -> None:
        cfg = TrainConfig(learning_rate=1e-3)
        a, b = head(9), head(9)
        batch = random_batch(9)
        for _ in range(5):
            a, _ = backward_and_step(a, batch, cfg)
            b, _ = backward_and_step(b, batch, cfg)
        for name in a.names:
            self.assertEqual(a.tensors[name].tobytes(), b.tensors[name].tobytes())

    def test_non_finite_gradient(self) -> None:
        params = head(6)
        params.tensors["bc"][0] = np.nan
        with self.assertRaises(NonFiniteGradient):
            with np.errstate(all="ignore"):
                backward_and_step(params, random_batch(6), TrainConfig())


if __name__ == "__main__":
    unittest.main()
