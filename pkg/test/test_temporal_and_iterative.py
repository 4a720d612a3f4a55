from __future__ import annotations

import unittest

import numpy as np

from core.anchor import AnchorParams, AnchorSet, YSampling, build_anchor
from core.exceptions import UnknownStrategy
from core.geometry import CameraIntrinsics, CameraRig, ImageDims, RigidTransform
from core.sampling import AnchorFeature, FeatureMap, sample_anchor_features
from core.schemas import HeadConfig, InferenceConfig
from method.head import HeadParams, PreviousFrame, forward, fuse_temporal, postprocess, predict_iterative

YS = YSampling.preset("apollosim")
C = 4


def rig() -> CameraRig:
    return CameraRig.from_height_pitch(
        1.5, 2.0, CameraIntrinsics.from_focal(420.0, 420.0, 240.0, 180.0), ImageDims(360, 480, 45, 60)
    )


def anchors() -> AnchorSet:
    return AnchorSet.from_anchors(
        [build_anchor(AnchorParams(x_s=x, pitch=0.0, yaw=yaw), YS) for x in (-3.5, 0.0, 3.5) for yaw in (-1.0, 2.0)]
    )


def feature_map(seed: int = 0) -> FeatureMap:
    return FeatureMap(np.random.default_rng(seed).normal(size=(45, 60, C)))


class FuseTemporalTest(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(1)
        n = YS.n
        self.current = AnchorFeature(rng.normal(size=(n, C)), np.arange(n) % 2 == 0)
        self.previous = AnchorFeature(rng.normal(size=(n, C)), np.arange(n) % 3 == 0)

    def test_weight_on_current_only(self) -> None:
        weights = {"Fw": np.tile([1.0, 0.0], (YS.n, 1))}
        fused = fuse_temporal(self.current, self.previous, "weighted_sum", weights)
        np.testing.assert_array_equal(fused.per_point, self.current.per_point)

    def test_even_weights_average(self) -> None:
        weights = {"Fw": np.full((YS.n, 2), 0.5)}
        fused = fuse_temporal(self.current, self.previous, "weighted_sum", weights)
        np.testing.assert_allclose(fused.per_point, (self.current.per_point + self.previous.per_point) / 2)

    def test_per_y_weights(self) -> None:
        w = np.random.default_rng(2).uniform(size=(YS.n, 2))
        fused = fuse_temporal(self.current, self.previous, "weighted_sum", {"Fw": w})
        expected = w[:, :1] * self.current.per_point + w[:, 1:] * self.previous.per_point
        np.testing.assert_allclose(fused.per_point, expected)

    def test_linear_identity_on_current(self) -> None:
        params = {"Fl": np.vstack([np.eye(C), np.zeros((C, C))]), "Fb": np.zeros(C)}
        fused = fuse_temporal(self.current, self.previous, "linear", params)
        np.testing.assert_allclose(fused.per_point, self.current.per_point)

    def test_valid_mask_is_union(self) -> None:
        fused = fuse_temporal(self.current, self.previous, "weighted_sum", {"Fw": np.full((YS.n, 2), 0.5)})
        np.testing.assert_array_equal(fused.valid_mask, self.current.valid_mask | self.previous.valid_mask)

    def test_unknown_strategy(self) -> None:
        with self.assertRaises(UnknownStrategy):
            fuse_temporal(self.current, self.previous, "attention", {})


class PredictIterativeTest(unittest.TestCase):
    def setUp(self) -> None:
        self.rig = rig()
        self.fm = feature_map()
        self.anchors = anchors()
        self.head = HeadParams.init(YS.n, C, HeadConfig(hidden_width=16, num_classes=3), seed=4)

    def test_single_pass_matches_per_anchor_forward(self) -> None:
        proposals = predict_iterative(self.fm, self.anchors, [self.head], self.rig, 1)
        self.assertEqual(len(proposals), len(self.anchors))
        for i, proposal in enumerate(proposals):
            anchor = self.anchors[i]
            pred = forward(sample_anchor_features(anchor, self.fm, self.rig), self.head)
            np.testing.assert_allclose(proposal.lane.xs, anchor.xs + pred.dx, atol=1e-12)
            np.testing.assert_allclose(proposal.lane.zs, anchor.zs + pred.dz, atol=1e-12)
            np.testing.assert_allclose(proposal.class_probs, pred.class_probs, atol=1e-12)
            self.assertEqual(proposal.anchor_index, i)

    def test_zero_offset_second_head_keeps_geometry(self) -> None:
        first = predict_iterative(self.fm, self.anchors, [self.head], self.rig, 1)
        still = HeadParams.zeros(YS.n, C, HeadConfig(hidden_width=16, num_classes=3))
        second = predict_iterative(self.fm, self.anchors, [self.head, still], self.rig, 2)
        for a, b in zip(first, second, strict=True):
            np.testing.assert_allclose(b.lane.xs, a.lane.xs, atol=1e-12)
            np.testing.assert_allclose(b.lane.zs, a.lane.zs, atol=1e-12)
            np.testing.assert_allclose(b.class_probs, np.full(3, 1.0 / 3.0))

    def test_head_count_must_match(self) -> None:
        with self.assertRaises(ValueError):
            predict_iterative(self.fm, self.anchors, [self.head], self.rig, 2)
        with self.assertRaises(ValueError):
            predict_iterative(self.fm, self.anchors, [], self.rig, 0)

    def test_fused_head_without_history_uses_current_frame(self) -> None:
        fused = HeadParams.init(YS.n, C, HeadConfig(hidden_width=16, num_classes=3), seed=4, fusion_strategy="weighted_sum")
        alone = predict_iterative(self.fm, self.anchors, [fused], self.rig, 1)
        stay = PreviousFrame(self.fm, self.rig, RigidTransform.identity())
        with_self = predict_iterative(self.fm, self.anchors, [fused], self.rig, 1, stay)
        for a, b in zip(alone, with_self, strict=True):
            np.testing.assert_allclose(a.lane.xs, b.lane.xs, atol=1e-12)

    def test_postprocess_caps_and_binarizes(self) -> None:
        proposals = predict_iterative(self.fm, self.anchors, [self.head], self.rig, 1)
        kept = postprocess(proposals, InferenceConfig(score_threshold=0.0, nms_threshold=0.1, max_lanes=2))
        self.assertLessEqual(len(kept), 2)
        for p in kept:
            self.assertTrue(set(np.unique(p.lane.vis)) <= {0.0, 1.0})
        scores = [p.score for p in kept]
        self.assertEqual(scores, sorted(scores, reverse=True))


if __name__ == "__main__":
    unittest.main()
