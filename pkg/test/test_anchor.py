from __future__ import annotations

import math
import unittest

import numpy as np

from config.constants import ANCHOR_PITCHES_DEG, ANCHOR_YAWS_DEG
from core.anchor import (
    AnchorParams,
    AnchorSet,
    YSampling,
    anchor_start_positions,
    build_anchor,
    build_anchor_grid,
    proposal_to_anchor,
)
from core.exceptions import EmptyGrid, LengthMismatch
from core.geometry import CameraIntrinsics, CameraRig, ImageDims, project_points
from core.lane import Lane3D, Proposal
from core.schemas import AnchorGridConfig


class YSamplingTest(unittest.TestCase):
    def test_presets(self) -> None:
        apollo = YSampling.preset("apollosim")
        self.assertEqual(apollo.to_list(), [5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 65.0, 80.0, 100.0])
        self.assertEqual(YSampling.preset("openlane").n, 20)
        self.assertEqual(YSampling.preset("once").n, 10)

    def test_rejects_bad_sampling(self) -> None:
        for values in ([5.0], [5.0, 5.0], [10.0, 5.0], [0.0, 5.0]):
            with self.subTest(values=values), self.assertRaises(ValueError):
                YSampling(np.asarray(values))


class BuildAnchorTest(unittest.TestCase):
    def test_straight_ahead(self) -> None:
        anchor = build_anchor(AnchorParams(x_s=2.0, pitch=0.0, yaw=0.0), YSampling(np.array([5.0, 10.0])))
        np.testing.assert_allclose(anchor.as_array(), [[2.0, 5.0, 0.0], [2.0, 10.0, 0.0]])

    def test_yaw_and_pitch_use_tangent(self) -> None:
        ys = YSampling(np.array([10.0, 20.0]))
        yawed = build_anchor(AnchorParams(x_s=0.0, pitch=0.0, yaw=45.0), ys)
        self.assertAlmostEqual(float(yawed.xs[0]), 10.0)
        pitched = build_anchor(AnchorParams(x_s=0.0, pitch=5.0, yaw=0.0), ys)
        self.assertAlmostEqual(float(pitched.zs[0]), 10.0 * math.tan(math.radians(5.0)))
        self.assertAlmostEqual(float(pitched.zs[0]), 0.8749, places=4)

    def test_angles_must_stay_below_ninety(self) -> None:
        with self.assertRaises(ValueError):
            AnchorParams(x_s=0.0, pitch=90.0, yaw=0.0)


class AnchorGridTest(unittest.TestCase):
    def setUp(self) -> None:
        self.ys = YSampling.preset("apollosim")

    def test_default_grid_size(self) -> None:
        self.assertEqual(len(ANCHOR_YAWS_DEG) * len(ANCHOR_PITCHES_DEG), 119)
        cfg = AnchorGridConfig()
        self.assertEqual(len(anchor_start_positions(cfg)), 16)
        self.assertEqual(len(build_anchor_grid(cfg, self.ys)), 16 * 119)

    def test_small_grid_positions_and_order(self) -> None:
        cfg = AnchorGridConfig(x_range=(-1.3, 1.3), x_interval=1.3, yaws=(0.0,), pitches=(0.0,))
        anchors = build_anchor_grid(cfg, self.ys)
        self.assertEqual([round(a.params.x_s, 9) for a in anchors], [-1.3, 0.0, 1.3])

        cfg = AnchorGridConfig(x_range=(0.0, 1.0), x_interval=1.0, yaws=(0.0, 5.0), pitches=(0.0, 1.0))
        keys = [(a.params.x_s, a.params.yaw, a.params.pitch) for a in build_anchor_grid(cfg, self.ys)]
        self.assertEqual(keys[:4], [(0.0, 0.0, 0.0), (0.0, 0.0, 1.0), (0.0, 5.0, 0.0), (0.0, 5.0, 1.0)])
        self.assertEqual(keys[4][0], 1.0)

    def test_empty_angle_set_raises(self) -> None:
        cfg = AnchorGridConfig(yaws=(), pitches=(0.0,))
        with self.assertRaises(EmptyGrid):
            build_anchor_grid(cfg, self.ys)

    def test_config_accepts_file_keys(self) -> None:
        cfg = AnchorGridConfig.model_validate({"yaws_deg": [0, 10], "pitches_deg": [0]})
        self.assertEqual(cfg.yaws, (0.0, 10.0))

    def test_anchor_set_stacks_points(self) -> None:
        cfg = AnchorGridConfig(x_range=(-1.0, 1.0), x_interval=1.0, yaws=(0.0, 10.0), pitches=(0.0,))
        anchors = build_anchor_grid(cfg, self.ys)
        stacked = AnchorSet.from_anchors(anchors)
        self.assertEqual(stacked.points().shape, (6, 10, 3))
        np.testing.assert_array_equal(stacked[3].xs, anchors[3].xs)


class ProposalToAnchorTest(unittest.TestCase):
    def setUp(self) -> None:
        self.ys = YSampling.preset("apollosim")
        self.base = build_anchor(AnchorParams(x_s=1.0, pitch=1.0, yaw=3.0), self.ys)

    def _proposal(self, dx: float) -> Proposal:
        lane = Lane3D(self.ys, self.base.xs + dx, self.base.zs, np.ones(self.ys.n))
        return Proposal(lane, np.array([0.2, 0.8]))

    def test_zero_offset_keeps_points(self) -> None:
        anchor = proposal_to_anchor(self._proposal(0.0), self.ys)
        np.testing.assert_allclose(anchor.as_array(), self.base.as_array())

    def test_shifted_proposal(self) -> None:
        anchor = proposal_to_anchor(self._proposal(0.5), self.ys)
        np.testing.assert_allclose(anchor.xs, self.base.xs + 0.5)
        self.assertAlmostEqual(anchor.params.x_s, float(self.base.xs[0] + 0.5))

    def test_reprojection_hits_proposal_pixels(self) -> None:
        rig = CameraRig.from_height_pitch(
            1.5, 2.0, CameraIntrinsics.from_focal(420.0, 420.0, 240.0, 180.0), ImageDims(360, 480, 45, 60)
        )
        proposal = self._proposal(0.7)
        anchor = proposal_to_anchor(proposal, self.ys)
        u_a, v_a, _ = project_points(anchor.as_array(), rig)
        u_p, v_p, _ = project_points(proposal.lane.points(), rig)
        np.testing.assert_allclose(u_a, u_p)
        np.testing.assert_allclose(v_a, v_p)

    def test_mismatched_sampling_raises(self) -> None:
        with self.assertRaises(LengthMismatch):
            proposal_to_anchor(self._proposal(0.0), YSampling.preset("openlane"))


if __name__ == "__main__":
    unittest.main()
