from __future__ import annotations

import math
import unittest

import numpy as np

from core.anchor import YSampling
from core.exceptions import TooFewLanes
from core.lane import Lane3D, Proposal
from core.schemas import EwcConfig
from method.ewc import (
    LanePair,
    ewc_gradient_check,
    ewc_objective,
    non_fork_pairs,
    optimize_equal_width,
    pair_width_profile,
    solve_equal_width,
    width_variation,
)
from method.pipeline.lane_pipeline import refine_proposals

YS3 = YSampling(np.array([10.0, 20.0, 30.0]))


def lane(xs, ys: YSampling = YS3, *, zs=None, category: int = 1) -> Lane3D:
    xs = np.asarray(xs, dtype=np.float64)
    zs = np.zeros(ys.n) if zs is None else np.asarray(zs, dtype=np.float64)
    return Lane3D(ys, xs, zs, np.ones(ys.n), category=category)


class WidthProfileTest(unittest.TestCase):
    def test_parallel_straight_lanes(self) -> None:
        np.testing.assert_allclose(pair_width_profile(lane([0, 0, 0]), lane([3, 3, 3])), [3.0, 3.0, 3.0])

    def test_diagonal_lane_projects_gap(self) -> None:
        a = lane(YS3.ys)
        b = lane(YS3.ys + 2.0)
        np.testing.assert_allclose(pair_width_profile(a, b), np.full(3, 2.0 * math.cos(math.radians(45))))

    def test_identical_lanes(self) -> None:
        a = lane([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(pair_width_profile(a, a), np.zeros(3))

    def test_variation_of_uneven_widths(self) -> None:
        widths = pair_width_profile(lane([0, 0, 0]), lane([3, 3, 4]))
        np.testing.assert_allclose(widths, [3.0, 3.0, 4.0])
        self.assertAlmostEqual(width_variation(widths), 4.0 / 3.0)


class ObjectiveTest(unittest.TestCase):
    def test_parallel_lanes_cost_nothing(self) -> None:
        lanes = [lane([0, 0, 0]), lane([3.5, 3.5, 3.5]), lane([7, 7, 7])]
        self.assertEqual(ewc_objective(lanes, None, 0.1), 0.0)

    def test_single_pair_normalization(self) -> None:
        lanes = [lane([0, 0, 0]), lane([3, 3, 4])]
        pairs = [LanePair(0, 1, (0, 1, 2))]
        self.assertAlmostEqual(ewc_objective(lanes, None, 0.0, pairs), (4.0 / 3.0) / 2.0)

    def test_regularizer_only(self) -> None:
        lanes = [lane([1, 1, 1]), lane([1, 1, 1])]
        adj = np.full((2, 3), 0.2)
        expected = 0.5 * math.sqrt(3 * 0.2**2)
        self.assertAlmostEqual(ewc_objective(lanes, adj, 0.5), expected)

    def test_needs_two_lanes(self) -> None:
        with self.assertRaises(TooFewLanes):
            ewc_objective([lane([0, 0, 0])], None, 0.1)

    def test_gradient_matches_finite_differences(self) -> None:
        ys = YSampling(np.linspace(5.0, 50.0, 8))
        rng = np.random.default_rng(3)
        lanes = [lane(offset + 2e-4 * ys.ys**2 + rng.normal(0, 0.05, ys.n), ys) for offset in (-3.5, 0.0, 3.6)]
        adj = rng.normal(0.0, 0.05, size=(3, ys.n))
        self.assertLess(ewc_gradient_check(lanes, adj, alpha=0.1), 1e-5)


class OptimizeTest(unittest.TestCase):
    def test_equal_width_input_is_stationary(self) -> None:
        lanes = [lane([0, 0.5, 1.0]), lane([3.5, 4.0, 4.5])]
        out = optimize_equal_width(lanes, EwcConfig())
        for before, after in zip(lanes, out, strict=True):
            np.testing.assert_allclose(after.xs, before.xs, atol=1e-6)

    def test_only_x_changes(self) -> None:
        lanes = [lane([0, 0, 0], zs=[0.1, 0.2, 0.3], category=2), lane([3, 3, 3.6], zs=[0.0, 0.1, 0.2])]
        out = optimize_equal_width(lanes, EwcConfig(alpha=0.0))
        for before, after in zip(lanes, out, strict=True):
            self.assertEqual(after.zs.tobytes(), before.zs.tobytes())
            self.assertEqual(after.vis.tobytes(), before.vis.tobytes())
            self.assertEqual(after.ys, before.ys)
            self.assertEqual(after.category, before.category)

    def test_toy_reduces_width_variation(self) -> None:
        lanes = [lane([0, 0, 0]), lane([3, 3, 3.6])]
        cfg = EwcConfig(alpha=0.0)
        result = solve_equal_width(lanes, cfg)
        self.assertLessEqual(result.final_objective, 0.1 * result.initial_objective)

        pairs = list(result.pairs)
        grid = np.round(np.arange(-1.0, 1.0 + 1e-9, 1e-3), 6)
        best = min(ewc_objective(lanes, np.array([[0, 0, 0], [0, 0, d]]), 0.0, pairs) for d in grid)
        self.assertLessEqual(result.final_objective, best + 0.05 * result.initial_objective)

    def test_objective_never_increases(self) -> None:
        lanes = [lane([0, 0.1, 0.0]), lane([3, 3.2, 3.7]), lane([6.8, 7.0, 7.1])]
        cfg = EwcConfig(alpha=0.05)
        result = solve_equal_width(lanes, cfg)
        self.assertLessEqual(result.final_objective, result.initial_objective)

    def test_huge_alpha_freezes_lanes(self) -> None:
        lanes = [lane([0, 0, 0]), lane([3, 3, 3.6])]
        out = optimize_equal_width(lanes, EwcConfig(alpha=1e6))
        for before, after in zip(lanes, out, strict=True):
            self.assertLessEqual(float(np.abs(after.xs - before.xs).max()), 1e-3)

    def test_single_lane_is_returned_unchanged(self) -> None:
        only = [lane([0, 0, 0])]
        self.assertIs(optimize_equal_width(only, EwcConfig())[0], only[0])

    def test_fork_pairs_are_dropped(self) -> None:
        lanes = [lane([0, 0, 0]), lane([3.0, 5.0, 7.0])]
        self.assertEqual(non_fork_pairs(lanes, EwcConfig()), [])
        with self.assertRaises(TooFewLanes):
            solve_equal_width(lanes, EwcConfig())
        out = optimize_equal_width(lanes, EwcConfig())
        np.testing.assert_array_equal(out[1].xs, lanes[1].xs)


class RefineProposalsTest(unittest.TestCase):
    def test_scores_are_untouched(self) -> None:
        proposals = [
            Proposal(lane([0, 0, 0]), np.array([0.3, 0.6, 0.1]), anchor_index=4),
            Proposal(lane([3, 3, 3.6], category=2), np.array([0.2, 0.1, 0.7]), anchor_index=9),
        ]
        refined = refine_proposals(proposals, EwcConfig(alpha=0.0))
        self.assertFalse(np.array_equal(refined[1].lane.xs, proposals[1].lane.xs))
        for before, after in zip(proposals, refined, strict=True):
            self.assertEqual(after.class_probs.tobytes(), before.class_probs.tobytes())
            self.assertEqual(after.score, before.score)
            self.assertEqual(after.anchor_index, before.anchor_index)
            self.assertEqual(after.lane.zs.tobytes(), before.lane.zs.tobytes())


if __name__ == "__main__":
    unittest.main()
