from __future__ import annotations

import math
import unittest

import numpy as np

from core.exceptions import DepthNonPositive
from core.geometry import (
    CameraIntrinsics,
    CameraRig,
    GroundPoint,
    ImageDims,
    RigidTransform,
    back_project_feature,
    compose,
    feature_rays,
    project_ground_to_feature,
    project_points,
    transform_point,
)

DIMS = ImageDims(360, 480, 45, 60)


def _axis_camera() -> tuple[CameraIntrinsics, RigidTransform]:
    """Ground (x, y, z) -> camera (x, 1.5 - z, y)."""
    k = CameraIntrinsics(np.array([[1000.0, 0.0, 240.0], [0.0, 1000.0, 180.0], [0.0, 0.0, 1.0]]))
    r = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    return k, RigidTransform(r, np.array([0.0, 1.5, 0.0]))


class TransformTest(unittest.TestCase):
    def test_identity_and_translation(self) -> None:
        p = GroundPoint(1.0, 2.0, 3.0)
        self.assertEqual(transform_point(p, RigidTransform.identity()), p)
        moved = transform_point(GroundPoint(0.0, 0.0, 0.0), RigidTransform.from_translation(0.0, 5.0, 0.0))
        self.assertEqual(moved, GroundPoint(0.0, 5.0, 0.0))

    def test_rotation_matches_matrix_product(self) -> None:
        t = RigidTransform.rot_z(90.0)
        out = transform_point(GroundPoint(1.0, 0.0, 0.0), t)
        expected = t.r @ np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(out.as_array(), expected, atol=1e-12)
        np.testing.assert_allclose(out.as_array(), [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_applies_right_operand_first(self) -> None:
        self.assertTrue(compose(RigidTransform.identity(), RigidTransform.identity()).is_identity())
        both = compose(RigidTransform.from_translation(0, 1, 0), RigidTransform.from_translation(0, 2, 0))
        np.testing.assert_allclose(both.t, [0.0, 3.0, 0.0])
        half_turn = compose(RigidTransform.rot_z(90.0), RigidTransform.rot_z(90.0))
        np.testing.assert_allclose(half_turn.r, RigidTransform.rot_z(180.0).r, atol=1e-9)

        a = RigidTransform.rot_z(30.0, (1.0, 2.0, 0.5))
        b = RigidTransform.rot_z(-10.0, (0.0, 4.0, 0.0))
        p = np.array([[3.0, 7.0, -1.0]])
        np.testing.assert_allclose(compose(a, b).apply(p), a.apply(b.apply(p)), atol=1e-12)

    def test_inverse_round_trips(self) -> None:
        t = RigidTransform.from_yaw_translation(17.0, (2.0, -3.0, 0.4))
        self.assertTrue(np.allclose(compose(t, t.inverse()).matrix(), RigidTransform.identity().matrix(), atol=1e-12))

    def test_rejects_non_rotation(self) -> None:
        with self.assertRaises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, 1.01]))
        with self.assertRaises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]))

    def test_ten_frame_chain_is_consistent(self) -> None:
        rng = np.random.default_rng(3)
        steps = [RigidTransform.rot_z(rng.uniform(-5, 5), (rng.uniform(-1, 1), rng.uniform(0, 5), 0.0)) for _ in range(10)]
        chained = RigidTransform.identity()
        for step in steps:
            chained = compose(step, chained)
        points = rng.uniform(-20, 20, size=(50, 3))
        expected = points
        for step in steps:
            expected = step.apply(expected)
        np.testing.assert_allclose(chained.apply(points), expected, atol=1e-6)


class ProjectionTest(unittest.TestCase):
    def test_hand_computed_projection(self) -> None:
        k, t_gc = _axis_camera()
        fp = project_ground_to_feature(GroundPoint(0.0, 10.0, 0.0), k, t_gc, DIMS)
        self.assertAlmostEqual(fp.u, 30.0)
        self.assertAlmostEqual(fp.v, 41.25)
        self.assertAlmostEqual(fp.d, 10.0)

    def test_principal_point(self) -> None:
        k, t_gc = _axis_camera()
        fp = project_ground_to_feature(GroundPoint(0.0, 10.0, 1.5), k, t_gc, DIMS)
        self.assertAlmostEqual(fp.u, 30.0)
        self.assertAlmostEqual(fp.v, 22.5)

    def test_point_behind_camera_raises(self) -> None:
        k, t_gc = _axis_camera()
        with self.assertRaises(DepthNonPositive):
            project_ground_to_feature(GroundPoint(1.0, 0.0, 0.0), k, t_gc, DIMS)
        with self.assertRaises(DepthNonPositive):
            project_ground_to_feature(GroundPoint(0.0, -4.0, 0.0), k, t_gc, DIMS)

    def test_vectorized_projection_marks_points_behind(self) -> None:
        k, t_gc = _axis_camera()
        rig = CameraRig(k, t_gc, DIMS)
        u, v, d = project_points(np.array([[0.0, 10.0, 0.0], [0.0, -3.0, 0.0]]), rig)
        self.assertAlmostEqual(float(u[0]), 30.0)
        self.assertAlmostEqual(float(v[0]), 41.25)
        self.assertTrue(math.isnan(u[1]) and math.isnan(v[1]))
        self.assertLess(d[1], 0)

    def test_round_trip_through_back_projection(self) -> None:
        rig = CameraRig.from_height_pitch(
            1.5, 2.0, CameraIntrinsics.from_focal(420.0, 420.0, 240.0, 180.0), DIMS
        )
        rng = np.random.default_rng(0)
        points = np.stack(
            [rng.uniform(-15, 15, 10_000), rng.uniform(3, 100, 10_000), rng.uniform(-2, 2, 10_000)], axis=1
        )
        u, v, d = project_points(points, rig)
        for i in range(0, 10_000, 7):
            fp = project_ground_to_feature(GroundPoint.from_array(points[i]), rig.intrinsics, rig.t_gc, rig.dims)
            self.assertAlmostEqual(fp.u, u[i], places=9)
            back = back_project_feature(fp, rig.intrinsics, rig.t_gc, rig.dims)
            np.testing.assert_allclose(back.as_array(), points[i], atol=1e-6)
        self.assertTrue(np.all(d > 0))

    def test_feature_ray_passes_through_projected_point(self) -> None:
        rig = CameraRig.from_height_pitch(1.6, 3.0, CameraIntrinsics.from_focal(420.0, 420.0, 240.0, 180.0), DIMS)
        point = np.array([[2.0, 25.0, 0.0]])
        u, v, _ = project_points(point, rig)
        center, dirs = feature_rays(rig, u, v)
        np.testing.assert_allclose(center, [0.0, 0.0, 1.6], atol=1e-12)
        to_point = point[0] - center
        along = to_point @ dirs[0]
        np.testing.assert_allclose(center + along * dirs[0], point[0], atol=1e-9)

    def test_camera_rig_json(self) -> None:
        rig = CameraRig.from_height_pitch(1.5, 2.0, CameraIntrinsics.from_focal(420.0, 420.0, 240.0, 180.0), DIMS)
        payload = rig.to_json()
        self.assertEqual(len(payload["K"]), 9)
        self.assertEqual(len(payload["T"]), 12)
        self.assertEqual((payload["H"], payload["W"], payload["Hf"], payload["Wf"]), (360, 480, 45, 60))
        restored = CameraRig.from_json(payload)
        np.testing.assert_array_equal(restored.t_gc.matrix(), rig.t_gc.matrix())


if __name__ == "__main__":
    unittest.main()
