from __future__ import annotations

import io
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from core.anchor import YSampling
from core.exceptions import DatasetIoError
from core.geometry import RigidTransform
from core.lane import Lane3D, Proposal
from core.sampling import FeatureMap
from core.schemas import FusionConfig, HeadConfig, TrainConfig
from engine.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from engine.data_files import (
    encode_block,
    read_block,
    read_feature_map,
    read_lane_collection,
    read_pose,
    read_records_csv,
    write_feature_map,
    write_lane_collection,
    write_pose,
    write_records_csv,
)
from engine.svg_plot import render_lane_plot
from method.head import HeadParams
from utils.json_utils import flatten_record, to_jsonable

YS = YSampling.preset("apollosim")


def lane(x: float, category: int = 1) -> Lane3D:
    return Lane3D(YS, np.full(YS.n, x), np.linspace(0.0, 0.5, YS.n), np.ones(YS.n), category=category)


class A3lfTest(unittest.TestCase):
    def test_header_layout(self) -> None:
        payload = encode_block(np.zeros((2, 3, 4)))
        self.assertEqual(payload[:4], b"A3LF")
        self.assertEqual(struct.unpack("<III", payload[4:16]), (2, 3, 4))
        self.assertEqual(len(payload), 16 + 4 * 24)

    def test_feature_map_file(self) -> None:
        data = np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 8.0
        with tempfile.TemporaryDirectory() as tmp:
            path = write_feature_map(Path(tmp) / "f.a3lf", FeatureMap(data))
            np.testing.assert_array_equal(read_feature_map(path).data, data)

    def test_bad_magic(self) -> None:
        with self.assertRaises(DatasetIoError):
            read_block(io.BytesIO(b"NOPE" + bytes(12)))

    def test_truncated_body(self) -> None:
        payload = encode_block(np.ones((2, 2, 2)))
        with self.assertRaises(DatasetIoError):
            read_block(io.BytesIO(payload[:-4]))


class LaneFilesTest(unittest.TestCase):
    def test_collection_sorted_by_scene(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "lanes.json"
            write_lane_collection(path, YS, {"b": [lane(1.0)], "a": [lane(-1.0, category=2)]}, extra={"split": "val"})
            text = path.read_text(encoding="utf-8")
            self.assertLess(text.index('"a"'), text.index('"b"'))
            ys, scenes = read_lane_collection(path)
        self.assertEqual(ys, YS)
        self.assertEqual(scenes["a"][0].category, 2)
        np.testing.assert_allclose(scenes["b"][0].zs, np.linspace(0.0, 0.5, YS.n))

    def test_proposals_keep_scores(self) -> None:
        proposal = Proposal(lane(0.0), np.array([0.3, 0.7]))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_lane_collection(Path(tmp) / "p.json", YS, {"s": [proposal]})
            _, scenes = read_lane_collection(path, as_proposals=True)
        self.assertAlmostEqual(scenes["s"][0].score, 0.7)

    def test_malformed_collection(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.json"
            path.write_text('{"scenes": []}', encoding="utf-8")
            with self.assertRaises(DatasetIoError):
                read_lane_collection(path)
            with self.assertRaises(DatasetIoError):
                read_lane_collection(Path(tmp) / "missing.json")

    def test_pose_file(self) -> None:
        pose = RigidTransform.rot_z(3.0, (0.1, 5.0, 0.02))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_pose(Path(tmp) / "pose.json", pose, "scene_0000")
            restored, prev = read_pose(path)
            first, none_prev = read_pose(write_pose(Path(tmp) / "first.json", None, None))
        np.testing.assert_allclose(restored.matrix(), pose.matrix())
        self.assertEqual(prev, "scene_0000")
        self.assertIsNone(first)
        self.assertIsNone(none_prev)

    def test_records_csv(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records_csv(Path(tmp) / "m.csv", [{"f1": 0.5, "protocol": "standard"}])
            df = read_records_csv(path)
        self.assertEqual(list(df.columns), ["f1", "protocol"])
        self.assertEqual(df.iloc[0]["f1"], 0.5)


class CheckpointTest(unittest.TestCase):
    def test_save_and_load_heads(self) -> None:
        heads = [
            HeadParams.init(YS.n, 3, HeadConfig(hidden_width=6), seed=1, fusion_strategy="linear"),
            HeadParams.init(YS.n, 3, HeadConfig(hidden_width=6), seed=2, fusion_strategy="linear"),
        ]
        ckpt = Checkpoint(heads, YS, ("a", "b", "c"), train=TrainConfig(iterations=2), fusion=FusionConfig(enabled=True, strategy="linear"), seed=9)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / "c.a3lc", ckpt)
            loaded = load_checkpoint(path)
        self.assertEqual(loaded.iterations, 2)
        self.assertEqual(loaded.channels, ("a", "b", "c"))
        self.assertEqual(loaded.seed, 9)
        self.assertTrue(loaded.fusion.enabled)
        for original, restored in zip(heads, loaded.heads, strict=True):
            self.assertEqual(restored.fusion_strategy, "linear")
            for name in original.names:
                np.testing.assert_allclose(restored.tensors[name], original.tensors[name], rtol=1e-6, atol=1e-7)

    def test_optimizer_state_survives(self) -> None:
        head = HeadParams.init(YS.n, 2, HeadConfig(hidden_width=5), seed=4)
        rng = np.random.default_rng(0)
        for name in head.names:
            head.m[name] = rng.normal(size=head.tensors[name].shape)
            head.v[name] = rng.uniform(0.0, 1.0, size=head.tensors[name].shape)
        head.step = 17
        with tempfile.TemporaryDirectory() as tmp:
            loaded = load_checkpoint(save_checkpoint(Path(tmp) / "c.a3lc", Checkpoint([head], YS, ("a", "b")))).heads[0]
        self.assertEqual(loaded.step, 17)
        for name in head.names:
            np.testing.assert_allclose(loaded.m[name], head.m[name], rtol=1e-6, atol=1e-7)
            np.testing.assert_allclose(loaded.v[name], head.v[name], rtol=1e-6, atol=1e-7)

    def test_reuses_last_head(self) -> None:
        head = HeadParams.zeros(YS.n, 2, HeadConfig(hidden_width=4))
        ckpt = Checkpoint([head], YS, ("a", "b"))
        self.assertEqual(len(ckpt.heads_for(3)), 3)
        self.assertIs(ckpt.heads_for(3)[2], head)

    def test_rejects_other_files(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "junk.a3lc"
            path.write_bytes(b"A3LF\x00\x00")
            with self.assertRaises(DatasetIoError):
                load_checkpoint(path)
            with self.assertRaises(DatasetIoError):
                load_checkpoint(Path(tmp) / "absent.a3lc")


class ReportingTest(unittest.TestCase):
    def test_plot_has_both_panels(self) -> None:
        svg = render_lane_plot([Proposal(lane(0.2), np.array([0.1, 0.9]))], [lane(0.0)], title="scene_0001")
        self.assertIn("<svg", svg)
        self.assertIn("top view", svg)
        self.assertIn("side view", svg)
        self.assertIn("scene_0001", svg)

    def test_plot_without_lanes(self) -> None:
        self.assertIn("<svg", render_lane_plot([], []))

    def test_jsonable(self) -> None:
        payload = to_jsonable({"a": np.float64(0.5), "b": np.arange(2), "c": float("inf"), "d": Path("x/y")})
        self.assertEqual(payload, {"a": 0.5, "b": [0, 1], "c": None, "d": "x/y"})

    def test_flatten(self) -> None:
        self.assertEqual(flatten_record({"standard": {"f1": 1.0}, "n": 2}), {"standard.f1": 1.0, "n": 2})


if __name__ == "__main__":
    unittest.main()
