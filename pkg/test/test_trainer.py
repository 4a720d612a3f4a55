from __future__ import annotations

import tempfile
import unittest
from pathlib import Path

import numpy as np

from benchmarking.synthetic import generate_sequence
from core.anchor import AnchorSet, YSampling
from core.lane import assign_positives
from core.sampling import sample_anchor_batch
from core.schemas import AnchorGridConfig, FusionConfig, HeadConfig, RenderConfig, SceneSpec, TrainConfig
from engine.checkpoint import Checkpoint, save_checkpoint
from method.head import PreviousFrame, forward_batch
from method.trainer import TrainingScene, train_heads

YS = YSampling.preset("apollosim")
RENDER = RenderConfig(
    image_height=180, image_width=240, feature_height=18, feature_width=24, focal_length=210.0, presence_radius_cells=1.5
)
GRID = AnchorSet.from_grid(AnchorGridConfig(x_range=(-4.0, 4.0), x_interval=0.5, yaws=(0.0, -3.0, 3.0), pitches=(0.0,)), YS)
HEAD = HeadConfig(hidden_width=16)


def training_scenes() -> list[TrainingScene]:
    scenes = []
    for i, spec in enumerate((SceneSpec(num_lanes=2, lane_spacing=3.5), SceneSpec(num_lanes=3, lane_spacing=3.2, curvature=2e-4))):
        prev, cur = generate_sequence(spec, frames=2, ego_speed=5.0, seed=i, ys=YS, render_cfg=RENDER)
        scenes.append(
            TrainingScene(
                scene_id=f"scene_{i:04d}",
                feature_map=cur.feature_map,
                rig=cur.rig,
                gts=cur.gt,
                history=(PreviousFrame(prev.feature_map, prev.rig, cur.pose_to_prev),),
            )
        )
    return scenes


class TrainHeadsTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.scenes = training_scenes()

    def test_one_head_per_iteration(self) -> None:
        result = train_heads(self.scenes, GRID, HEAD, TrainConfig(epochs=2, iterations=2, learning_rate=1e-3))
        self.assertEqual(len(result.heads), 2)
        self.assertIsNot(result.heads[0], result.heads[1])
        self.assertEqual({row["iteration"] for row in result.loss_curve}, {1, 2})
        self.assertEqual(len(result.epoch_losses(2)), 2)
        self.assertFalse(np.array_equal(result.heads[0].tensors["W1"], result.heads[1].tensors["W1"]))

    def test_shared_head(self) -> None:
        result = train_heads(self.scenes, GRID, HEAD, TrainConfig(epochs=1, iterations=3, share_heads=True))
        self.assertEqual(len(result.heads), 3)
        for head in result.heads[1:]:
            self.assertIs(head, result.heads[0])
        self.assertEqual({row["iteration"] for row in result.loss_curve}, {1})

    def test_temporal_fusion_trains_fusion_weights(self) -> None:
        fusion = FusionConfig(enabled=True, strategy="weighted_sum", max_frame_gap=1)
        result = train_heads(self.scenes, GRID, HEAD, TrainConfig(epochs=2, learning_rate=1e-3), fusion)
        head = result.heads[0]
        self.assertEqual(head.fusion_strategy, "weighted_sum")
        self.assertEqual(head.tensors["Fw"].shape, (YS.n, 2))
        self.assertTrue(np.all(np.isfinite([row["loss"] for row in result.loss_curve])))

    def test_no_scenes(self) -> None:
        with self.assertRaises(ValueError):
            train_heads([], GRID, HEAD, TrainConfig())

    def test_loss_falls_and_positives_score_higher(self) -> None:
        cfg = TrainConfig(epochs=60, learning_rate=5e-3, weight_decay=0.0, seed=3)
        result = train_heads(self.scenes, GRID, HEAD, cfg)
        losses = result.epoch_losses()
        self.assertLess(losses[-1], 0.8 * losses[0])

        head = result.heads[0]
        pos_scores, neg_scores = [], []
        for scene in self.scenes:
            features, _ = sample_anchor_batch(GRID, scene.feature_map, scene.rig)
            probs = forward_batch(features, head).probs[:, 1]
            assignment = assign_positives([gt for gt in scene.gts if gt.vis.sum() > 0], GRID, cfg.n_positives)
            pos_scores.extend(probs[assignment.positive_anchors])
            neg_scores.extend(probs[sorted(assignment.negatives)])
        self.assertGreater(np.mean(pos_scores), np.mean(neg_scores))

    def test_same_seed_same_checkpoint(self) -> None:
        cfg = TrainConfig(epochs=2, learning_rate=1e-3, seed=11)
        blobs = []
        curves = []
        with tempfile.TemporaryDirectory() as tmp:
            for k in range(2):
                result = train_heads(self.scenes, GRID, HEAD, cfg)
                curves.append([row["loss"] for row in result.loss_curve])
                ckpt = Checkpoint(result.heads, YS, RENDER.channels, head=HEAD, train=cfg, seed=cfg.seed)
                blobs.append(save_checkpoint(Path(tmp) / f"{k}.a3lc", ckpt).read_bytes())
        self.assertEqual(curves[0], curves[1])
        self.assertEqual(blobs[0], blobs[1])


if __name__ == "__main__":
    unittest.main()
