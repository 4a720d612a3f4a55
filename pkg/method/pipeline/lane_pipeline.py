"""Scene-level orchestration: predict, refine and evaluate over a dataset."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import TypeVar

from loguru import logger
from tqdm import tqdm

from benchmarking.synthetic.dataset import LoadedScene, SyntheticDataset
from core.anchor import AnchorSet
from core.exceptions import ConfigError, SceneStageError
from core.lane import Lane3D, Proposal
from core.schemas import EvalConfig, EwcConfig, InferenceConfig, OnceEvalConfig
from engine.checkpoint import Checkpoint
from method.eval import compute_dataset_metrics, once_dataset_metrics
from method.ewc import optimize_equal_width
from method.head.inference import PreviousFrame, postprocess, predict_iterative
from method.schemas import MetricsReport, OnceReport

T = TypeVar("T")
PROTOCOLS = ("standard", "once", "both")


def run_scenes(
    stage: str,
    scene_ids: Sequence[str],
    work: Callable[[str], T],
    *,
    jobs: int = 1,
    show_progress: bool = False,
) -> dict[str, T]:
    """Apply ``work`` per scene, ``jobs`` at a time; results keyed in input order.

    Raises:
        SceneStageError: the first failing scene (in input order), wrapping its error.
    """

    def _guarded(scene_id: str) -> T:
        try:
            return work(scene_id)
        except Exception as exc:
            raise SceneStageError(stage=stage, scene_id=scene_id, original_error=exc) from exc

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(
            tqdm(pool.map(_guarded, scene_ids), total=len(scene_ids), desc=stage, disable=not show_progress)
        )
    return dict(zip(scene_ids, results, strict=True))


def refine_proposals(proposals: Sequence[Proposal], cfg: EwcConfig) -> list[Proposal]:
    """Equal-width refinement of one scene; scores and probabilities are kept."""
    refined = optimize_equal_width([p.lane for p in proposals], cfg)
    return [replace(p, lane=lane) for p, lane in zip(proposals, refined, strict=True)]


@dataclass
class LanePipeline:
    """Checkpointed heads plus the inference and refinement settings."""

    checkpoint: Checkpoint
    inference: InferenceConfig
    ewc: EwcConfig

    def __post_init__(self) -> None:
        self.anchors = AnchorSet.from_grid(self.checkpoint.anchor, self.checkpoint.ys)

    @property
    def has_fusion(self) -> bool:
        return any(h.fusion_strategy is not None for h in self.checkpoint.heads)

    def check_dataset(self, dataset: SyntheticDataset) -> None:
        if dataset.ys != self.checkpoint.ys:
            raise ConfigError(
                f"Checkpoint y-sampling {self.checkpoint.ys.to_list()} differs from dataset {dataset.ys.to_list()}"
            )
        channels = tuple(dataset.manifest.get("channels", ()))
        if channels and channels != self.checkpoint.channels:
            raise ConfigError(f"Checkpoint channels {self.checkpoint.channels} differ from dataset {channels}")

    def predict_scene(
        self,
        scene: LoadedScene,
        iterations: int,
        previous: PreviousFrame | None = None,
    ) -> list[Proposal]:
        heads = self.checkpoint.heads_for(iterations)
        raw = predict_iterative(scene.feature_map, self.anchors, heads, scene.rig, iterations, previous)
        kept = postprocess(raw, self.inference)
        logger.debug("{}: {} proposals kept of {}", scene.scene_id, len(kept), len(raw))
        return kept

    def refine_scene(self, proposals: Sequence[Proposal]) -> list[Proposal]:
        return refine_proposals(proposals, self.ewc)

    def predict_dataset(
        self,
        dataset: SyntheticDataset,
        scene_ids: Sequence[str],
        *,
        iterations: int = 1,
        temporal: bool = False,
        max_frame_gap: int = 5,
        refine: bool = False,
        jobs: int = 1,
        show_progress: bool = False,
    ) -> dict[str, list[Proposal]]:
        """Proposals per scene; identical output for any ``jobs``."""
        self.check_dataset(dataset)
        if temporal and not self.has_fusion:
            raise ConfigError("--temporal needs a checkpoint trained with temporal fusion")
        # load sequentially so worker threads only compute
        for scene_id in scene_ids:
            dataset.load_scene(scene_id)
            if temporal:
                dataset.history(scene_id, max_frame_gap)

        def _predict(scene_id: str) -> list[Proposal]:
            previous = None
            if temporal:
                frames = dataset.history(scene_id, max_frame_gap)
                previous = frames[-1] if frames else None
            proposals = self.predict_scene(dataset.load_scene(scene_id), iterations, previous)
            return self.refine_scene(proposals) if refine else proposals

        return run_scenes("predict", list(scene_ids), _predict, jobs=jobs, show_progress=show_progress)


def refine_predictions(
    predictions: Mapping[str, Sequence[Proposal]],
    cfg: EwcConfig,
    *,
    jobs: int = 1,
) -> dict[str, list[Proposal]]:
    """Equal-width refinement without a checkpoint."""

    return run_scenes("refine", sorted(predictions), lambda sid: refine_proposals(predictions[sid], cfg), jobs=jobs)


def evaluate_predictions(
    predictions: Mapping[str, Sequence[Proposal | Lane3D]],
    ground_truth: Mapping[str, Sequence[Lane3D]],
    protocol: str,
    eval_cfg: EvalConfig,
    once_cfg: OnceEvalConfig,
) -> dict[str, MetricsReport | OnceReport]:
    """Reports keyed by protocol name.

    Scenes with ground truth but no predictions count as all misses; predicted
    scenes absent from the ground truth are ignored with a warning.
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"Unknown protocol '{protocol}', choose from {PROTOCOLS}")
    extra = sorted(set(predictions) - set(ground_truth))
    if extra:
        logger.warning("Ignoring {} predicted scenes without ground truth (first: {})", len(extra), extra[0])
    paired = {sid: (list(predictions.get(sid, [])), list(gts)) for sid, gts in ground_truth.items()}
    reports: dict[str, MetricsReport | OnceReport] = {}
    if protocol in ("standard", "both"):
        reports["standard"] = compute_dataset_metrics(paired, eval_cfg)
    if protocol in ("once", "both"):
        reports["once"] = once_dataset_metrics(paired, once_cfg)
    return reports
