"""Scene-level predict / refine / evaluate entrypoints."""

from .lane_pipeline import LanePipeline, evaluate_predictions, refine_predictions, refine_proposals, run_scenes

__all__ = ["LanePipeline", "evaluate_predictions", "refine_predictions", "refine_proposals", "run_scenes"]
