from __future__ import annotations


class Lane3DError(Exception):
    """Base class for every domain error raised by this package."""


class DepthNonPositive(Lane3DError, ValueError):
    """A ground point sits at or behind the camera plane."""

    def __init__(self, depth: float) -> None:
        super().__init__(f"Projected depth {depth:.6g} m is not in front of the camera.")
        self.depth = depth


class EmptyGrid(Lane3DError, ValueError):
    """An anchor grid factor list is empty."""


class LengthMismatch(Lane3DError, ValueError):
    """Point count disagrees with the y-sampling."""


class NoVisiblePoints(Lane3DError, ValueError):
    """A ground-truth lane has no visible point."""


class ShapeMismatch(Lane3DError, ValueError):
    """Tensor shapes disagree with the head configuration."""


class NonFiniteGradient(Lane3DError, RuntimeError):
    """Training produced a NaN or infinite gradient."""

    def __init__(self, tensor_name: str) -> None:
        super().__init__(f"Non-finite gradient in tensor '{tensor_name}'.")
        self.tensor_name = tensor_name


class UnknownStrategy(Lane3DError, ValueError):
    """Temporal fusion strategy name is not supported."""


class TooFewLanes(Lane3DError, ValueError):
    """Equal-width refinement needs at least two comparable lanes."""


class EmptyGroundTruth(Lane3DError, ValueError):
    """Evaluation was asked to score against zero ground-truth lanes."""


class ConfigError(Lane3DError, ValueError):
    """Run configuration is invalid or unreadable."""


class DatasetIoError(Lane3DError, OSError):
    """A dataset, checkpoint or report file is missing or malformed."""


class SceneStageError(Lane3DError, RuntimeError):
    """Per-scene pipeline failure, keeps the stage and scene for the report."""

    def __init__(self, *, stage: str, scene_id: str, original_error: Exception) -> None:
        super().__init__(f"[{stage}] {scene_id}: {original_error}")
        self.stage = stage
        self.scene_id = scene_id
        self.original_error = original_error
