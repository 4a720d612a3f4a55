"""Synthetic road scenes, analytic feature maps and dataset directories."""

from .dataset import LoadedScene, SyntheticDataset, build_dataset, sample_spec
from .render import render_feature_map
from .scene import RoadFrame, Scene, generate_scene
from .sequence import chain_to_first, generate_sequence

__all__ = [
    "LoadedScene",
    "RoadFrame",
    "Scene",
    "SyntheticDataset",
    "build_dataset",
    "chain_to_first",
    "generate_scene",
    "generate_sequence",
    "render_feature_map",
    "sample_spec",
]
