from .anchor import Anchor, AnchorParams, AnchorSet, YSampling, build_anchor, build_anchor_grid, proposal_to_anchor
from .geometry import (
    CameraIntrinsics,
    CameraRig,
    FeaturePoint,
    GroundPoint,
    ImageDims,
    RigidTransform,
    compose,
    project_ground_to_feature,
    transform_point,
)
from .lane import Assignment, Lane3D, Proposal, anchor_gt_distance, assign_positives, nms
from .sampling import AnchorFeature, FeatureMap, bilinear_sample, sample_anchor_features, sample_cross_frame

__all__ = [
    "Anchor",
    "AnchorFeature",
    "AnchorParams",
    "AnchorSet",
    "Assignment",
    "CameraIntrinsics",
    "CameraRig",
    "FeatureMap",
    "FeaturePoint",
    "GroundPoint",
    "ImageDims",
    "Lane3D",
    "Proposal",
    "RigidTransform",
    "YSampling",
    "anchor_gt_distance",
    "assign_positives",
    "bilinear_sample",
    "build_anchor",
    "build_anchor_grid",
    "compose",
    "nms",
    "project_ground_to_feature",
    "proposal_to_anchor",
    "sample_anchor_features",
    "sample_cross_frame",
    "transform_point",
]
