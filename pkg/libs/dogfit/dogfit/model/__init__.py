"""Parametric articulated body model."""

from .assets import KeypointEntry, TemplateAssets, load_assets, save_assets
from .body import (
    BodyState,
    PosedMesh,
    forward_kinematics,
    linear_blend_skinning,
    model_keypoints,
    pose_mesh,
    pose_sequence,
)
from .rotations import matrix_to_rot6d, rot6d_to_matrix
from .sampling import SurfaceSamples, sample_surface

__all__ = [
    "BodyState",
    "KeypointEntry",
    "PosedMesh",
    "SurfaceSamples",
    "TemplateAssets",
    "forward_kinematics",
    "linear_blend_skinning",
    "load_assets",
    "matrix_to_rot6d",
    "model_keypoints",
    "pose_mesh",
    "pose_sequence",
    "rot6d_to_matrix",
    "sample_surface",
    "save_assets",
]
