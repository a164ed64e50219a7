"""Loss terms and the staged total objective."""

from .chamfer import chamfer_2d, chamfer_3d
from .losses import (
    cse_loss,
    depth_loss,
    keypoint_loss,
    leg_cross_loss,
    mask_loss,
    pose_prior_loss,
    shape_prior_loss,
    temporal_loss,
)
from .observation import FrameObservation, LossWeights, SampleConfig
from .total import LossBreakdown, total_loss

__all__ = [
    "FrameObservation",
    "LossBreakdown",
    "LossWeights",
    "SampleConfig",
    "chamfer_2d",
    "chamfer_3d",
    "cse_loss",
    "depth_loss",
    "keypoint_loss",
    "leg_cross_loss",
    "mask_loss",
    "pose_prior_loss",
    "shape_prior_loss",
    "temporal_loss",
    "total_loss",
]
