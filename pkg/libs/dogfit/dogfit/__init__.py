"""dogfit - scaled quadruped motion recovery from single- and multi-view RGB(-D) sequences."""

__version__ = "0.1.0"

from .exceptions import (
    AssetValidationError,
    CameraError,
    ConfigError,
    DivergenceError,
    DogfitError,
    InvalidRotationError,
    NonFiniteLossError,
    ObservationError,
    SchemaError,
)
from .field import MotionField, eval_field, init_field
from .fitting import FitSettings, MotionSolution, fit_sequence
from .geometry import Camera, CameraRig, backproject, project
from .metrics import MetricsReport, evaluate_solution
from .model import BodyState, PosedMesh, TemplateAssets, load_assets, pose_mesh, save_assets
from .objectives import FrameObservation, LossWeights, total_loss
from .synth import NoiseSpec, SynthSpec, make_template, render_observations, synth_motion
from .types import Gait, Setting

__all__ = [
    "AssetValidationError",
    "BodyState",
    "Camera",
    "CameraError",
    "CameraRig",
    "ConfigError",
    "DivergenceError",
    "DogfitError",
    "FitSettings",
    "FrameObservation",
    "Gait",
    "InvalidRotationError",
    "LossWeights",
    "MetricsReport",
    "MotionField",
    "MotionSolution",
    "NoiseSpec",
    "NonFiniteLossError",
    "ObservationError",
    "PosedMesh",
    "SchemaError",
    "Setting",
    "SynthSpec",
    "TemplateAssets",
    "backproject",
    "eval_field",
    "evaluate_solution",
    "fit_sequence",
    "init_field",
    "load_assets",
    "make_template",
    "pose_mesh",
    "project",
    "render_observations",
    "save_assets",
    "synth_motion",
    "total_loss",
]
