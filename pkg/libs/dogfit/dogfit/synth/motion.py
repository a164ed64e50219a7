"""Scripted quadruped gaits producing ground-truth body states."""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..exceptions import ConfigError
from ..model.assets import TemplateAssets
from ..model.body import BodyState, pose_sequence, shaped_rest
from ..model.rotations import axis_angle_to_matrix, matrix_to_rot6d, yaw_matrix
from ..types import DTYPE, Gait
from .template import LEGS

logger = logging.getLogger(__name__)

FLOOR_CLEARANCE = 1e-5
DISC_RADIUS = 2.0
MAX_PATH = 3.2
STRIDE_FRACTION = 0.35
KNEE_LIFT = 0.9


class NoiseSpec(BaseModel):
    """Observation noise; all zeros gives noise-free observations."""

    model_config = ConfigDict(extra="forbid")

    keypoint_sigma: float = Field(0.0, ge=0, description="Gaussian keypoint noise (px)")
    mask_px: int = Field(0, ge=0, description="Mask boundary erosion/dilation radius (px)")
    depth_sigma: float = Field(0.0, ge=0, description="Gaussian depth noise (m)")
    cse_dropout: float = Field(0.0, ge=0, le=1, description="Fraction of correspondences dropped")
    cse_sigma: float = Field(0.0, ge=0, description="Std of the uniform correspondence jitter (px)")

    @classmethod
    def realistic(cls) -> "NoiseSpec":
        return cls(keypoint_sigma=2.0, mask_px=1, depth_sigma=0.005, cse_dropout=0.2, cse_sigma=3.0)


class SynthSpec(BaseModel):
    """Recipe for one synthetic sequence."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    size_class: float = Field(0.4, gt=0, description="Template withers height (m)")
    scale: float = Field(1.2, gt=0, description="Ground-truth global scale s")
    beta_std: float = Field(0.3, ge=0, description="Std of the ground-truth shape coefficients")
    cameras: int = Field(5, ge=1)
    ring_radius: float = Field(2.5, gt=0)
    camera_height: float = 0.45
    pitch_jitter_deg: float = Field(10.0, ge=0)
    width: int = Field(320, ge=8)
    height: int = Field(240, ge=8)
    focal: float = Field(300.0, gt=0)
    frames: int = Field(60, ge=2)
    fps: float = Field(15.0, gt=0)
    gait: Gait = Gait.WALK
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    cse_per_frame: int = Field(300, ge=0)
    template_resolution: float = Field(1.0, gt=0)
    write_rgb: bool = False


def load_spec(path: Union[str, Path]) -> SynthSpec:
    path = Path(path)
    try:
        return SynthSpec.model_validate(json.loads(path.read_text()))
    except FileNotFoundError as e:
        raise ConfigError(f"spec file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"spec file {path} is not valid JSON: {e}") from e
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid synth spec {path}: {details}") from e


@dataclass(frozen=True)
class GaitPattern:
    period: float
    duty: float
    offsets: Dict[str, float]
    flights: Tuple[Tuple[float, float], ...] = ()
    hop: float = 0.0


GAITS: Dict[Gait, GaitPattern] = {
    Gait.WALK: GaitPattern(1.0, 0.6, {"back_l": 0.0, "front_l": 0.25, "back_r": 0.5, "front_r": 0.75}),
    Gait.TROT: GaitPattern(0.6, 0.5, {"front_l": 0.0, "back_r": 0.0, "front_r": 0.5, "back_l": 0.5}),
    Gait.JUMP: GaitPattern(
        0.8,
        0.35,
        {"front_l": 0.0, "front_r": 0.05, "back_l": 0.5, "back_r": 0.55},
        flights=((0.40, 0.5), (0.90, 1.0)),
        hop=0.08,
    ),
}


def _ease(w: float) -> float:
    return 0.5 * (1.0 - math.cos(math.pi * w))


def leg_offset(u: float, duty: float, stride: float) -> Tuple[float, float]:
    """Paw offset along the body axis and knee lift for gait phase ``u`` in [0, 1).

    During stance the offset falls linearly from +stride/2 to -stride/2, which keeps the
    paw still while the body advances. During swing the paw's world position eases from
    rest to rest.
    """
    if u < duty:
        return 0.5 * stride - stride * (u / duty), 0.0
    w = (u - duty) / (1.0 - duty)
    offset = -0.5 * stride + (stride / duty) * _ease(w) - (stride / duty) * (1.0 - duty) * w
    return offset, KNEE_LIFT * math.sin(math.pi * w)


def hip_pitch(p0: np.ndarray, offset: float) -> float:
    """Pitch about +y that moves a rigid leg's paw by ``offset`` along the body axis."""
    rho = math.hypot(p0[0], p0[2])
    psi = math.atan2(p0[2], p0[0])
    return psi + math.acos(max(-1.0, min(1.0, (p0[0] + offset) / rho)))


def _flight(u: float, pattern: GaitPattern) -> float:
    for start, end in pattern.flights:
        if start <= u < end:
            return pattern.hop * math.sin(math.pi * (u - start) / (end - start))
    return 0.0


def synth_motion(assets: TemplateAssets, spec: SynthSpec) -> BodyState:
    """Ground-truth sequence of ``spec.frames`` states for the requested gait.

    The root follows a straight line through the middle of the capture disc. Each frame
    the root is lifted so the lowest vertex sits just above the floor (plus any hop).
    """
    rng = np.random.default_rng(spec.seed)
    N = assets.joint_count
    T = spec.frames
    beta = torch.as_tensor(rng.normal(0.0, spec.beta_std, size=assets.shape_dim), dtype=DTYPE)
    s = float(spec.scale)
    _, joints = shaped_rest(assets, beta)
    joints = joints.numpy()

    pattern = GAITS.get(spec.gait)
    legs = {}
    for leg, (top, mid, _, paw) in LEGS.items():
        legs[leg] = (top, mid, joints[paw] - joints[top])
    rho_min = min(math.hypot(p0[0], p0[2]) for _, _, p0 in legs.values())

    heading = float(rng.uniform(0.0, 2.0 * math.pi))
    direction = np.array([math.cos(heading), math.sin(heading), 0.0])
    lateral = np.array([-direction[1], direction[0], 0.0]) * rng.uniform(-0.2, 0.2)
    duration = (T - 1) / spec.fps
    if pattern is None:
        stride, speed = 0.0, 0.0
    else:
        stride = STRIDE_FRACTION * rho_min
        speed = s * stride / (pattern.duty * pattern.period)
        if speed * duration > MAX_PATH:
            stride *= MAX_PATH / (speed * duration)
            speed = s * stride / (pattern.duty * pattern.period)
    path_length = speed * duration

    rotations = np.tile(np.eye(3), (T, N, 1, 1))
    hops = np.zeros(T)
    translation = np.zeros((T, 3))
    for t in range(T):
        seconds = t / spec.fps
        translation[t] = lateral + direction * (speed * seconds - 0.5 * path_length)
        if pattern is None:
            continue
        cycle = seconds / pattern.period
        for leg, (top, mid, p0) in legs.items():
            u = (cycle + pattern.offsets[leg]) % 1.0
            offset, lift = leg_offset(u, pattern.duty, stride)
            rotations[t, top] = axis_angle_to_matrix((0.0, 1.0, 0.0), hip_pitch(p0, offset)).numpy()
            sign = 1.0 if leg.startswith("front") else -1.0
            rotations[t, mid] = axis_angle_to_matrix((0.0, 1.0, 0.0), sign * lift).numpy()
        hops[t] = _flight(cycle % 1.0, pattern)
        wag = 0.3 * math.sin(2.0 * math.pi * cycle)
        rotations[t, 28] = axis_angle_to_matrix((0.0, 0.0, 1.0), wag).numpy()
        bob = 0.05 * math.sin(4.0 * math.pi * cycle)
        rotations[t, 20] = axis_angle_to_matrix((0.0, 1.0, 0.0), bob).numpy()

    theta = matrix_to_rot6d(torch.as_tensor(rotations, dtype=DTYPE)).reshape(T, 6 * N)
    orientation = matrix_to_rot6d(yaw_matrix(heading)).expand(T, 6).clone()
    state = BodyState(
        beta=beta,
        scale=torch.tensor(s, dtype=DTYPE),
        theta=theta,
        translation=torch.as_tensor(translation, dtype=DTYPE),
        orientation=orientation,
    )
    with torch.no_grad():
        lowest = pose_sequence(assets, state).vertices[..., 2].min(dim=-1).values
    state.translation[:, 2] = -lowest + FLOOR_CLEARANCE + torch.as_tensor(hops, dtype=DTYPE)
    logger.info(
        f"Synthesized {T} frames of {spec.gait} at {speed:.3f} m/s, heading {math.degrees(heading):.0f} deg"
    )
    return state.validate()


def trajectory_radius(state: BodyState) -> float:
    """Largest horizontal distance of the root translation from the disc center."""
    return float(state.translation[:, :2].norm(dim=-1).max())

