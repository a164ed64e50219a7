"""Per-view per-frame observations and the loss weight/sampling configuration."""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import ObservationError
from ..geometry.camera import Camera, backproject
from ..types import DTYPE

DEFAULT_DELTA = math.exp(-0.05)


@dataclass
class FrameObservation:
    """Everything observed by one camera at one frame.

    Attributes:
        view_id: Camera id
        frame: Frame index t
        mask: (H, W) binary mask
        depth: Optional (H, W) integer depth in the camera's depth_unit, 0 = missing
        keypoints: (K, 4) rows of (u, v, confidence, present)
        cse_pixels: (M, 2) correspondence pixel positions
        cse_vertices: (M,) template vertex indices
        cse_confidence: (M,) correspondence confidences
        rgb: Optional (H, W, 3) reference image, never used by any loss
    """

    view_id: str
    frame: int
    mask: np.ndarray
    depth: Optional[np.ndarray] = None
    keypoints: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    cse_pixels: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    cse_vertices: np.ndarray = field(default_factory=lambda: np.zeros((0,), dtype=np.int64))
    cse_confidence: np.ndarray = field(default_factory=lambda: np.zeros((0,)))
    rgb: Optional[np.ndarray] = None
    _cache: Dict[str, torch.Tensor] = field(default_factory=dict, repr=False, compare=False)

    @property
    def has_depth(self) -> bool:
        return self.depth is not None

    def validate(self, cam: Camera, vertex_count: Optional[int] = None) -> "FrameObservation":
        """Check image sizes, pixel bounds, vertex indices and confidence ranges."""
        where = f"view {self.view_id} frame {self.frame}"
        if self.mask.shape != (cam.height, cam.width):
            raise ObservationError(
                f"{where}: mask {self.mask.shape} does not match camera {cam.height}x{cam.width}",
                view_id=self.view_id,
                frame=self.frame,
            )
        if self.depth is not None and self.depth.shape != self.mask.shape:
            raise ObservationError(
                f"{where}: depth {self.depth.shape} and mask {self.mask.shape} differ",
                view_id=self.view_id,
                frame=self.frame,
            )
        for name, pixels in (("keypoints", self.keypoints[:, :2]), ("cse", self.cse_pixels)):
            if len(pixels) and (
                (pixels < -0.5).any()
                or (pixels[:, 0] > cam.width - 0.5).any()
                or (pixels[:, 1] > cam.height - 0.5).any()
            ):
                raise ObservationError(
                    f"{where}: {name} pixel outside the image", view_id=self.view_id, frame=self.frame
                )
        for name, conf in (("keypoint", self.keypoints[:, 2]), ("cse", self.cse_confidence)):
            if len(conf) and ((conf < 0).any() or (conf > 1).any()):
                raise ObservationError(
                    f"{where}: {name} confidence outside [0, 1]", view_id=self.view_id, frame=self.frame
                )
        if vertex_count is not None and len(self.cse_vertices):
            if self.cse_vertices.min() < 0 or self.cse_vertices.max() >= vertex_count:
                raise ObservationError(
                    f"{where}: correspondence vertex index out of range",
                    view_id=self.view_id,
                    frame=self.frame,
                )
        return self

    def mask_points(self, max_points: int = 4000, seed: int = 0) -> torch.Tensor:
        """Foreground pixel coordinates (u, v), uniformly subsampled to ``max_points``."""
        key = f"mask:{max_points}:{seed}"
        if key not in self._cache:
            self._cache[key] = mask_pixels(
                self.mask, max_points, _stream_seed(seed, self.view_id, self.frame)
            )
        return self._cache[key]

    def depth_points(self, cam: Camera, max_points: int = 4000, seed: int = 0) -> torch.Tensor:
        """Masked depth pixels lifted to world points, subsampled like the mask."""
        if self.depth is None:
            return torch.zeros(0, 3, dtype=DTYPE)
        key = f"depth:{max_points}:{seed}"
        if key not in self._cache:
            points = backproject(cam, self.depth, self.mask).numpy()
            self._cache[key] = torch.as_tensor(
                subsample(points, max_points, _stream_seed(seed, self.view_id, self.frame) + 1),
                dtype=DTYPE,
            )
        return self._cache[key]

    def drop_depth(self) -> "FrameObservation":
        return FrameObservation(
            view_id=self.view_id,
            frame=self.frame,
            mask=self.mask,
            depth=None,
            keypoints=self.keypoints,
            cse_pixels=self.cse_pixels,
            cse_vertices=self.cse_vertices,
            cse_confidence=self.cse_confidence,
            rgb=self.rgb,
        )


def _stream_seed(seed: int, view_id: str, frame: int) -> int:
    view_hash = sum((i + 1) * ord(c) for i, c in enumerate(view_id))
    return (int(seed) * 1_000_003 + view_hash * 10_007 + int(frame)) % (2**32)


def subsample(points: np.ndarray, max_points: int, seed: int) -> np.ndarray:
    """Keep at most ``max_points`` rows, chosen uniformly without replacement, in original order."""
    if max_points < 1:
        raise ValueError(f"max_points must be >= 1, got {max_points}")
    if len(points) <= max_points:
        return points
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(points), size=max_points, replace=False))
    return points[keep]


def mask_pixels(mask: np.ndarray, max_points: int = 4000, seed: int = 0) -> torch.Tensor:
    """Foreground pixels of a mask as (u, v) rows, seeded subsample of at most ``max_points``."""
    rows, cols = np.nonzero(np.asarray(mask) > 0)
    points = np.stack([cols, rows], axis=-1).astype(np.float64)
    return torch.as_tensor(subsample(points, max_points, seed), dtype=DTYPE)


class LossWeights(BaseModel):
    """Per-term weights of the total objective."""

    model_config = ConfigDict(extra="forbid")

    mask: float = Field(400.0, ge=0)
    keypoint: float = Field(60.0, ge=0)
    depth: float = Field(1.0, ge=0)
    cse: float = Field(20.0, ge=0)
    cross: float = Field(2.5, ge=0)
    prior: float = Field(0.005, ge=0)
    temporal: float = Field(0.1, ge=0)
    w_body: float = Field(1.0, ge=0, description="Weight of the shape Mahalanobis term")
    w_limb: float = Field(1.0, ge=0, description="Weight of the limb coefficient penalty")
    delta: float = Field(DEFAULT_DELTA, gt=0, lt=1, description="Leg-cross activation threshold")

    def as_vector(self) -> tuple:
        return (self.mask, self.keypoint, self.depth, self.cse, self.cross, self.prior, self.temporal)


class SampleConfig(BaseModel):
    """Surface and pixel sampling used by the Chamfer terms."""

    model_config = ConfigDict(extra="forbid")

    samples: int = Field(1500, ge=1, description="Surface points per frame")
    leg_boost: float = Field(4.0, ge=1.0, description="Area multiplier for leg faces")
    max_mask_pixels: int = Field(4000, ge=1)
    max_depth_points: int = Field(4000, ge=1)
    keypoint_threshold: float = Field(0.3, ge=0, le=1)
    depth_facing_only: bool = Field(
        True, description="Match each view's depth cloud against camera-facing samples only"
    )
    seed: int = 0
