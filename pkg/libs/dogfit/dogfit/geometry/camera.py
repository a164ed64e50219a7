"""Pinhole cameras, projection and depth back-projection."""

import json
import logging
import math
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..exceptions import CameraError, SchemaError
from ..types import DTYPE, as_tensor

logger = logging.getLogger(__name__)

Z_NEAR = 1e-4


class Camera(BaseModel):
    """Static pinhole camera without lens distortion.

    ``R`` and ``t`` map world to camera coordinates: X_cam = R X_world + t, with x right,
    y down and z along the optical axis.
    """

    id: str = Field(..., description="Camera identifier, matches view_<id> folders")
    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    R: List[float] = Field(..., description="Row-major 3x3 world-to-camera rotation")
    t: List[float] = Field(..., description="World-to-camera translation (meters)")
    depth_unit: float = Field(0.001, gt=0, description="Meters per stored depth integer")

    @field_validator("R")
    @classmethod
    def rotation_must_be_orthonormal(cls, v: List[float]) -> List[float]:
        if len(v) != 9:
            raise ValueError("R must have 9 entries")
        m = np.asarray(v, dtype=np.float64).reshape(3, 3)
        if not np.allclose(m @ m.T, np.eye(3), atol=1e-6) or np.linalg.det(m) < 0:
            raise ValueError("R must be orthonormal with determinant +1")
        return v

    @field_validator("t")
    @classmethod
    def translation_must_have_three_entries(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("t must have 3 entries")
        return v

    @cached_property
    def rotation(self) -> torch.Tensor:
        return torch.tensor(self.R, dtype=DTYPE).reshape(3, 3)

    @cached_property
    def translation(self) -> torch.Tensor:
        return torch.tensor(self.t, dtype=DTYPE)

    @property
    def center(self) -> torch.Tensor:
        """Camera position in world coordinates."""
        return -(self.rotation.T @ self.translation)

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.width, self.height

    def to_camera(self, points) -> torch.Tensor:
        points = as_tensor(points)
        return points @ self.rotation.T + self.translation

    def to_world(self, points) -> torch.Tensor:
        points = as_tensor(points)
        return (points - self.translation) @ self.rotation

    @classmethod
    def look_at(
        cls,
        id: str,
        eye,
        target,
        fx: float,
        fy: float,
        width: int,
        height: int,
        cx: Optional[float] = None,
        cy: Optional[float] = None,
        up=(0.0, 0.0, 1.0),
        depth_unit: float = 0.001,
    ) -> "Camera":
        """Build a camera at ``eye`` looking at ``target`` with +z as world up."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-12:
            raise CameraError(f"camera {id} looks along the up axis")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward])
        translation = -rotation @ eye
        return cls(
            id=id,
            fx=fx,
            fy=fy,
            cx=(width - 1) / 2.0 if cx is None else cx,
            cy=(height - 1) / 2.0 if cy is None else cy,
            width=width,
            height=height,
            R=rotation.reshape(-1).tolist(),
            t=translation.tolist(),
            depth_unit=depth_unit,
        )


class CameraRig(BaseModel):
    """Ordered list of cameras observing one sequence."""

    id: str = "rig"
    cameras: List[Camera]

    @model_validator(mode="after")
    def cameras_must_be_unique(self) -> "CameraRig":
        if not self.cameras:
            raise ValueError("rig must contain at least one camera")
        ids = [c.id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate camera ids in {ids}")
        return self

    def __len__(self) -> int:
        return len(self.cameras)

    def __getitem__(self, camera_id: str) -> Camera:
        for cam in self.cameras:
            if cam.id == camera_id:
                return cam
        raise CameraError(f"unknown camera {camera_id}")

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.cameras]

    def subset(self, ids: List[str]) -> "CameraRig":
        return CameraRig(id=self.id, cameras=[self[i] for i in ids])

    @classmethod
    def ring(
        cls,
        count: int = 5,
        radius: float = 2.5,
        height: float = 0.45,
        target=(0.0, 0.0, 0.2),
        pitch_jitter_deg: float = 10.0,
        width: int = 320,
        height_px: int = 240,
        focal: float = 300.0,
        seed: int = 0,
        depth_unit: float = 0.001,
    ) -> "CameraRig":
        """Cameras evenly distributed on a circle, looking at the disc center.

        Each camera's aim point is moved vertically so its pitch differs from the
        straight look-at pitch by a seeded offset within +-pitch_jitter_deg.
        """
        if count < 1 or radius <= 0:
            raise CameraError("ring needs count >= 1 and radius > 0")
        rng = np.random.default_rng(seed)
        cameras = []
        target = np.asarray(target, dtype=np.float64)
        for i in range(count):
            angle = 2.0 * math.pi * i / count
            eye = np.array([radius * math.cos(angle), radius * math.sin(angle), height])
            jitter = math.radians(rng.uniform(-pitch_jitter_deg, pitch_jitter_deg))
            horizontal = np.linalg.norm((target - eye)[:2])
            base_pitch = math.atan2(target[2] - eye[2], horizontal)
            aim = target.copy()
            aim[2] = eye[2] + horizontal * math.tan(base_pitch + jitter)
            cameras.append(
                Camera.look_at(
                    id=str(i),
                    eye=eye,
                    target=aim,
                    fx=focal,
                    fy=focal,
                    width=width,
                    height=height_px,
                    depth_unit=depth_unit,
                )
            )
        return cls(id=f"ring{count}", cameras=cameras)


def project(cam: Camera, points) -> Tuple[torch.Tensor, torch.Tensor]:
    """Project world points to continuous pixel coordinates.

    Pixel (i, j) has its center at u = i, v = j.

    Args:
        cam: Camera
        points: (..., 3) world points

    Returns:
        (uv, valid): uv (..., 2) pixels and a boolean mask of points in front of z_near.
        Invalid points get a finite placeholder projection and must be excluded by callers.
    """
    cam_points = cam.to_camera(points)
    z = cam_points[..., 2]
    valid = z > Z_NEAR
    safe_z = torch.where(valid, z, torch.ones_like(z))
    u = cam.fx * cam_points[..., 0] / safe_z + cam.cx
    v = cam.fy * cam_points[..., 1] / safe_z + cam.cy
    return torch.stack([u, v], dim=-1), valid


def pixel_rays(cam: Camera, pixels) -> torch.Tensor:
    """Camera-frame ray directions with unit z for pixel coordinates (..., 2)."""
    pixels = as_tensor(pixels)
    x = (pixels[..., 0] - cam.cx) / cam.fx
    y = (pixels[..., 1] - cam.cy) / cam.fy
    return torch.stack([x, y, torch.ones_like(x)], dim=-1)


def backproject_pixels(cam: Camera, pixels, depth_m) -> torch.Tensor:
    """World points for pixels at the given camera depths (meters)."""
    rays = pixel_rays(cam, pixels)
    return cam.to_world(rays * as_tensor(depth_m).unsqueeze(-1))


def backproject(cam: Camera, depth: np.ndarray, mask: Optional[np.ndarray] = None) -> torch.Tensor:
    """Lift masked depth pixels into world-frame 3D points.

    Args:
        cam: Camera that captured the depth image
        depth: (H, W) integer depth in ``cam.depth_unit``; 0 marks missing depth
        mask: (H, W) binary mask; all pixels when omitted

    Returns:
        (M, 3) world points, one per masked pixel with valid depth (row-major order)
    """
    depth = np.asarray(depth)
    if mask is None:
        mask = np.ones(depth.shape, dtype=bool)
    mask = np.asarray(mask)
    if depth.shape != mask.shape:
        raise CameraError(f"depth {depth.shape} and mask {mask.shape} differ in size")
    rows, cols = np.nonzero((mask > 0) & (depth > 0))
    if rows.size == 0:
        return torch.zeros(0, 3, dtype=DTYPE)
    pixels = torch.as_tensor(np.stack([cols, rows], axis=-1), dtype=DTYPE)
    depth_m = torch.as_tensor(depth[rows, cols], dtype=DTYPE) * cam.depth_unit
    return backproject_pixels(cam, pixels, depth_m)


def depth_to_points(cam: Camera, depth: np.ndarray) -> torch.Tensor:
    """All valid depth pixels as world points."""
    return backproject(cam, depth, None)


class CamerasDocument(BaseModel):
    """cameras.json schema: a list of cameras plus the rig id."""

    rig_id: str = "rig"
    cameras: List[Camera]


def save_cameras(rig: CameraRig, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = CamerasDocument(rig_id=rig.id, cameras=rig.cameras)
    path.write_text(doc.model_dump_json(indent=2))


def load_cameras(path: Union[str, Path]) -> CameraRig:
    """Load cameras.json, accepting either the document form or a bare list."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
        if isinstance(raw, list):
            raw = {"cameras": raw}
        doc = CamerasDocument.model_validate(raw)
        rig = CameraRig(id=doc.rig_id, cameras=doc.cameras)
    except FileNotFoundError as e:
        raise SchemaError(f"cameras file not found: {path}", file=str(path)) from e
    except ValidationError as e:
        diagnostics = [f"{path}: {'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
        raise SchemaError(f"invalid cameras file {path}", file=str(path), diagnostics=diagnostics) from e
    logger.debug(f"Loaded {len(rig)} cameras from {path}")
    return rig
