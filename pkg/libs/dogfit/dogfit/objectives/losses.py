"""The individual loss terms.

Data terms take one observation, the posed mesh of its frame and the observing camera.
Terms that have nothing to compare (empty mask, no keypoints, no depth, no
correspondences) return zero and leave a record in the optional ``SkipLog``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set, Tuple

import torch

from ..geometry.camera import Camera, project
from ..model.assets import TemplateAssets
from ..model.body import PosedMesh
from ..model.sampling import SurfaceSamples, sample_surface
from ..types import DTYPE, as_tensor
from .chamfer import chamfer_2d, chamfer_3d
from .observation import FrameObservation, SampleConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SkipRecord:
    term: str
    view_id: Optional[str]
    frame: Optional[int]
    reason: str


@dataclass
class SkipLog:
    """Unique skip records of one stage."""

    records: List[SkipRecord] = field(default_factory=list)
    _seen: Set[SkipRecord] = field(default_factory=set, repr=False)

    def add(self, term: str, view_id: Optional[str], frame: Optional[int], reason: str) -> None:
        record = SkipRecord(term, view_id, frame, reason)
        if record in self._seen:
            return
        self._seen.add(record)
        self.records.append(record)
        logger.debug(f"Skipping {term} for view {view_id} frame {frame}: {reason}")

    def __len__(self) -> int:
        return len(self.records)


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=DTYPE)


def _skip(skips: Optional[SkipLog], term: str, obs: FrameObservation, reason: str) -> torch.Tensor:
    if skips is not None:
        skips.add(term, obs.view_id, obs.frame, reason)
    else:
        logger.debug(f"Skipping {term} for view {obs.view_id} frame {obs.frame}: {reason}")
    return _zero()


def _samples(mesh: PosedMesh, config: SampleConfig, samples: Optional[SurfaceSamples]) -> SurfaceSamples:
    if samples is not None:
        return samples
    return sample_surface(mesh, config.samples, leg_boost=config.leg_boost, seed=config.seed)


def mask_loss(
    obs: FrameObservation,
    mesh: PosedMesh,
    cam: Camera,
    config: Optional[SampleConfig] = None,
    samples: Optional[SurfaceSamples] = None,
    skips: Optional[SkipLog] = None,
) -> torch.Tensor:
    """Chamfer distance (px) between mask foreground pixels and projected surface samples."""
    config = config or SampleConfig()
    pixels = obs.mask_points(config.max_mask_pixels, config.seed)
    if pixels.shape[0] == 0:
        return _skip(skips, "mask", obs, "empty mask")
    points = _samples(mesh, config, samples).points
    uv, valid = project(cam, points)
    if not valid.any():
        return _skip(skips, "mask", obs, "mesh behind camera")
    return chamfer_2d(pixels, uv[valid])


def keypoint_loss(
    obs: FrameObservation,
    mesh: PosedMesh,
    cam: Camera,
    threshold: float = 0.3,
    skips: Optional[SkipLog] = None,
) -> torch.Tensor:
    """Confidence-weighted mean pixel distance between detected and projected keypoints."""
    if mesh.keypoints is None or obs.keypoints.shape[0] == 0:
        return _skip(skips, "keypoint", obs, "no keypoints")
    observed = as_tensor(obs.keypoints)
    if observed.shape[0] != mesh.keypoints.shape[-2]:
        raise ValueError(
            f"view {obs.view_id} frame {obs.frame}: {observed.shape[0]} keypoints, "
            f"model has {mesh.keypoints.shape[-2]}"
        )
    uv, valid = project(cam, mesh.keypoints)
    confidence = observed[:, 2]
    use = (observed[:, 3] > 0) & (confidence >= threshold) & (confidence > 0) & valid
    if not use.any():
        return _skip(skips, "keypoint", obs, "no confident keypoints")
    errors = torch.linalg.vector_norm(uv[use] - observed[use, :2], dim=-1)
    weights = confidence[use]
    return (weights * errors).sum() / weights.sum()


def facing_mask(samples: SurfaceSamples, mesh: PosedMesh, cam: Camera) -> torch.Tensor:
    """Samples whose face normal points toward the camera center."""
    vertices = mesh.vertices.detach()
    corners = vertices[mesh.faces[samples.face_ids]]
    normals = torch.linalg.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0], dim=-1)
    to_camera = cam.center - samples.points.detach()
    return (normals * to_camera).sum(dim=-1) > 0


def depth_loss(
    obs: FrameObservation,
    mesh: PosedMesh,
    cam: Camera,
    config: Optional[SampleConfig] = None,
    samples: Optional[SurfaceSamples] = None,
    skips: Optional[SkipLog] = None,
) -> torch.Tensor:
    """3D Chamfer distance (m) between the lifted masked depth and surface samples."""
    config = config or SampleConfig()
    if obs.depth is None:
        return _skip(skips, "depth", obs, "no depth")
    cloud = obs.depth_points(cam, config.max_depth_points, config.seed)
    if cloud.shape[0] == 0:
        return _skip(skips, "depth", obs, "no valid masked depth")
    drawn = _samples(mesh, config, samples)
    points = drawn.points
    if config.depth_facing_only:
        facing = facing_mask(drawn, mesh, cam)
        if facing.any():
            points = points[facing]
    return chamfer_3d(cloud, points)


def cse_loss(
    obs: FrameObservation,
    mesh: PosedMesh,
    cam: Camera,
    skips: Optional[SkipLog] = None,
) -> torch.Tensor:
    """Confidence-weighted mean pixel distance between correspondences and their vertices."""
    if obs.cse_vertices.shape[0] == 0:
        return _skip(skips, "cse", obs, "no correspondences")
    index = torch.as_tensor(obs.cse_vertices, dtype=torch.int64)
    uv, valid = project(cam, mesh.vertices[index])
    confidence = as_tensor(obs.cse_confidence)
    use = valid & (confidence > 0)
    if not use.any():
        return _skip(skips, "cse", obs, "no usable correspondences")
    errors = torch.linalg.vector_norm(uv[use] - as_tensor(obs.cse_pixels)[use], dim=-1)
    weights = confidence[use]
    return (weights * errors).sum() / weights.sum()


def leg_cross_loss(
    joints: torch.Tensor, foot_pairs: Sequence[Tuple[int, int]], delta: float
) -> torch.Tensor:
    """Sum over foot pairs of exp(-distance), counted only where it reaches ``delta``.

    Args:
        joints: (..., N, 3) joint positions; leading dimensions are summed over
        foot_pairs: (left, right) joint index pairs
        delta: Activation threshold in (0, 1); the boundary counts
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if not foot_pairs:
        return _zero()
    left = torch.as_tensor([p[0] for p in foot_pairs], dtype=torch.int64)
    right = torch.as_tensor([p[1] for p in foot_pairs], dtype=torch.int64)
    distance = torch.linalg.vector_norm(joints[..., left, :] - joints[..., right, :], dim=-1)
    closeness = torch.exp(-distance)
    return torch.where(closeness >= delta, closeness, torch.zeros_like(closeness)).sum()


def _mahalanobis(x: torch.Tensor, mean: torch.Tensor, cholesky: torch.Tensor) -> torch.Tensor:
    diff = (x - mean).unsqueeze(-1)
    solved = torch.linalg.solve_triangular(cholesky, diff, upper=False)
    return solved.squeeze(-1).pow(2).sum(dim=-1)


def shape_prior_loss(
    beta: torch.Tensor, assets: TemplateAssets, w_body: float = 1.0, w_limb: float = 1.0
) -> torch.Tensor:
    """w_body * (beta - mu)^T Sigma^-1 (beta - mu) + w_limb * ||w * beta||^2."""
    t = assets.tensors
    body = _mahalanobis(beta, t["shape_mean"], assets.shape_cov_cholesky)
    limb = (t["limb_weights"] * beta).pow(2).sum(dim=-1)
    return w_body * body + w_limb * limb


def pose_prior_loss(theta: torch.Tensor, assets: TemplateAssets) -> torch.Tensor:
    """Gaussian pose prior per frame, (...,) for theta (..., 6N)."""
    return _mahalanobis(theta, assets.tensors["pose_mean"], assets.pose_cov_cholesky)


def temporal_loss(joints: torch.Tensor, cams: Sequence[Camera]) -> torch.Tensor:
    """Sum of joint displacements between consecutive frames, in 3D and in each image.

    Args:
        joints: (S, N, 3) joint positions of consecutive frames
        cams: Cameras whose 2D displacement sums are averaged

    Returns:
        Scalar; zero for fewer than two frames
    """
    if joints.shape[0] < 2:
        return _zero()
    steps_3d = torch.linalg.vector_norm(joints[1:] - joints[:-1], dim=-1).sum()
    if not cams:
        return steps_3d
    per_view = []
    for cam in cams:
        uv, valid = project(cam, joints)
        both = valid[1:] & valid[:-1]
        steps = torch.linalg.vector_norm(uv[1:] - uv[:-1], dim=-1)
        per_view.append(torch.where(both, steps, torch.zeros_like(steps)).sum())
    return steps_3d + torch.stack(per_view).mean()
