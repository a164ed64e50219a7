"""Render ground-truth motion into per-view observations with controllable noise."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import cv2
import numpy as np
import torch

from ..geometry.camera import Camera, CameraRig, project
from ..geometry.raster import depth_image, rasterize, render_shaded
from ..model.assets import TemplateAssets
from ..model.body import BodyState, PosedMesh, pose_sequence
from ..objectives.observation import FrameObservation
from .motion import NoiseSpec, SynthSpec, synth_motion
from .template import make_template

logger = logging.getLogger(__name__)

KEYPOINT_MARGIN = 0.01
CSE_VISIBILITY = 0.015


@dataclass
class GroundTruth:
    """The state that produced a synthetic sequence and its joint trajectories."""

    state: BodyState
    joints: torch.Tensor
    seed: int = 0


def _lookup(zbuffer: np.ndarray, uv: np.ndarray) -> np.ndarray:
    H, W = zbuffer.shape
    cols = np.clip(np.rint(uv[:, 0]).astype(np.int64), 0, W - 1)
    rows = np.clip(np.rint(uv[:, 1]).astype(np.int64), 0, H - 1)
    return zbuffer[rows, cols]


def _inside(uv: np.ndarray, cam: Camera) -> np.ndarray:
    return (
        (uv[:, 0] >= -0.5)
        & (uv[:, 0] <= cam.width - 0.5)
        & (uv[:, 1] >= -0.5)
        & (uv[:, 1] <= cam.height - 0.5)
    )


def noisy_mask(mask: np.ndarray, radius: int, rng: np.random.Generator) -> np.ndarray:
    """Erode or dilate (seeded coin flip) a binary mask by ``radius`` pixels; 0/255 uint8."""
    image = mask.astype(np.uint8) * 255
    if radius <= 0:
        return image
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (2 * radius + 1, 2 * radius + 1))
    if rng.random() < 0.5:
        return cv2.erode(image, kernel)
    return cv2.dilate(image, kernel)


def keypoint_radii(mesh: PosedMesh) -> np.ndarray:
    """Distance from each keypoint to the nearest surface vertex (0 for vertex keypoints)."""
    keypoints = mesh.keypoints.detach()
    return torch.cdist(keypoints, mesh.vertices.detach()).min(dim=-1).values.numpy()


def observe_keypoints(
    mesh: PosedMesh,
    cam: Camera,
    zbuffer: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """(K, 4) rows of (u, v, confidence, present) for one view of one frame.

    A keypoint is absent when it projects outside the image or when the rendered surface
    lies clearly in front of it. Interior joints sit ``r_k`` below the surface, so the
    depth test allows that much plus a small margin.
    """
    uv, valid = project(cam, mesh.keypoints.detach())
    uv = uv.numpy()
    depth = cam.to_camera(mesh.keypoints.detach())[:, 2].numpy()
    surface = _lookup(zbuffer, uv)
    occluded = surface < depth - (keypoint_radii(mesh) + KEYPOINT_MARGIN)
    present = valid.numpy() & _inside(uv, cam) & ~occluded
    if sigma > 0:
        uv = uv + rng.normal(0.0, sigma, size=uv.shape)
    uv[:, 0] = np.clip(uv[:, 0], -0.5, cam.width - 0.5)
    uv[:, 1] = np.clip(uv[:, 1], -0.5, cam.height - 0.5)
    rows = np.zeros((len(uv), 4))
    rows[:, :2] = np.where(present[:, None], uv, 0.0)
    rows[:, 2] = present.astype(np.float64)
    rows[:, 3] = present.astype(np.float64)
    return rows


def observe_correspondences(
    mesh: PosedMesh,
    cam: Camera,
    zbuffer: np.ndarray,
    count: int,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pixel/vertex pairs for a seeded subset of visible vertices.

    Dropout removes a fraction of the pairs; jitter is uniform with standard deviation
    ``noise.cse_sigma`` pixels.
    """
    uv, valid = project(cam, mesh.vertices.detach())
    uv = uv.numpy()
    depth = cam.to_camera(mesh.vertices.detach())[:, 2].numpy()
    visible = valid.numpy() & _inside(uv, cam)
    visible &= _lookup(zbuffer, uv) >= depth - CSE_VISIBILITY
    candidates = np.flatnonzero(visible)
    if len(candidates) == 0 or count == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64), np.zeros(0)
    chosen = np.sort(rng.choice(candidates, size=min(count, len(candidates)), replace=False))
    if noise.cse_dropout > 0:
        chosen = chosen[rng.random(len(chosen)) >= noise.cse_dropout]
    pixels = uv[chosen]
    if noise.cse_sigma > 0:
        half = noise.cse_sigma * math.sqrt(3.0)
        pixels = pixels + rng.uniform(-half, half, size=pixels.shape)
    pixels[:, 0] = np.clip(pixels[:, 0], -0.5, cam.width - 0.5)
    pixels[:, 1] = np.clip(pixels[:, 1], -0.5, cam.height - 0.5)
    return pixels, chosen.astype(np.int64), np.ones(len(chosen))


def render_view(
    mesh: PosedMesh,
    cam: Camera,
    frame: int,
    noise: NoiseSpec,
    rng: np.random.Generator,
    cse_per_frame: int = 300,
    write_rgb: bool = False,
) -> FrameObservation:
    """One camera's observation of one posed frame."""
    zbuffer, _ = rasterize(mesh, cam)
    covered = np.isfinite(zbuffer)
    mask = noisy_mask(covered, noise.mask_px, rng)
    noisy_z = zbuffer.copy()
    if noise.depth_sigma > 0:
        noisy_z[covered] += rng.normal(0.0, noise.depth_sigma, size=int(covered.sum()))
    depth = depth_image(noisy_z, cam)
    keypoints = observe_keypoints(mesh, cam, zbuffer, noise.keypoint_sigma, rng)
    pixels, vertices, confidence = observe_correspondences(
        mesh, cam, zbuffer, cse_per_frame, noise, rng
    )
    return FrameObservation(
        view_id=cam.id,
        frame=frame,
        mask=mask,
        depth=depth,
        keypoints=keypoints,
        cse_pixels=pixels,
        cse_vertices=vertices,
        cse_confidence=confidence,
        rgb=render_shaded(mesh, cam) if write_rgb else None,
    )


def render_observations(
    rig: CameraRig,
    assets: TemplateAssets,
    state: BodyState,
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    cse_per_frame: int = 300,
    write_rgb: bool = False,
) -> Tuple[Dict[str, List[FrameObservation]], GroundTruth]:
    """Observations of every frame from every camera plus the ground-truth record.

    Each (view, frame) pair draws from its own seeded stream, so results do not depend
    on the order frames are rendered in.
    """
    with torch.no_grad():
        mesh = pose_sequence(assets, state)
    observations: Dict[str, List[FrameObservation]] = {cam.id: [] for cam in rig.cameras}
    for t in range(state.frame_count):
        frame_mesh = mesh.frame(t).detach()
        for v, cam in enumerate(rig.cameras):
            rng = np.random.default_rng([seed, v, t])
            observations[cam.id].append(
                render_view(frame_mesh, cam, t, noise, rng, cse_per_frame, write_rgb)
            )
        logger.debug(f"Rendered frame {t} in {len(rig)} views")
    logger.info(f"Rendered {state.frame_count} frames from {len(rig)} cameras")
    return observations, GroundTruth(state=state.detach(), joints=mesh.joints.detach(), seed=seed)


def make_rig(spec: SynthSpec) -> CameraRig:
    return CameraRig.ring(
        count=spec.cameras,
        radius=spec.ring_radius,
        height=spec.camera_height,
        target=(0.0, 0.0, 0.5 * spec.size_class * spec.scale),
        pitch_jitter_deg=spec.pitch_jitter_deg,
        width=spec.width,
        height_px=spec.height,
        focal=spec.focal,
        seed=spec.seed,
    )


def synth_sequence(
    spec: SynthSpec,
) -> Tuple[TemplateAssets, CameraRig, Dict[str, List[FrameObservation]], GroundTruth]:
    """Template, rig, observations and ground truth for one synth recipe."""
    assets = make_template(
        seed=spec.seed, size_class=spec.size_class, resolution=spec.template_resolution
    )
    rig = make_rig(spec)
    state = synth_motion(assets, spec)
    observations, truth = render_observations(
        rig, assets, state, spec.noise, spec.seed, spec.cse_per_frame, spec.write_rgb
    )
    return assets, rig, observations, truth
