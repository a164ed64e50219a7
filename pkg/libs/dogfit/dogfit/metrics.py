"""Evaluation metrics: silhouette IoU, F-score, ground penetration, jitter and foot skating."""

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field
from scipy.spatial import KDTree

from .geometry.camera import CameraRig, backproject
from .geometry.raster import rasterize_silhouette
from .model.assets import TemplateAssets
from .model.body import PosedMesh, pose_sequence
from .model.sampling import sample_surface
from .objectives.observation import FrameObservation

logger = logging.getLogger(__name__)

FSCORE_THRESHOLD = 0.05
FSCORE_SAMPLES = 10_000
CONTACT_HEIGHT = 0.04
WORST_FRACTION = 0.05

TABLE_COLUMNS = ("IoU", "IoU_w5", "F-score", "Pene%", "Jitter", "FS")


class MetricsReport(BaseModel):
    """Sequence-level metrics plus their per-frame breakdowns."""

    iou: float = Field(..., ge=0, le=1)
    iou_w5: float = Field(..., ge=0, le=1)
    fscore: Optional[float] = Field(None, ge=0, le=1, description="None without depth")
    pene_pct: float = Field(..., ge=0, le=1)
    jitter: float = Field(..., ge=0, description="meters")
    foot_skating: float = Field(..., ge=0, description="meters")
    mean_joint_error: Optional[float] = Field(None, description="Against ground truth when known")
    per_frame: Dict[str, List[Optional[float]]] = Field(default_factory=dict)

    def row(self) -> Tuple[str, ...]:
        fscore = "-" if self.fscore is None else f"{self.fscore:.4f}"
        return (
            f"{self.iou:.4f}",
            f"{self.iou_w5:.4f}",
            fscore,
            f"{100.0 * self.pene_pct:.2f}",
            f"{self.jitter:.4f}",
            f"{self.foot_skating:.4f}",
        )


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks; two empty masks count as 1."""
    pred = np.asarray(pred) > 0
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def iou_w5(per_frame: Sequence[float]) -> float:
    """Mean IoU of the worst ceil(5% of T) frames, at least one."""
    values = np.sort(np.asarray(per_frame, dtype=np.float64))
    if values.size == 0:
        raise ValueError("iou_w5 needs at least one frame")
    count = max(1, math.ceil(WORST_FRACTION * values.size - 1e-9))
    return float(values[:count].mean())


def precision_recall(pred, gt, tau: float = FSCORE_THRESHOLD) -> Tuple[float, float]:
    """Fractions of predicted points near the ground truth and of ground truth near the prediction."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if len(pred) == 0 or len(gt) == 0:
        raise ValueError("fscore needs two nonempty point sets")
    to_gt, _ = KDTree(gt).query(pred, k=1)
    to_pred, _ = KDTree(pred).query(gt, k=1)
    return float((to_gt <= tau).mean()), float((to_pred <= tau).mean())


def fscore(pred, gt, tau: float = FSCORE_THRESHOLD) -> float:
    """Harmonic mean of precision and recall at distance ``tau`` (meters)."""
    precision, recall = precision_recall(pred, gt, tau)
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def pene_pct(vertices, floor_z: float = 0.0) -> float:
    """Fraction of vertices strictly below the floor, averaged per frame then over frames."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim == 2:
        vertices = vertices[None]
    return float((vertices[..., 2] < floor_z).mean(axis=-1).mean())


def jitter(joints) -> float:
    """Mean norm of the second temporal difference of joint positions (T, N, 3)."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape[0] < 3:
        return 0.0
    second = joints[2:] - 2.0 * joints[1:-1] + joints[:-2]
    return float(np.linalg.norm(second, axis=-1).mean())


def foot_skating(feet, floor_z: float = 0.0, h: float = CONTACT_HEIGHT) -> float:
    """Mean horizontal foot displacement over steps where the foot stays below ``h``.

    A step t-1 -> t counts as contact when the foot height above the floor is below ``h``
    at both frames. Returns 0 when there is no contact.
    """
    feet = np.asarray(feet, dtype=np.float64)
    if feet.shape[0] < 2:
        return 0.0
    height = feet[..., 2] - floor_z
    contact = (height[1:] < h) & (height[:-1] < h)
    if not contact.any():
        return 0.0
    slide = np.linalg.norm(feet[1:, :, :2] - feet[:-1, :, :2], axis=-1)
    return float(slide[contact].mean())


def mean_joint_error(pred_joints, gt_joints) -> float:
    """Mean Euclidean distance between corresponding joints."""
    pred = np.asarray(pred_joints, dtype=np.float64)
    gt = np.asarray(gt_joints, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"joint arrays differ in shape: {pred.shape} vs {gt.shape}")
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def _merged_cloud(frame_obs: Sequence[FrameObservation], rig: CameraRig) -> Optional[np.ndarray]:
    clouds = [
        backproject(rig[obs.view_id], obs.depth, obs.mask).numpy()
        for obs in frame_obs
        if obs.depth is not None
    ]
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return None
    return np.concatenate(clouds)


def evaluate_sequence(
    mesh: PosedMesh,
    observations: Mapping[str, Sequence[FrameObservation]],
    rig: CameraRig,
    assets: TemplateAssets,
    floor_z: float = 0.0,
    fscore_samples: int = FSCORE_SAMPLES,
    seed: int = 0,
    gt_joints=None,
) -> MetricsReport:
    """Metrics of posed meshes (T, V, 3) against a sequence's observations.

    IoU is averaged over views per frame. F-score compares mesh samples with the merged
    multi-view depth cloud of each frame and is None when no frame has depth.
    """
    T = int(mesh.vertices.shape[0])
    by_frame: Dict[int, List[FrameObservation]] = {}
    for view_obs in observations.values():
        for obs in view_obs:
            by_frame.setdefault(obs.frame, []).append(obs)
    missing = [t for t in range(T) if t not in by_frame]
    if missing:
        raise ValueError(f"no observations for frames {missing}")

    generator = torch.Generator().manual_seed(int(seed))
    frame_iou: List[Optional[float]] = []
    frame_fscore: List[Optional[float]] = []
    frame_pene: List[Optional[float]] = []
    for t in range(T):
        frame_mesh = mesh.frame(t).detach()
        ious = [
            iou(rasterize_silhouette(frame_mesh, rig[obs.view_id]), obs.mask) for obs in by_frame[t]
        ]
        frame_iou.append(float(np.mean(ious)))
        cloud = _merged_cloud(by_frame[t], rig)
        if cloud is None:
            frame_fscore.append(None)
        else:
            samples = sample_surface(frame_mesh, fscore_samples, generator=generator).points
            frame_fscore.append(fscore(samples.numpy(), cloud))
        frame_pene.append(pene_pct(frame_mesh.vertices.numpy(), floor_z))

    joints = mesh.joints.detach().numpy()
    scored = [f for f in frame_fscore if f is not None]
    foot_index = list(assets.foot_joints)
    report = MetricsReport(
        iou=float(np.mean(frame_iou)),
        iou_w5=iou_w5(frame_iou),
        fscore=float(np.mean(scored)) if scored else None,
        pene_pct=pene_pct(mesh.vertices.detach().numpy(), floor_z),
        jitter=jitter(joints),
        foot_skating=foot_skating(joints[:, foot_index], floor_z) if foot_index else 0.0,
        mean_joint_error=None if gt_joints is None else mean_joint_error(joints, gt_joints),
        per_frame={"iou": frame_iou, "fscore": frame_fscore, "pene_pct": frame_pene},
    )
    logger.info(
        "Metrics: " + ", ".join(f"{name}={value}" for name, value in zip(TABLE_COLUMNS, report.row()))
    )
    return report


def evaluate_solution(
    solution,
    observations: Mapping[str, Sequence[FrameObservation]],
    rig: CameraRig,
    assets: TemplateAssets,
    floor_z: float = 0.0,
    fscore_samples: int = FSCORE_SAMPLES,
    seed: int = 0,
    gt_joints=None,
) -> MetricsReport:
    """Metrics of a fitted MotionSolution on its sequence."""
    with torch.no_grad():
        mesh = pose_sequence(assets, solution.state(), validate=False)
    return evaluate_sequence(
        mesh, observations, rig, assets, floor_z, fscore_samples, seed, gt_joints
    )
