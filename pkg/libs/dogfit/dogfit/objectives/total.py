"""Weighted per-stage combination of the loss terms."""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import torch

from ..geometry.camera import CameraRig
from ..model.assets import TemplateAssets
from ..model.body import BodyState, pose_batch
from ..model.sampling import SurfaceSamples, sample_surface
from ..types import DTYPE
from .losses import (
    SkipLog,
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

TERM_NAMES = ("mask", "keypoint", "depth", "cse", "cross", "prior", "temporal")

STAGE_TERMS: Dict[int, tuple] = {
    1: ("mask", "keypoint", "depth"),
    2: ("mask", "keypoint", "depth", "cse", "cross", "prior"),
    3: ("mask", "keypoint", "depth", "cse", "cross", "prior", "temporal"),
}


@dataclass
class LossBreakdown:
    """Total loss plus raw and weighted values of every active term."""

    total: torch.Tensor
    terms: Dict[str, torch.Tensor] = field(default_factory=dict)
    weighted: Dict[str, torch.Tensor] = field(default_factory=dict)

    def as_floats(self) -> Dict[str, float]:
        values = {name: value.detach().item() for name, value in self.terms.items()}
        values["total"] = self.total.detach().item()
        return values


def active_terms(stage: int, use_depth: bool) -> tuple:
    if stage not in STAGE_TERMS:
        raise ValueError(f"unknown stage {stage}")
    return tuple(t for t in STAGE_TERMS[stage] if use_depth or t != "depth")


def combine(
    stage: int, terms: Mapping[str, torch.Tensor], weights: LossWeights, use_depth: bool = True
) -> LossBreakdown:
    """Weighted sum of a stage's active terms, added in TERM_NAMES order."""
    active = active_terms(stage, use_depth)
    weighted: Dict[str, torch.Tensor] = {}
    total = torch.zeros((), dtype=DTYPE)
    for name in TERM_NAMES:
        if name not in active:
            continue
        value = torch.as_tensor(terms.get(name, 0.0), dtype=DTYPE)
        weighted[name] = getattr(weights, name) * value
        total = total + weighted[name]
    raw = {name: torch.as_tensor(terms.get(name, 0.0), dtype=DTYPE) for name in active}
    return LossBreakdown(total=total, terms=raw, weighted=weighted)


def _mean(values: Sequence[torch.Tensor]) -> torch.Tensor:
    if not values:
        return torch.zeros((), dtype=DTYPE)
    return torch.stack(list(values)).mean()


def total_loss(
    stage: int,
    batch: Mapping[int, Sequence[FrameObservation]],
    state: BodyState,
    weights: LossWeights,
    *,
    assets: TemplateAssets,
    rig: CameraRig,
    frames: Sequence[int],
    config: Optional[SampleConfig] = None,
    use_depth: bool = True,
    skips: Optional[SkipLog] = None,
    generator: Optional[torch.Generator] = None,
) -> LossBreakdown:
    """Evaluate a stage's objective on a mini-batch of frames.

    Args:
        stage: 1, 2 or 3
        batch: Frame index -> observations of that frame, one per view
        state: Body parameters whose per-frame rows follow ``frames``
        weights: Loss weights
        assets: Template assets
        rig: Cameras of the observing views
        frames: Frame indices of the batch, consecutive for the temporal term
        config: Sampling configuration
        use_depth: Whether the depth term participates
        skips: Collects skipped (term, view, frame) records
        generator: Random source for surface sampling

    Per-frame data terms are averaged over views, then over the batch frames.
    """
    config = config or SampleConfig()
    active = active_terms(stage, use_depth)
    mesh = pose_batch(
        assets, state.beta, state.scale, state.theta, state.translation, state.orientation
    )
    if generator is None:
        generator = torch.Generator().manual_seed(config.seed)
    drawn = sample_surface(mesh, config.samples, leg_boost=config.leg_boost, generator=generator)

    per_frame: Dict[str, list] = {name: [] for name in ("mask", "keypoint", "depth", "cse")}
    for b, t in enumerate(frames):
        frame_mesh = mesh.frame(b)
        frame_samples = SurfaceSamples(drawn.points[b], drawn.face_ids[b], drawn.barycentric[b])
        views: Dict[str, list] = {name: [] for name in per_frame}
        for obs in batch[t]:
            cam = rig[obs.view_id]
            views["mask"].append(mask_loss(obs, frame_mesh, cam, config, frame_samples, skips))
            views["keypoint"].append(
                keypoint_loss(obs, frame_mesh, cam, config.keypoint_threshold, skips)
            )
            if "depth" in active:
                views["depth"].append(depth_loss(obs, frame_mesh, cam, config, frame_samples, skips))
            if "cse" in active:
                views["cse"].append(cse_loss(obs, frame_mesh, cam, skips))
        for name, values in views.items():
            if values:
                per_frame[name].append(_mean(values))

    terms: Dict[str, torch.Tensor] = {name: _mean(values) for name, values in per_frame.items()}
    if "cross" in active:
        terms["cross"] = leg_cross_loss(mesh.joints, assets.foot_pairs, weights.delta) / len(frames)
    if "prior" in active:
        terms["prior"] = shape_prior_loss(
            state.beta, assets, weights.w_body, weights.w_limb
        ) + pose_prior_loss(state.theta, assets).mean()
    if "temporal" in active:
        view_ids = sorted({obs.view_id for t in frames for obs in batch[t]}, key=rig.ids.index)
        terms["temporal"] = temporal_loss(mesh.joints, [rig[v] for v in view_ids])
    return combine(stage, terms, weights, use_depth)
