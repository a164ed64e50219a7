"""Three-stage coarse-to-fine fitting of the body model to an observation sequence."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from ..exceptions import ConfigError, DivergenceError, NonFiniteLossError, ObservationError
from ..field import MotionField, field_inputs, init_field
from ..geometry.camera import Camera, CameraRig, pixel_rays
from ..model.assets import TemplateAssets
from ..model.body import BodyState, pose_sequence
from ..model.rotations import matrix_to_rot6d, yaw_matrix
from ..objectives.losses import SkipLog
from ..objectives.observation import FrameObservation
from ..objectives.total import LossBreakdown, total_loss
from ..optim.engine import ParamGroup, StageOptimizer, check_finite
from ..types import DTYPE, Setting
from .config import FitSettings, StageConfig

logger = logging.getLogger(__name__)

DIVERGENCE_PATIENCE = 3
MIN_SCALE = 1e-3

Observations = Mapping[str, Sequence[FrameObservation]]


class StageLog(BaseModel):
    """Provenance of one stage: schedule, loss curve and skipped terms."""

    stage: int
    steps: int = 0
    trainable: List[str] = Field(default_factory=list)
    rates: Dict[str, float] = Field(default_factory=dict)
    losses: List[Dict[str, float]] = Field(default_factory=list)
    skips: List[Dict[str, Optional[str]]] = Field(default_factory=list)
    rate_scale: float = 1.0
    non_finite_steps: int = 0
    seconds: float = 0.0

    def curve(self, term: str = "total") -> List[float]:
        return [entry.get(term, 0.0) for entry in self.losses]


@dataclass
class MotionSolution:
    """Recovered per-sequence shape and scale plus the motion field.

    ``theta``, ``translation``, ``orientation`` and ``joints`` are materialized from the
    field and always reproduce it.
    """

    beta: torch.Tensor
    scale: torch.Tensor
    field: MotionField
    frame_count: int
    setting: Setting = Setting.MV_RGBD
    seed: int = 0
    stage_logs: List[StageLog] = field(default_factory=list)
    theta: Optional[torch.Tensor] = None
    translation: Optional[torch.Tensor] = None
    orientation: Optional[torch.Tensor] = None
    joints: Optional[torch.Tensor] = None

    def state(self) -> BodyState:
        if self.theta is None:
            raise ValueError("solution has not been materialized")
        return BodyState(
            beta=self.beta,
            scale=self.scale,
            theta=self.theta,
            translation=self.translation,
            orientation=self.orientation,
        )


def field_state(beta: torch.Tensor, scale: torch.Tensor, motion: MotionField, frames, T: int) -> BodyState:
    """Body parameters of the given frames as produced by the field (keeps the graph)."""
    theta, gamma, phi = motion.evaluate(torch.as_tensor(frames, dtype=DTYPE), T)
    return BodyState(beta=beta, scale=scale, theta=theta, translation=gamma, orientation=phi)


def materialize(solution: MotionSolution, assets: TemplateAssets) -> MotionSolution:
    """Fill in per-frame parameters and posed joint trajectories from the field."""
    T = solution.frame_count
    with torch.no_grad():
        theta, gamma, phi = solution.field(field_inputs(T))
        state = BodyState(
            beta=solution.beta, scale=solution.scale, theta=theta, translation=gamma, orientation=phi
        )
        mesh = pose_sequence(assets, state)
    solution.theta = state.theta.detach()
    solution.translation = state.translation.detach()
    solution.orientation = state.orientation.detach()
    solution.joints = mesh.joints.detach()
    return solution


def sample_batch(
    T: int, batch_size: int, seed: int = 0, mode: str = "uniform", rng: Optional[np.random.Generator] = None
) -> List[int]:
    """Frame indices of one mini-batch.

    ``uniform`` draws distinct frames, ``segment`` a run of consecutive frames with a
    random start. Both clamp to the sequence length and return sorted indices.
    """
    if T < 1 or batch_size < 1:
        raise ConfigError(f"need T >= 1 and batch_size >= 1, got {T} and {batch_size}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    size = min(batch_size, T)
    if mode == "uniform":
        return sorted(int(i) for i in rng.choice(T, size=size, replace=False))
    if mode == "segment":
        start = int(rng.integers(0, T - size + 1))
        return list(range(start, start + size))
    raise ConfigError(f"unknown batch mode {mode}")


def _by_frame(observations: Observations) -> Dict[int, List[FrameObservation]]:
    frames: Dict[int, List[FrameObservation]] = {}
    for view_obs in observations.values():
        for obs in view_obs:
            frames.setdefault(obs.frame, []).append(obs)
    return frames


def prepare_observations(
    observations: Observations, rig: CameraRig, assets: TemplateAssets, settings: FitSettings
) -> Tuple[Dict[str, List[FrameObservation]], CameraRig, int]:
    """Select views, check completeness and gate depth by the declared setting."""
    if not observations:
        raise ObservationError("no views given")
    view_ids = settings.views or [v for v in rig.ids if v in observations]
    missing_views = [v for v in view_ids if v not in observations]
    if missing_views:
        raise ObservationError(f"no observations for views {missing_views}", view_id=missing_views[0])
    if not settings.setting.multi_view and len(view_ids) > 1:
        logger.info(f"Setting {settings.setting} uses a single view; keeping view {view_ids[0]}")
        view_ids = view_ids[:1]

    T = max(len(observations[v]) for v in view_ids)
    if T < 2:
        raise ObservationError(f"need at least 2 frames, got {T}")
    selected: Dict[str, List[FrameObservation]] = {}
    depth_dropped = False
    for v in view_ids:
        frames = sorted(observations[v], key=lambda o: o.frame)
        indices = [o.frame for o in frames]
        if indices != list(range(T)):
            absent = sorted(set(range(T)) - set(indices))
            raise ObservationError(
                f"view {v} is missing frames {absent}", view_id=v, frame=absent[0] if absent else None
            )
        cam = rig[v]
        for obs in frames:
            obs.validate(cam, assets.vertex_count)
            if settings.setting.uses_depth and not obs.has_depth:
                raise ObservationError(
                    f"setting {settings.setting} needs depth but view {v} frame {obs.frame} has none",
                    view_id=v,
                    frame=obs.frame,
                )
        if not settings.setting.uses_depth and any(o.has_depth for o in frames):
            frames = [o.drop_depth() for o in frames]
            depth_dropped = True
        selected[v] = frames
    if depth_dropped:
        logger.info(f"Depth present but ignored under setting {settings.setting}")
    return selected, rig.subset(view_ids), T


def _mask_centroid(obs: FrameObservation) -> Optional[np.ndarray]:
    rows, cols = np.nonzero(obs.mask)
    if rows.size == 0:
        return None
    return np.array([cols.mean(), rows.mean()])


def _ray(cam: Camera, pixel: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    direction = cam.rotation.T @ pixel_rays(cam, pixel)
    direction = direction / direction.norm()
    return cam.center.numpy(), direction.numpy()


def _closest_point_to_rays(rays: List[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    A = np.zeros((3, 3))
    b = np.zeros(3)
    for origin, direction in rays:
        P = np.eye(3) - np.outer(direction, direction)
        A += P
        b += P @ origin
    return np.linalg.lstsq(A, b, rcond=None)[0]


def estimate_body_center(
    observations: Mapping[str, Sequence[FrameObservation]],
    rig: CameraRig,
    assets: TemplateAssets,
    scale: float,
    use_depth: bool,
    frames: Sequence[int],
) -> np.ndarray:
    """Average world position of the body center over ``frames``.

    Depth centroids are used when available, least-squares intersection of the mask
    centroid rays with several views, and for a single RGB view a point on the
    centroid ray at the distance where the template spans the mask's extent.
    """
    centers = []
    extent = float(np.linalg.norm(np.ptp(assets.vertices[:, [0, 2]], axis=0))) * scale
    for t in frames:
        frame_obs = [obs for view in observations.values() for obs in view if obs.frame == t]
        if use_depth:
            clouds = [obs.depth_points(rig[obs.view_id]) for obs in frame_obs]
            clouds = [c for c in clouds if c.shape[0]]
            if clouds:
                centers.append(torch.cat(clouds).mean(dim=0).numpy())
                continue
        rays = []
        for obs in frame_obs:
            centroid = _mask_centroid(obs)
            if centroid is not None:
                rays.append((obs, _ray(rig[obs.view_id], centroid)))
        if len(rays) >= 2:
            centers.append(_closest_point_to_rays([r for _, r in rays]))
        elif len(rays) == 1:
            obs, (origin, direction) = rays[0]
            cam = rig[obs.view_id]
            rows, cols = np.nonzero(obs.mask)
            pixel_extent = math.hypot(np.ptp(cols) + 1, np.ptp(rows) + 1)
            distance = cam.fx * extent / max(pixel_extent, 1.0)
            centers.append(origin + direction * distance)
    if not centers:
        raise ObservationError("no foreground in any frame used for initialization")
    return np.mean(centers, axis=0)


@dataclass
class _Params:
    beta: torch.Tensor
    scale: torch.Tensor
    field: MotionField

    def groups(self, cfg: StageConfig) -> List[ParamGroup]:
        members = {
            "scale": [self.scale],
            "shape": [self.beta],
            "field_TR": self.field.tr_parameters(),
            "field_theta": self.field.theta_parameters(),
        }
        return [
            ParamGroup(
                name=name,
                params=params,
                base_rate=cfg.rates.get(name, 0.0),
                trainable=name in cfg.trainable,
            )
            for name, params in members.items()
        ]


class SequenceFitter:
    """Holds one sequence's observations and runs the stages on shared parameters."""

    def __init__(
        self,
        observations: Observations,
        rig: CameraRig,
        assets: TemplateAssets,
        settings: Optional[FitSettings] = None,
    ):
        self.settings = (settings or FitSettings()).check()
        self.assets = assets
        self.observations, self.rig, self.frame_count = prepare_observations(
            observations, rig, assets, self.settings
        )
        self.by_frame = _by_frame(self.observations)
        self.use_depth = self.settings.setting.uses_depth
        self.params = _Params(
            beta=torch.zeros(assets.shape_dim, dtype=DTYPE),
            scale=torch.tensor(float(self.settings.initial_scale), dtype=DTYPE),
            field=init_field(self.settings.seed, assets.joint_count),
        )
        self.logs: List[StageLog] = []

    def state(self, frames: Sequence[int]) -> BodyState:
        p = self.params
        return field_state(p.beta, p.scale, p.field, frames, self.frame_count)

    def loss(
        self,
        stage: int,
        frames: Sequence[int],
        skips: Optional[SkipLog] = None,
        generator: Optional[torch.Generator] = None,
    ) -> LossBreakdown:
        return total_loss(
            stage,
            self.by_frame,
            self.state(frames),
            self.settings.weights,
            assets=self.assets,
            rig=self.rig,
            frames=frames,
            config=self.settings.sampling,
            use_depth=self.use_depth,
            skips=skips,
            generator=generator,
        )

    def coarse_init(self) -> Tuple[np.ndarray, float]:
        """Place the body from mask/depth centroids and choose the best of several headings."""
        s = self.settings
        T = self.frame_count
        init_frames = sample_batch(T, s.batch_size, seed=s.seed)
        center = estimate_body_center(
            self.observations, self.rig, self.assets, float(self.params.scale), self.use_depth, init_frames
        )
        template_center = torch.as_tensor(self.assets.vertices.mean(axis=0), dtype=DTYPE)
        best: Optional[Tuple[float, float, torch.Tensor]] = None
        for k in range(s.init_yaw_candidates):
            yaw = 2.0 * math.pi * k / s.init_yaw_candidates
            rotation = yaw_matrix(yaw)
            gamma = torch.as_tensor(center, dtype=DTYPE) - self.params.scale.detach() * (
                rotation @ template_center
            )
            with torch.no_grad():
                self.params.field.bias_tr.copy_(torch.cat([gamma, matrix_to_rot6d(rotation)]))
                generator = torch.Generator().manual_seed(s.seed)
                value = float(self.loss(1, init_frames, generator=generator).total)
            logger.debug(f"Heading {math.degrees(yaw):.0f} deg: stage-1 loss {value:.4f}")
            if best is None or value < best[0]:
                best = (value, yaw, gamma)
        assert best is not None
        _, yaw, gamma = best
        with torch.no_grad():
            self.params.field.bias_tr.copy_(torch.cat([gamma, matrix_to_rot6d(yaw_matrix(yaw))]))
        logger.info(
            f"Coarse placement at {np.round(gamma.numpy(), 3).tolist()} heading {math.degrees(yaw):.0f} deg"
        )
        return gamma.numpy(), yaw

    def run_stage(self, cfg: StageConfig) -> StageLog:
        """Run exactly ``multiplier * T`` optimizer steps of one stage."""
        s = self.settings
        T = self.frame_count
        total_steps = cfg.total_steps(T)
        groups = self.params.groups(cfg)
        optimizer = StageOptimizer(groups, total_steps)
        rng = np.random.default_rng([s.seed, cfg.stage])
        generator = torch.Generator().manual_seed(s.seed * 10 + cfg.stage)
        skips = SkipLog()
        log = StageLog(stage=cfg.stage, trainable=list(cfg.trainable), rates=dict(cfg.rates))
        logger.info(
            f"Stage {cfg.stage}: {total_steps} steps, training {', '.join(cfg.trainable)}"
        )
        started = time.perf_counter()
        checkpoint = optimizer.snapshot()
        failures = 0
        halved = False
        for step in range(total_steps):
            frames = sample_batch(T, cfg.batch_size, mode=cfg.mode, rng=rng)
            optimizer.zero_grad()
            try:
                breakdown = self.loss(cfg.stage, frames, skips, generator)
                total = check_finite(breakdown)
                if total.requires_grad:
                    total.backward()
                checkpoint = optimizer.snapshot()
                optimizer.step()
            except NonFiniteLossError as e:
                failures += 1
                log.non_finite_steps += 1
                logger.warning(f"Stage {cfg.stage} step {step}: {e}")
                optimizer.restore(checkpoint)
                optimizer.skip_step()
                if failures >= DIVERGENCE_PATIENCE:
                    if halved:
                        log.steps = step + 1
                        self._finish_log(log, skips, started)
                        raise DivergenceError(
                            f"stage {cfg.stage} diverged after {step + 1} steps",
                            checkpoint=self.solution(),
                            stage=cfg.stage,
                        ) from e
                    optimizer.scale_rates(0.5)
                    log.rate_scale *= 0.5
                    halved = True
                    failures = 0
                continue
            failures = 0
            if "scale" in cfg.trainable:
                with torch.no_grad():
                    self.params.scale.clamp_(min=MIN_SCALE)
            values = breakdown.as_floats()
            log.losses.append(values)
            if step % s.log_every == 0 or step == total_steps - 1:
                terms = ", ".join(f"{k}={v:.4g}" for k, v in values.items() if k != "total")
                logger.info(
                    f"Stage {cfg.stage} step {step}/{total_steps}: loss {values['total']:.4f} ({terms})"
                )
        log.steps = total_steps
        self._finish_log(log, skips, started)
        for p in (self.params.beta, self.params.scale, *self.params.field.parameters()):
            p.requires_grad_(False)
        return log

    def _finish_log(self, log: StageLog, skips: SkipLog, started: float) -> None:
        log.seconds = time.perf_counter() - started
        log.skips = [
            {"term": r.term, "view_id": r.view_id, "frame": None if r.frame is None else str(r.frame), "reason": r.reason}
            for r in skips.records
        ]
        if skips.records:
            logger.info(f"Stage {log.stage}: {len(skips.records)} skipped term evaluations")
        self.logs.append(log)
        logger.info(f"Stage {log.stage} finished in {log.seconds:.1f}s")

    def solution(self) -> MotionSolution:
        solution = MotionSolution(
            beta=self.params.beta.detach().clone(),
            scale=self.params.scale.detach().clone(),
            field=self.params.field,
            frame_count=self.frame_count,
            setting=self.settings.setting,
            seed=self.settings.seed,
            stage_logs=list(self.logs),
        )
        return materialize(solution, self.assets)

    def fit(self) -> MotionSolution:
        skip = set(self.settings.skip_stages)
        if 1 not in skip:
            self.coarse_init()
        for stage in (1, 2, 3):
            if stage in skip:
                logger.info(f"Skipping stage {stage}")
                continue
            self.run_stage(self.settings.stage_config(stage))
        return self.solution()


def fit_sequence(
    observations: Observations,
    rig: CameraRig,
    assets: TemplateAssets,
    settings: Optional[FitSettings] = None,
) -> MotionSolution:
    """Recover shape, scale and the motion field of a sequence with stages 1 to 3.

    Args:
        observations: View id -> per-frame observations
        rig: Cameras, at least those of the observed views
        assets: Template assets
        settings: Fit settings; defaults reproduce the reference schedule

    Raises:
        ConfigError: For invalid settings
        ObservationError: For missing or inconsistent observations
        DivergenceError: When a stage keeps producing non-finite losses
    """
    fitter = SequenceFitter(observations, rig, assets, settings)
    logger.info(
        f"Fitting {fitter.frame_count} frames from {len(fitter.rig)} view(s) under {fitter.settings.setting}"
    )
    return fitter.fit()


def run_stage(fitter: SequenceFitter, cfg: StageConfig) -> StageLog:
    return fitter.run_stage(cfg)
