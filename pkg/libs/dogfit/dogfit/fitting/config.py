"""Fit settings and per-stage configuration."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..exceptions import ConfigError
from ..objectives.observation import LossWeights, SampleConfig
from ..objectives.total import STAGE_TERMS
from ..optim.engine import GROUP_NAMES
from ..types import Setting

logger = logging.getLogger(__name__)

STAGES = (1, 2, 3)

DEFAULT_RATES: Dict[int, Dict[str, float]] = {
    1: {"scale": 5e-3, "field_TR": 5e-2},
    2: {"scale": 5e-5, "shape": 5e-2, "field_TR": 5e-4, "field_theta": 5e-4},
    3: {"field_TR": 1e-5, "field_theta": 1e-5},
}

# Shape rate used in stage 1 when stage1_trains_shape is on.
STAGE1_SHAPE_RATE = 5e-2


class StageConfig(BaseModel):
    """Everything one optimization stage needs."""

    stage: int
    terms: Tuple[str, ...]
    trainable: Tuple[str, ...]
    rates: Dict[str, float]
    multiplier: int
    batch_size: int
    mode: Literal["uniform", "segment"]

    def total_steps(self, frame_count: int) -> int:
        return self.multiplier * frame_count


class FitSettings(BaseModel):
    """Structured configuration of a fit; defaults give the full three-stage schedule."""

    model_config = ConfigDict(extra="forbid")

    setting: Setting = Setting.MV_RGBD
    seed: int = 0
    single_view_multipliers: Tuple[int, int, int] = (5, 20, 5)
    multi_view_multipliers: Tuple[int, int, int] = (10, 25, 5)
    rates: Dict[int, Dict[str, float]] = Field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_RATES.items()})
    weights: LossWeights = Field(default_factory=LossWeights)
    sampling: SampleConfig = Field(default_factory=SampleConfig)
    batch_size: int = Field(8, description="Frames per mini-batch in stages 1 and 2")
    segment_length: int = Field(16, description="Segment length in stage 3, clamped to T")
    skip_stages: List[int] = Field(default_factory=list)
    initial_scale: float = 1.0
    stage1_trains_shape: bool = False
    init_yaw_candidates: int = 8
    log_every: int = 50
    floor_z: float = 0.0
    views: Optional[List[str]] = Field(None, description="Camera ids to use; all when omitted")

    def multipliers(self) -> Tuple[int, int, int]:
        return self.multi_view_multipliers if self.setting.multi_view else self.single_view_multipliers

    def check(self) -> "FitSettings":
        """Raise ConfigError for values no fit can run with."""
        for name, values in (
            ("single_view_multipliers", self.single_view_multipliers),
            ("multi_view_multipliers", self.multi_view_multipliers),
        ):
            if any(m <= 0 for m in values):
                raise ConfigError(f"{name} must all be positive, got {values}")
        for stage, rates in self.rates.items():
            if stage not in STAGES:
                raise ConfigError(f"rates given for unknown stage {stage}")
            for group, rate in rates.items():
                if group not in GROUP_NAMES:
                    raise ConfigError(f"unknown parameter group {group} in stage {stage} rates")
                if rate < 0:
                    raise ConfigError(f"rate for {group} in stage {stage} must be >= 0, got {rate}")
        if self.batch_size < 1 or self.segment_length < 1:
            raise ConfigError("batch_size and segment_length must be >= 1")
        if any(s not in STAGES for s in self.skip_stages):
            raise ConfigError(f"skip_stages may only name stages {STAGES}, got {self.skip_stages}")
        if not self.initial_scale > 0:
            raise ConfigError(f"initial_scale must be positive, got {self.initial_scale}")
        if self.init_yaw_candidates < 1:
            raise ConfigError("init_yaw_candidates must be >= 1")
        if self.log_every < 1:
            raise ConfigError("log_every must be >= 1")
        return self

    def stage_config(self, stage: int) -> StageConfig:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage}")
        rates = dict(self.rates.get(stage, {}))
        if stage == 1:
            trainable: Tuple[str, ...] = ("scale", "field_TR")
            if self.stage1_trains_shape:
                trainable = ("scale", "shape", "field_TR")
                rates.setdefault("shape", STAGE1_SHAPE_RATE)
        elif stage == 2:
            trainable = ("scale", "shape", "field_TR", "field_theta")
        else:
            trainable = ("field_TR", "field_theta")
        return StageConfig(
            stage=stage,
            terms=STAGE_TERMS[stage],
            trainable=trainable,
            rates={g: rates.get(g, 0.0) for g in trainable},
            multiplier=self.multipliers()[stage - 1],
            batch_size=self.segment_length if stage == 3 else self.batch_size,
            mode="segment" if stage == 3 else "uniform",
        )


def load_settings(path: Union[str, Path, None], **overrides) -> FitSettings:
    """Read settings JSON (or start from defaults) and apply non-None overrides."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        settings = FitSettings.model_validate(raw)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid fit settings: {details}") from e
    logger.debug(f"Fit settings: {settings.model_dump_json()}")
    return settings.check()
