"""Core type definitions."""

from enum import StrEnum

import torch

# All geometry and optimization runs in double precision on CPU.
DTYPE = torch.float64


class Setting(StrEnum):
    """Observation settings of a sequence."""

    SV_RGB = "sv-rgb"
    SV_RGBD = "sv-rgbd"
    MV_RGB = "mv-rgb"
    MV_RGBD = "mv-rgbd"

    @property
    def multi_view(self) -> bool:
        return self in (Setting.MV_RGB, Setting.MV_RGBD)

    @property
    def uses_depth(self) -> bool:
        return self in (Setting.SV_RGBD, Setting.MV_RGBD)


class Gait(StrEnum):
    """Scripted gaits of the synthetic harness."""

    WALK = "walk"
    TROT = "trot"
    JUMP = "jump"
    IDLE = "idle"


def as_tensor(value, dtype: torch.dtype = DTYPE) -> torch.Tensor:
    """Convert arrays, lists or tensors to a tensor of the working dtype."""
    if isinstance(value, torch.Tensor):
        return value.to(dtype)
    return torch.as_tensor(value, dtype=dtype)
