"""Gradient evaluation, Adam with per-group rates, and the step-decay schedule."""

import copy
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import torch

from ..exceptions import ConfigError, NonFiniteLossError

logger = logging.getLogger(__name__)

GROUP_NAMES = ("scale", "shape", "field_TR", "field_theta")

DECAY_POINTS = (0.75, 0.9375)
DECAY_FACTOR = 0.3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class ParamGroup:
    """A named set of leaf tensors optimized with one base learning rate."""

    name: str
    params: List[torch.Tensor]
    base_rate: float = 0.0
    trainable: bool = True

    def __post_init__(self) -> None:
        if self.name not in GROUP_NAMES:
            raise ConfigError(f"unknown parameter group {self.name}")
        if self.base_rate < 0:
            raise ConfigError(f"rate for {self.name} must be >= 0, got {self.base_rate}")

    def flat(self) -> torch.Tensor:
        """Current values as one detached vector."""
        return torch.nn.utils.parameters_to_vector([p.detach() for p in self.params])


LossFn = Callable[[], Union[torch.Tensor, "Mapping[str, torch.Tensor]"]]


def _total_and_terms(output) -> tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    if isinstance(output, torch.Tensor):
        return output, {"loss": output}
    terms = dict(output.terms) if hasattr(output, "terms") else dict(output)
    total = output.total if hasattr(output, "total") else sum(terms.values())
    return total, terms


def check_finite(output) -> torch.Tensor:
    """Return the scalar loss, raising NonFiniteLossError naming the offending term."""
    total, terms = _total_and_terms(output)
    if not torch.isfinite(total):
        for name, value in terms.items():
            if not torch.isfinite(value).all():
                raise NonFiniteLossError(f"loss term '{name}' is not finite", term=name)
        raise NonFiniteLossError("total loss is not finite", term="total")
    return total


def gradient(loss_fn: LossFn, groups: Sequence[ParamGroup]) -> Dict[str, List[torch.Tensor]]:
    """Reverse-mode gradients of a scalar loss for every trainable group.

    Args:
        loss_fn: Callable returning a scalar tensor or a breakdown with ``total``/``terms``
        groups: Parameter groups; frozen groups get no entry

    Returns:
        Mapping of group name to one gradient tensor per parameter. Parameters the loss
        does not depend on receive zeros.
    """
    trainable = [g for g in groups if g.trainable]
    params = [p for g in trainable for p in g.params]
    total = check_finite(loss_fn())
    grads = torch.autograd.grad(total, params, allow_unused=True)
    result: Dict[str, List[torch.Tensor]] = {}
    it = iter(grads)
    for g in trainable:
        result[g.name] = []
        for p in g.params:
            grad = next(it)
            grad = torch.zeros_like(p) if grad is None else grad
            if not torch.isfinite(grad).all():
                raise NonFiniteLossError(f"gradient of group '{g.name}' is not finite", term=g.name)
            result[g.name].append(grad)
    return result


def finite_difference_gradient(
    loss_fn: Callable[[torch.Tensor], torch.Tensor],
    x: torch.Tensor,
    rel_step: float = 1e-4,
    min_step: float = 1e-6,
) -> torch.Tensor:
    """Central finite differences with a step relative to each coordinate's magnitude."""
    x = x.detach().clone()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            h = max(rel_step * abs(float(flat[i])), min_step)
            original = float(flat[i])
            flat[i] = original + h
            plus = float(loss_fn(x))
            flat[i] = original - h
            minus = float(loss_fn(x))
            flat[i] = original
            out[i] = (plus - minus) / (2.0 * h)
    return grad


def lr_multiplier(step: int, total_steps: int) -> float:
    """Step decay: x0.3 at 75% and again at 93.75% of the planned steps."""
    if total_steps <= 0:
        raise ConfigError(f"total_steps must be positive, got {total_steps}")
    factor = 1.0
    for point in DECAY_POINTS:
        if step >= point * total_steps:
            factor *= DECAY_FACTOR
    return factor


@dataclass
class OptState:
    """Adam moments live inside the torch optimizer; this tracks the schedule."""

    step: int = 0
    total_steps: int = 1
    rate_scale: float = 1.0


class StageOptimizer:
    """Adam over the trainable groups with the step-decay schedule applied per group."""

    def __init__(self, groups: Sequence[ParamGroup], total_steps: int):
        if total_steps <= 0:
            raise ConfigError(f"total_steps must be positive, got {total_steps}")
        self.groups = list(groups)
        self.trainable = [g for g in self.groups if g.trainable and g.params]
        self.state = OptState(total_steps=total_steps)
        for g in self.groups:
            for p in g.params:
                p.requires_grad_(g.trainable)
        param_groups = [
            {"params": g.params, "lr": g.base_rate, "name": g.name} for g in self.trainable
        ]
        # Adam needs at least one group; an all-frozen stage still counts steps.
        self._adam = (
            torch.optim.Adam(param_groups, betas=ADAM_BETAS, eps=ADAM_EPS) if param_groups else None
        )
        self._scheduler = (
            torch.optim.lr_scheduler.LambdaLR(
                self._adam, lambda step: lr_multiplier(step, self.state.total_steps)
            )
            if self._adam is not None
            else None
        )

    def current_rates(self) -> Dict[str, float]:
        factor = lr_multiplier(min(self.state.step, self.state.total_steps - 1), self.state.total_steps)
        return {g.name: g.base_rate * factor * self.state.rate_scale for g in self.trainable}

    def scale_rates(self, factor: float) -> None:
        """Multiply every base rate, e.g. to halve them after a divergence."""
        self.state.rate_scale *= factor
        if self._scheduler is not None:
            self._scheduler.base_lrs = [lr * factor for lr in self._scheduler.base_lrs]
            for group in self._adam.param_groups:
                group["lr"] *= factor
        logger.warning(f"Scaled learning rates by {factor}")

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g.params:
                p.grad = None

    def step(self) -> None:
        """Apply one Adam update from the ``.grad`` fields and advance the schedule."""
        for g in self.trainable:
            for p in g.params:
                if p.grad is not None and not torch.isfinite(p.grad).all():
                    raise NonFiniteLossError(f"gradient of group '{g.name}' is not finite", term=g.name)
        if self._adam is not None:
            self._adam.step()
            self._scheduler.step()
        self.state.step += 1

    def skip_step(self) -> None:
        """Advance the schedule without touching any parameter."""
        if self._scheduler is not None:
            self._scheduler.step()
        self.state.step += 1

    def snapshot(self) -> Dict[str, object]:
        return {
            "params": [[p.detach().clone() for p in g.params] for g in self.groups],
            "adam": copy.deepcopy(self._adam.state_dict()) if self._adam is not None else None,
        }

    def restore(self, snapshot: Dict[str, object]) -> None:
        with torch.no_grad():
            for g, values in zip(self.groups, snapshot["params"]):  # type: ignore[arg-type]
                for p, v in zip(g.params, values):
                    p.copy_(v)
        if self._adam is not None and snapshot.get("adam") is not None:
            lrs = [group["lr"] for group in self._adam.param_groups]
            self._adam.load_state_dict(snapshot["adam"])  # type: ignore[arg-type]
            for group, lr in zip(self._adam.param_groups, lrs):
                group["lr"] = lr


def adam_step(
    optimizer: StageOptimizer, gradients: Optional[Mapping[str, Sequence[torch.Tensor]]] = None
) -> List[ParamGroup]:
    """Write ``gradients`` into the trainable groups and take one Adam step.

    Frozen groups are never touched. Returns the (updated in place) groups.
    """
    if gradients is not None:
        for g in optimizer.trainable:
            grads = gradients.get(g.name)
            if grads is None:
                continue
            if len(grads) != len(g.params):
                raise ConfigError(f"group {g.name} expects {len(g.params)} gradients")
            for p, grad in zip(g.params, grads):
                if grad.shape != p.shape:
                    raise ConfigError(f"gradient shape {tuple(grad.shape)} != {tuple(p.shape)}")
                p.grad = grad.detach().clone()
    optimizer.step()
    return optimizer.groups
