"""Time-conditioned motion field producing per-frame pose, translation and orientation."""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn

from .model.rotations import IDENTITY_6D
from .types import DTYPE

FOURIER_BANDS = 4
EMBED_DIM = 1 + 2 * FOURIER_BANDS
TR_HIDDEN = 16
THETA_HIDDEN = 64
HIDDEN_INIT_SCALE = 1e-2


@dataclass
class TimeEmbedding:
    """Normalized time plus sin/cos features for k = 1..4."""

    t_hat: float
    features: torch.Tensor  # (9,)


def _normalized_time(t, T: int) -> torch.Tensor:
    t = torch.as_tensor(t, dtype=DTYPE)
    if T <= 1:
        return torch.zeros_like(t)
    return t / float(T - 1)


def embed_tensor(t, T: int) -> torch.Tensor:
    """Embedding rows (..., 9) for frame indices ``t`` of a length-``T`` sequence."""
    t_hat = _normalized_time(t, T)
    k = torch.arange(1, FOURIER_BANDS + 1, dtype=DTYPE)
    angles = 2.0 * math.pi * t_hat.unsqueeze(-1) * k
    return torch.cat([t_hat.unsqueeze(-1), torch.sin(angles), torch.cos(angles)], dim=-1)


def embed(t: int, T: int) -> TimeEmbedding:
    if T < 1 or not 0 <= t < T:
        raise ValueError(f"frame {t} outside sequence of length {T}")
    features = embed_tensor(t, T)
    return TimeEmbedding(t_hat=float(features[0]), features=features)


def _mlp(in_dim: int, hidden: int, out_dim: int, generator: torch.Generator) -> nn.Sequential:
    """Three fully-connected layers with tanh hidden activations and a zero output layer."""
    layers = [
        nn.Linear(in_dim, hidden, dtype=DTYPE),
        nn.Tanh(),
        nn.Linear(hidden, hidden, dtype=DTYPE),
        nn.Tanh(),
        nn.Linear(hidden, out_dim, dtype=DTYPE),
    ]
    with torch.no_grad():
        for layer in layers[:-1]:
            if isinstance(layer, nn.Linear):
                layer.weight.copy_(
                    torch.randn(layer.weight.shape, generator=generator, dtype=DTYPE)
                    * HIDDEN_INIT_SCALE
                )
                layer.bias.copy_(
                    torch.randn(layer.bias.shape, generator=generator, dtype=DTYPE)
                    * HIDDEN_INIT_SCALE
                )
        layers[-1].weight.zero_()
        layers[-1].bias.zero_()
    return nn.Sequential(*layers)


class MotionField(nn.Module):
    """The weights psi: net_TR -> (gamma, phi) and net_theta -> theta, each plus a bias.

    The output biases are the final layers' biases, so they train with their network.
    """

    def __init__(self, joint_count: int, seed: int = 0):
        super().__init__()
        self.joint_count = joint_count
        generator = torch.Generator().manual_seed(int(seed))
        self.net_tr = _mlp(EMBED_DIM, TR_HIDDEN, 9, generator)
        self.net_theta = _mlp(EMBED_DIM, THETA_HIDDEN, 6 * joint_count, generator)

    @property
    def bias_tr(self) -> torch.Tensor:
        return self.net_tr[-1].bias

    @property
    def bias_theta(self) -> torch.Tensor:
        return self.net_theta[-1].bias

    def forward(self, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Map embeddings (..., 9) to (theta (..., 6N), gamma (..., 3), phi (..., 6))."""
        tr = self.net_tr(features)
        theta = self.net_theta(features)
        return theta, tr[..., :3], tr[..., 3:]

    def evaluate(self, frames, T: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return self(embed_tensor(frames, T))

    def tr_parameters(self) -> List[nn.Parameter]:
        return list(self.net_tr.parameters())

    def theta_parameters(self) -> List[nn.Parameter]:
        return list(self.net_theta.parameters())


def init_field(
    seed: int,
    joint_count: int,
    coarse: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    rest_theta: Optional[torch.Tensor] = None,
) -> MotionField:
    """Build a field whose output equals its bias at every frame.

    Args:
        seed: Seed for the small random hidden-layer weights
        joint_count: N
        coarse: Optional (gamma_bar, phi_bar) handed over from a coarse alignment
        rest_theta: Optional (6N,) rest pose; identity rotations by default
    """
    field = MotionField(joint_count, seed=seed)
    with torch.no_grad():
        if coarse is None:
            field.bias_tr.copy_(torch.tensor((0.0, 0.0, 0.0) + IDENTITY_6D, dtype=DTYPE))
        else:
            gamma, phi = coarse
            field.bias_tr.copy_(
                torch.cat([torch.as_tensor(gamma, dtype=DTYPE), torch.as_tensor(phi, dtype=DTYPE)])
            )
        if rest_theta is None:
            rest_theta = torch.tensor(IDENTITY_6D, dtype=DTYPE).repeat(joint_count)
        field.bias_theta.copy_(rest_theta)
    return field


def eval_field(field: MotionField, t, T: int) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(theta_t, gamma_t, phi_t) for frame index (or indices) ``t``."""
    return field.evaluate(t, T)


def perturb_field(field: MotionField, sigma: float, seed: int = 0, frequency_gain: float = 8.0) -> None:
    """Inject seeded noise that makes the field's output vary quickly in time.

    The first hidden layers are scaled up by ``frequency_gain`` plus noise, and the
    output layers receive noise of scale ``sigma``.
    """
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for net in (field.net_tr, field.net_theta):
            first = net[0]
            first.weight.mul_(frequency_gain)
            first.weight.add_(torch.randn(first.weight.shape, generator=generator, dtype=DTYPE))
            last = net[-1]
            last.weight.add_(
                torch.randn(last.weight.shape, generator=generator, dtype=DTYPE) * sigma
            )


def field_state(field: MotionField) -> Dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in field.state_dict().items()}


def field_inputs(T: int) -> torch.Tensor:
    """Embedding table (T, 9) for every frame of a sequence."""
    if T < 1:
        raise ValueError(f"sequence length must be >= 1, got {T}")
    return embed_tensor(torch.arange(T, dtype=DTYPE), T)


def field_to_arrays(field: MotionField) -> Dict[str, Tuple[List[int], List[float]]]:
    """Flatten every weight tensor to (shape, values) for solution files."""
    return {
        name: (list(value.shape), value.detach().reshape(-1).tolist())
        for name, value in field.state_dict().items()
    }


def field_from_arrays(joint_count: int, arrays: Dict[str, Tuple[List[int], List[float]]]) -> MotionField:
    field = MotionField(joint_count)
    expected = field.state_dict()
    if set(arrays) != set(expected):
        raise ValueError(f"field weights {sorted(arrays)} do not match {sorted(expected)}")
    state = {}
    for name, (shape, values) in arrays.items():
        if tuple(shape) != tuple(expected[name].shape):
            raise ValueError(f"{name}: shape {tuple(shape)} != {tuple(expected[name].shape)}")
        state[name] = torch.tensor(values, dtype=DTYPE).reshape(shape)
    field.load_state_dict(state)
    return field
