"""6D rotation representation helpers."""

import math

import torch

from ..exceptions import InvalidRotationError
from ..types import DTYPE, as_tensor

# Norm and parallelism tolerance for the two 3-vector halves.
ROT6D_EPS = 1e-8

IDENTITY_6D = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)


def check_rot6d(r: torch.Tensor) -> None:
    """Raise InvalidRotationError if any 6D block is degenerate.

    Args:
        r: Tensor of shape (..., 6)
    """
    with torch.no_grad():
        a1 = r[..., :3]
        a2 = r[..., 3:6]
        n1 = a1.norm(dim=-1)
        n2 = a2.norm(dim=-1)
        if not torch.isfinite(r).all():
            raise InvalidRotationError("6D rotation contains non-finite values")
        if (n1 <= ROT6D_EPS).any() or (n2 <= ROT6D_EPS).any():
            raise InvalidRotationError("6D rotation has a near-zero column")
        sin_angle = torch.linalg.cross(a1, a2, dim=-1).norm(dim=-1) / (n1 * n2)
        if (sin_angle <= ROT6D_EPS).any():
            raise InvalidRotationError("6D rotation has near-parallel columns")


def rot6d_to_matrix(r, validate: bool = True) -> torch.Tensor:
    """Orthonormalize 6D rotations into rotation matrices.

    The first half is normalized into the first column, the second half is made
    orthogonal to it by Gram-Schmidt and the third column is their cross product.

    Args:
        r: Tensor (or array) of shape (..., 6)
        validate: Check for degenerate inputs before converting

    Returns:
        Tensor of shape (..., 3, 3) with determinant +1
    """
    r = as_tensor(r)
    if validate:
        check_rot6d(r)
    a1 = r[..., :3]
    a2 = r[..., 3:6]
    b1 = a1 / a1.norm(dim=-1, keepdim=True)
    a2_ortho = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    b2 = a2_ortho / a2_ortho.norm(dim=-1, keepdim=True)
    b3 = torch.linalg.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def matrix_to_rot6d(matrix) -> torch.Tensor:
    """Return the 6D representation (first two columns) of rotation matrices."""
    matrix = as_tensor(matrix)
    return torch.cat([matrix[..., :, 0], matrix[..., :, 1]], dim=-1)


def identity_rot6d(count: int = 1) -> torch.Tensor:
    """Identity rotations in 6D form, shape (count, 6)."""
    return torch.tensor(IDENTITY_6D, dtype=DTYPE).repeat(count, 1)


def axis_angle_to_matrix(axis, angle: float) -> torch.Tensor:
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = as_tensor(axis)
    axis = axis / axis.norm()
    x, y, z = axis.tolist()
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return torch.tensor(
        [
            [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
            [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
            [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
        ],
        dtype=DTYPE,
    )


def yaw_matrix(angle: float) -> torch.Tensor:
    """Rotation about the world up axis (+z)."""
    return axis_angle_to_matrix((0.0, 0.0, 1.0), angle)
