"""Area-weighted surface sampling with leg oversampling."""

from dataclasses import dataclass
from typing import Optional

import torch

from ..exceptions import DogfitError
from .body import PosedMesh


@dataclass
class SurfaceSamples:
    """Points on a mesh plus the face/barycentric recipe that produced them.

    ``points`` stays differentiable with respect to the mesh vertices.
    """

    points: torch.Tensor  # (..., n, 3)
    face_ids: torch.Tensor  # (..., n)
    barycentric: torch.Tensor  # (..., n, 3)


def face_areas(vertices: torch.Tensor, faces: torch.Tensor) -> torch.Tensor:
    """Triangle areas, (..., F)."""
    v0 = vertices[..., faces[:, 0], :]
    v1 = vertices[..., faces[:, 1], :]
    v2 = vertices[..., faces[:, 2], :]
    return 0.5 * torch.linalg.cross(v1 - v0, v2 - v0, dim=-1).norm(dim=-1)


def sampling_weights(
    vertices: torch.Tensor,
    faces: torch.Tensor,
    leg_faces: Optional[torch.Tensor],
    leg_boost: float,
) -> torch.Tensor:
    weights = face_areas(vertices.detach(), faces)
    if leg_faces is not None and leg_faces.numel() and leg_boost != 1.0:
        boost = torch.ones(faces.shape[0], dtype=weights.dtype)
        boost[leg_faces] = leg_boost
        weights = weights * boost
    return weights


def sample_surface(
    mesh: PosedMesh,
    n: int,
    leg_boost: float = 1.0,
    seed: int = 0,
    generator: Optional[torch.Generator] = None,
) -> SurfaceSamples:
    """Sample ``n`` points per mesh, area-weighted, with leg faces weighted by ``leg_boost``.

    Works on a single mesh (V, 3) or a batch (B, V, 3); each batch member gets its own draw.

    Args:
        mesh: Posed mesh
        n: Number of points per mesh
        leg_boost: Area multiplier for the mesh's leg faces (>= 1)
        seed: Seed used when no generator is supplied
        generator: Optional torch generator to draw from

    Returns:
        SurfaceSamples with points (..., n, 3)
    """
    if n < 1:
        raise DogfitError(f"sample count must be >= 1, got {n}")
    if leg_boost < 1.0:
        raise DogfitError(f"leg_boost must be >= 1, got {leg_boost}")
    if generator is None:
        generator = torch.Generator().manual_seed(int(seed))

    vertices, faces = mesh.vertices, mesh.faces
    weights = sampling_weights(vertices, faces, mesh.leg_faces, leg_boost)
    if not torch.isfinite(weights).all() or (weights.sum(dim=-1) <= 0).any():
        raise DogfitError("mesh has no sampleable area")

    batch_shape = weights.shape[:-1]
    flat = weights.reshape(-1, weights.shape[-1])
    face_ids = torch.multinomial(flat, n, replacement=True, generator=generator)
    face_ids = face_ids.reshape(*batch_shape, n)

    r = torch.rand(*batch_shape, n, 2, generator=generator, dtype=vertices.dtype)
    root = r[..., 0].sqrt()
    barycentric = torch.stack([1.0 - root, root * (1.0 - r[..., 1]), root * r[..., 1]], dim=-1)

    corners = faces[face_ids]  # (..., n, 3)
    if batch_shape:
        gathered = torch.stack(
            [
                torch.gather(
                    vertices,
                    -2,
                    corners[..., k].unsqueeze(-1).expand(*corners.shape[:-1], 3),
                )
                for k in range(3)
            ],
            dim=-2,
        )
    else:
        gathered = vertices[corners]  # (n, 3, 3)
    points = (barycentric.unsqueeze(-1) * gathered).sum(dim=-2)
    return SurfaceSamples(points=points, face_ids=face_ids, barycentric=barycentric)
