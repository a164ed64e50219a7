"""Symmetric Chamfer distance with nearest neighbours held fixed during differentiation."""

import torch
from scipy.spatial import KDTree

from ..exceptions import DogfitError


def nearest_indices(query: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Index into ``reference`` of the nearest point for every row of ``query``."""
    tree = KDTree(reference.detach().cpu().numpy())
    _, index = tree.query(query.detach().cpu().numpy(), k=1)
    return torch.as_tensor(index, dtype=torch.int64)


def directed_distances(query: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Euclidean distance from each query point to its nearest reference point.

    Gradients flow through both point sets at the fixed matches.
    """
    index = nearest_indices(query, reference)
    return torch.linalg.vector_norm(query - reference[index], dim=-1)


def chamfer(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Half the sum of the two directed mean nearest-neighbour distances.

    Raises:
        DogfitError: If either set is empty
    """
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DogfitError("Chamfer distance needs two nonempty point sets")
    if a.shape[-1] != b.shape[-1]:
        raise DogfitError(f"point dimensions differ: {a.shape[-1]} vs {b.shape[-1]}")
    return 0.5 * (directed_distances(a, b).mean() + directed_distances(b, a).mean())


def chamfer_2d(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Chamfer distance between pixel sets, in pixels."""
    return chamfer(a, b)


def chamfer_3d(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Chamfer distance between 3D point sets, in meters."""
    return chamfer(a, b)
