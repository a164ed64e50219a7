"""Template assets: mesh, skeleton, skinning, shape basis, priors and lookup tables."""

import json
import logging
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..exceptions import AssetValidationError, SchemaError
from ..io.arrays import ArrayPayload, decode_array, encode_array
from ..types import DTYPE

logger = logging.getLogger(__name__)

ROOT_SENTINEL = -1
SHAPE_DIM = 30
MAX_INFLUENCES = 4


class KeypointEntry(BaseModel):
    """Maps a detector keypoint to a joint or a vertex of the template."""

    name: str
    kind: Literal["joint", "vertex"]
    index: int = Field(..., ge=0)


class TemplateAssets(BaseModel):
    """Static data behind the posed-mesh function.

    Arrays are numpy; ``tensors`` exposes float64 torch views for the model code.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vertices: np.ndarray = Field(..., description="V x 3 rest-pose vertices (meters)")
    faces: np.ndarray = Field(..., description="F x 3 vertex index triples")
    rest_joints: np.ndarray = Field(..., description="N x 3 rest joint positions (meters)")
    parent: np.ndarray = Field(..., description="Parent index per joint, root is -1")
    joint_names: List[str] = Field(default_factory=list)
    skin_weights: np.ndarray = Field(..., description="V x N row-stochastic weights")
    shape_basis: np.ndarray = Field(..., description="B x V x 3 displacement fields")
    joint_shape_basis: Optional[np.ndarray] = Field(
        None, description="B x N x 3 joint displacement per shape coefficient"
    )
    shape_mean: np.ndarray = Field(..., description="Shape prior mean (B)")
    shape_cov: np.ndarray = Field(..., description="Shape prior covariance (B x B)")
    pose_mean: np.ndarray = Field(..., description="Pose prior mean (6N)")
    pose_cov: np.ndarray = Field(..., description="Pose prior covariance (6N x 6N)")
    limb_weights: np.ndarray = Field(..., description="Limb weight vector w (B)")
    keypoint_table: List[KeypointEntry] = Field(default_factory=list)
    foot_pairs: List[Tuple[int, int]] = Field(default_factory=list)
    foot_joints: List[int] = Field(default_factory=list)
    leg_faces: np.ndarray = Field(
        default_factory=lambda: np.zeros(0, dtype=np.int64),
        description="Face indices covering the legs",
    )

    @property
    def vertex_count(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def joint_count(self) -> int:
        return int(self.rest_joints.shape[0])

    @property
    def shape_dim(self) -> int:
        return int(self.shape_basis.shape[0])

    @property
    def keypoint_count(self) -> int:
        return len(self.keypoint_table)

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent == ROOT_SENTINEL)[0])

    @cached_property
    def tensors(self) -> Dict[str, torch.Tensor]:
        """Float64 tensors of every numeric field, built once per instance."""
        joint_basis = self.joint_shape_basis
        if joint_basis is None:
            joint_basis = np.zeros((self.shape_dim, self.joint_count, 3))
        return {
            "vertices": torch.as_tensor(self.vertices, dtype=DTYPE),
            "faces": torch.as_tensor(self.faces, dtype=torch.int64),
            "rest_joints": torch.as_tensor(self.rest_joints, dtype=DTYPE),
            "skin_weights": torch.as_tensor(self.skin_weights, dtype=DTYPE),
            "shape_basis": torch.as_tensor(self.shape_basis, dtype=DTYPE),
            "joint_shape_basis": torch.as_tensor(joint_basis, dtype=DTYPE),
            "shape_mean": torch.as_tensor(self.shape_mean, dtype=DTYPE),
            "pose_mean": torch.as_tensor(self.pose_mean, dtype=DTYPE),
            "limb_weights": torch.as_tensor(self.limb_weights, dtype=DTYPE),
            "leg_faces": torch.as_tensor(self.leg_faces, dtype=torch.int64),
        }

    @cached_property
    def shape_cov_cholesky(self) -> torch.Tensor:
        return torch.linalg.cholesky(torch.as_tensor(self.shape_cov, dtype=DTYPE))

    @cached_property
    def pose_cov_cholesky(self) -> torch.Tensor:
        return torch.linalg.cholesky(torch.as_tensor(self.pose_cov, dtype=DTYPE))

    @cached_property
    def topological_order(self) -> List[int]:
        """Joint indices ordered so every parent precedes its children."""
        order: List[int] = []
        children: Dict[int, List[int]] = {}
        for j, p in enumerate(self.parent.tolist()):
            children.setdefault(p, []).append(j)
        stack = list(reversed(children.get(ROOT_SENTINEL, [])))
        while stack:
            j = stack.pop()
            order.append(j)
            stack.extend(reversed(children.get(j, [])))
        return order

    @cached_property
    def keypoint_joint_mask(self) -> np.ndarray:
        return np.array([kp.kind == "joint" for kp in self.keypoint_table], dtype=bool)

    def validate(self) -> "TemplateAssets":
        """Check every invariant; raise AssetValidationError on the first violation."""
        V, N = self.vertex_count, self.joint_count
        _expect_shape(self.vertices, (V, 3), "vertices")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise AssetValidationError("faces must be F x 3", "faces")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= V):
            raise AssetValidationError("face index out of range", "faces")
        _expect_shape(self.rest_joints, (N, 3), "rest_joints")
        _expect_shape(self.parent, (N,), "parent")
        _check_tree(self.parent)
        _expect_shape(self.skin_weights, (V, N), "skin_weights")
        if (self.skin_weights < 0).any():
            raise AssetValidationError("negative skinning weight", "skin_weights")
        if np.abs(self.skin_weights.sum(axis=1) - 1.0).max() > 1e-6:
            raise AssetValidationError("rows must sum to 1", "skin_weights")
        if (np.count_nonzero(self.skin_weights, axis=1) > MAX_INFLUENCES).any():
            raise AssetValidationError(
                f"more than {MAX_INFLUENCES} influences per vertex", "skin_weights"
            )
        B = self.shape_dim
        if B != SHAPE_DIM:
            raise AssetValidationError(f"expected {SHAPE_DIM} shape fields, got {B}", "shape_basis")
        _expect_shape(self.shape_basis, (B, V, 3), "shape_basis")
        if self.joint_shape_basis is not None:
            _expect_shape(self.joint_shape_basis, (B, N, 3), "joint_shape_basis")
        _expect_shape(self.shape_mean, (B,), "shape_mean")
        _expect_shape(self.shape_cov, (B, B), "shape_cov")
        _expect_shape(self.pose_mean, (6 * N,), "pose_mean")
        _expect_shape(self.pose_cov, (6 * N, 6 * N), "pose_cov")
        _expect_shape(self.limb_weights, (B,), "limb_weights")
        if (self.limb_weights < 0).any():
            raise AssetValidationError("limb weights must be nonnegative", "limb_weights")
        for name in ("shape_cov", "pose_cov"):
            cov = getattr(self, name)
            if not np.allclose(cov, cov.T, atol=1e-12):
                raise AssetValidationError("covariance must be symmetric", name)
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as e:
                raise AssetValidationError(f"Cholesky factorization failed: {e}", name) from e
        for kp in self.keypoint_table:
            limit = N if kp.kind == "joint" else V
            if kp.index >= limit:
                raise AssetValidationError(f"{kp.name} index {kp.index} out of range", "keypoint_table")
        for left, right in self.foot_pairs:
            if not (0 <= left < N and 0 <= right < N):
                raise AssetValidationError(f"pair ({left}, {right}) out of range", "foot_pairs")
        if any(not 0 <= j < N for j in self.foot_joints):
            raise AssetValidationError("joint index out of range", "foot_joints")
        F = self.faces.shape[0]
        if self.leg_faces.size and (self.leg_faces.min() < 0 or self.leg_faces.max() >= F):
            raise AssetValidationError("face index out of range", "leg_faces")
        if not all(np.isfinite(a).all() for a in (self.vertices, self.rest_joints, self.shape_basis)):
            raise AssetValidationError("non-finite geometry", "vertices")
        return self


def _expect_shape(array: np.ndarray, shape: Tuple[int, ...], name: str) -> None:
    if tuple(array.shape) != tuple(shape):
        raise AssetValidationError(f"expected shape {shape}, got {tuple(array.shape)}", name)


def _check_tree(parent: np.ndarray) -> None:
    roots = np.flatnonzero(parent == ROOT_SENTINEL)
    if len(roots) != 1:
        raise AssetValidationError(f"expected one root, found {len(roots)}", "parent")
    N = len(parent)
    for j in range(N):
        seen = set()
        k = j
        while k != ROOT_SENTINEL:
            if k in seen or not (0 <= k < N):
                raise AssetValidationError(f"joint {j} is not connected to the root", "parent")
            seen.add(k)
            k = int(parent[k])


_ARRAY_FIELDS = (
    "vertices",
    "faces",
    "rest_joints",
    "parent",
    "skin_weights",
    "shape_basis",
    "joint_shape_basis",
    "shape_mean",
    "shape_cov",
    "pose_mean",
    "pose_cov",
    "limb_weights",
    "leg_faces",
)


class AssetsDocument(BaseModel):
    """On-disk schema of an assets file."""

    format: Literal["dogfit-assets"] = "dogfit-assets"
    version: int = 1
    arrays: Dict[str, ArrayPayload]
    joint_names: List[str] = Field(default_factory=list)
    keypoint_table: List[KeypointEntry]
    foot_pairs: List[Tuple[int, int]]
    foot_joints: List[int]


def assets_to_document(assets: TemplateAssets) -> AssetsDocument:
    arrays = {}
    for name in _ARRAY_FIELDS:
        value = getattr(assets, name)
        if value is not None:
            arrays[name] = encode_array(value)
    return AssetsDocument(
        arrays=arrays,
        joint_names=list(assets.joint_names),
        keypoint_table=list(assets.keypoint_table),
        foot_pairs=[tuple(p) for p in assets.foot_pairs],
        foot_joints=list(assets.foot_joints),
    )


def assets_from_document(document: AssetsDocument) -> TemplateAssets:
    values: Dict[str, Any] = {}
    for name in _ARRAY_FIELDS:
        if name in document.arrays:
            values[name] = decode_array(document.arrays[name])
    missing = [n for n in _ARRAY_FIELDS if n not in values and n != "joint_shape_basis"]
    if missing:
        raise SchemaError(f"assets file lacks arrays: {', '.join(missing)}")
    return TemplateAssets(
        **values,
        joint_names=document.joint_names,
        keypoint_table=document.keypoint_table,
        foot_pairs=document.foot_pairs,
        foot_joints=document.foot_joints,
    ).validate()


def save_assets(assets: TemplateAssets, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(assets_to_document(assets).model_dump_json())
    logger.info(f"Saved template assets to {path}")


def load_assets(path: Union[str, Path]) -> TemplateAssets:
    """Load and validate an assets file."""
    path = Path(path)
    try:
        document = AssetsDocument.model_validate(json.loads(path.read_text()))
    except FileNotFoundError as e:
        raise SchemaError(f"assets file not found: {path}", file=str(path)) from e
    except ValidationError as e:
        diagnostics = [f"{path}: {'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
        raise SchemaError(f"invalid assets file {path}", file=str(path), diagnostics=diagnostics) from e
    assets = assets_from_document(document)
    logger.info(
        f"Loaded template assets from {path}: V={assets.vertex_count}, N={assets.joint_count}"
    )
    return assets
