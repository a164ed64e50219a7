"""Parametric articulated body: shape blend, forward kinematics, skinning, scale and translation."""

from dataclasses import dataclass, field, replace
from typing import Optional

import torch

from ..exceptions import DogfitError
from ..types import DTYPE, as_tensor
from .assets import TemplateAssets
from .rotations import check_rot6d, identity_rot6d, rot6d_to_matrix


@dataclass
class BodyState:
    """Per-sequence shape/scale plus per-frame pose, translation and orientation.

    Attributes:
        beta: (B,) shape coefficients
        scale: scalar tensor, s > 0
        theta: (T, 6N) joint rotations in 6D form
        translation: (T, 3) root translation gamma_t in meters
        orientation: (T, 6) root orientation phi_t in 6D form
    """

    beta: torch.Tensor
    scale: torch.Tensor
    theta: torch.Tensor
    translation: torch.Tensor
    orientation: torch.Tensor

    @property
    def frame_count(self) -> int:
        return int(self.theta.shape[0])

    @classmethod
    def rest(cls, assets: TemplateAssets, frames: int = 1, scale: float = 1.0) -> "BodyState":
        """Zero shape, identity rotations, no translation."""
        N = assets.joint_count
        return cls(
            beta=torch.zeros(assets.shape_dim, dtype=DTYPE),
            scale=torch.tensor(float(scale), dtype=DTYPE),
            theta=identity_rot6d(N).reshape(1, 6 * N).repeat(frames, 1),
            translation=torch.zeros(frames, 3, dtype=DTYPE),
            orientation=identity_rot6d(frames),
        )

    def validate(self) -> "BodyState":
        if not float(self.scale) > 0:
            raise DogfitError(f"scale must be positive, got {float(self.scale)}")
        T = self.frame_count
        if self.translation.shape != (T, 3) or self.orientation.shape != (T, 6):
            raise DogfitError("per-frame arrays must share the sequence length")
        check_rot6d(self.theta.reshape(T, -1, 6))
        check_rot6d(self.orientation)
        return self

    def detach(self) -> "BodyState":
        return BodyState(
            beta=self.beta.detach().clone(),
            scale=self.scale.detach().clone(),
            theta=self.theta.detach().clone(),
            translation=self.translation.detach().clone(),
            orientation=self.orientation.detach().clone(),
        )

    def select(self, frames) -> "BodyState":
        """Restrict the per-frame arrays to the given frame indices."""
        index = torch.as_tensor(frames, dtype=torch.int64)
        return replace(
            self,
            theta=self.theta[index],
            translation=self.translation[index],
            orientation=self.orientation[index],
        )


@dataclass
class PosedMesh:
    """World-frame posed mesh; vertices/joints may carry leading frame dimensions."""

    vertices: torch.Tensor
    faces: torch.Tensor
    joints: torch.Tensor
    leg_faces: Optional[torch.Tensor] = field(default=None)
    keypoints: Optional[torch.Tensor] = field(default=None)

    def frame(self, index: int) -> "PosedMesh":
        keypoints = None if self.keypoints is None else self.keypoints[index]
        return PosedMesh(self.vertices[index], self.faces, self.joints[index], self.leg_faces, keypoints)

    def detach(self) -> "PosedMesh":
        keypoints = None if self.keypoints is None else self.keypoints.detach()
        return PosedMesh(
            self.vertices.detach(), self.faces, self.joints.detach(), self.leg_faces, keypoints
        )


def shaped_rest(assets: TemplateAssets, beta) -> tuple[torch.Tensor, torch.Tensor]:
    """Rest vertices and joints after the shape blend."""
    t = assets.tensors
    beta = as_tensor(beta)
    vertices = t["vertices"] + torch.einsum("b,bvc->vc", beta, t["shape_basis"])
    joints = t["rest_joints"] + torch.einsum("b,bnc->nc", beta, t["joint_shape_basis"])
    return vertices, joints


def _rigid(rotation: torch.Tensor, translation: torch.Tensor) -> torch.Tensor:
    top = torch.cat([rotation, translation.unsqueeze(-1)], dim=-1)
    bottom = torch.zeros(*rotation.shape[:-2], 1, 4, dtype=rotation.dtype)
    bottom[..., 0, 3] = 1.0
    return torch.cat([top, bottom], dim=-2)


def forward_kinematics(
    assets: TemplateAssets,
    theta,
    phi,
    rest_joints: Optional[torch.Tensor] = None,
    validate: bool = True,
) -> torch.Tensor:
    """Compose the kinematic chain into world transforms.

    The root transform rotates the whole rest body about the world origin by
    R(phi) @ R(theta_root); every child is parent @ [R(theta_j) | J_j - J_parent].

    Args:
        assets: Template assets
        theta: (..., 6N) joint rotations
        phi: (..., 6) root orientation
        rest_joints: (N, 3) shaped rest joints, defaults to the template's
        validate: Check the 6D blocks for degeneracy

    Returns:
        (..., N, 4, 4) rigid world transforms; joint positions are [..., :3, 3]
    """
    theta = as_tensor(theta)
    phi = as_tensor(phi)
    N = assets.joint_count
    J = assets.tensors["rest_joints"] if rest_joints is None else rest_joints
    local_rot = rot6d_to_matrix(theta.reshape(*theta.shape[:-1], N, 6), validate=validate)
    root_rot = rot6d_to_matrix(phi, validate=validate)
    parent = assets.parent.tolist()

    world: list[Optional[torch.Tensor]] = [None] * N
    for j in assets.topological_order:
        p = parent[j]
        if p < 0:
            rotation = root_rot @ local_rot[..., j, :, :]
            translation = (root_rot @ J[j].unsqueeze(-1)).squeeze(-1)
            world[j] = _rigid(rotation, translation)
        else:
            offset = (J[j] - J[p]).expand(*local_rot.shape[:-3], 3)
            world[j] = world[p] @ _rigid(local_rot[..., j, :, :], offset)
    return torch.stack(world, dim=-3)  # type: ignore[arg-type]


def linear_blend_skinning(
    skin_weights: torch.Tensor,
    transforms: torch.Tensor,
    rest_vertices: torch.Tensor,
    rest_joints: torch.Tensor,
) -> torch.Tensor:
    """Skin rest vertices with per-joint world transforms.

    Args:
        skin_weights: (V, N)
        transforms: (..., N, 4, 4) world transforms from forward_kinematics
        rest_vertices: (V, 3)
        rest_joints: (N, 3)

    Returns:
        (..., V, 3) posed vertices
    """
    rotation = transforms[..., :3, :3]
    translation = transforms[..., :3, 3] - (rotation @ rest_joints.unsqueeze(-1)).squeeze(-1)
    per_vertex_rot = torch.einsum("vn,...nij->...vij", skin_weights, rotation)
    per_vertex_trans = torch.einsum("vn,...ni->...vi", skin_weights, translation)
    return (per_vertex_rot @ rest_vertices.unsqueeze(-1)).squeeze(-1) + per_vertex_trans


def pose_batch(
    assets: TemplateAssets,
    beta,
    scale,
    theta,
    translation,
    orientation,
    validate: bool = True,
) -> PosedMesh:
    """Pose any number of frames at once: M(beta, theta, phi) * s + gamma.

    Per-frame inputs carry a leading frame dimension (or none for a single frame).
    """
    scale = as_tensor(scale)
    translation = as_tensor(translation)
    vertices, joints = shaped_rest(assets, beta)
    transforms = forward_kinematics(assets, theta, orientation, rest_joints=joints, validate=validate)
    posed = linear_blend_skinning(assets.tensors["skin_weights"], transforms, vertices, joints)
    world_joints = transforms[..., :3, 3]
    offset = translation.unsqueeze(-2)
    mesh = PosedMesh(
        vertices=posed * scale + offset,
        faces=assets.tensors["faces"],
        joints=world_joints * scale + offset,
        leg_faces=assets.tensors["leg_faces"],
    )
    if assets.keypoint_table:
        mesh.keypoints = model_keypoints(assets, mesh)
    return mesh


def pose_mesh(assets: TemplateAssets, state: BodyState, t: int, validate: bool = True) -> PosedMesh:
    """Posed mesh of frame ``t`` of ``state``."""
    if not 0 <= t < state.frame_count:
        raise DogfitError(f"frame {t} outside sequence of length {state.frame_count}")
    if not float(state.scale) > 0:
        raise DogfitError(f"scale must be positive, got {float(state.scale)}")
    return pose_batch(
        assets,
        state.beta,
        state.scale,
        state.theta[t],
        state.translation[t],
        state.orientation[t],
        validate=validate,
    )


def pose_sequence(assets: TemplateAssets, state: BodyState, validate: bool = True) -> PosedMesh:
    """Posed meshes of every frame, vertices (T, V, 3) and joints (T, N, 3)."""
    return pose_batch(
        assets,
        state.beta,
        state.scale,
        state.theta,
        state.translation,
        state.orientation,
        validate=validate,
    )


def model_keypoints(assets: TemplateAssets, mesh: PosedMesh) -> torch.Tensor:
    """Keypoints (..., K, 3) read from joints or vertices per the keypoint table."""
    rows = []
    for kp in assets.keypoint_table:
        source = mesh.joints if kp.kind == "joint" else mesh.vertices
        rows.append(source[..., kp.index, :])
    return torch.stack(rows, dim=-2)
