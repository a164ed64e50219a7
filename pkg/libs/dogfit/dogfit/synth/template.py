"""Procedural quadruped template with the TemplateAssets schema.

The body is lofted from tubes (torso, four legs, neck, head, ears, tail) around a
35-joint skeleton. Body axis: +x forward, +y left, +z up; the root joint sits at the
origin and the whole template is scaled so the withers stand ``size_class`` meters
above the lowest vertex.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..model.assets import SHAPE_DIM, KeypointEntry, TemplateAssets
from ..model.rotations import IDENTITY_6D

logger = logging.getLogger(__name__)

JOINTS: List[Tuple[str, int, Tuple[float, float, float]]] = [
    ("root", -1, (0.0, 0.0, 0.0)),
    ("spine1", 0, (0.08, 0.0, 0.01)),
    ("spine2", 1, (0.16, 0.0, 0.02)),
    ("withers", 2, (0.24, 0.0, 0.03)),
    ("shoulder_fl", 3, (0.24, 0.06, -0.03)),
    ("elbow_fl", 4, (0.25, 0.065, -0.17)),
    ("wrist_fl", 5, (0.25, 0.065, -0.31)),
    ("paw_fl", 6, (0.27, 0.065, -0.36)),
    ("shoulder_fr", 3, (0.24, -0.06, -0.03)),
    ("elbow_fr", 8, (0.25, -0.065, -0.17)),
    ("wrist_fr", 9, (0.25, -0.065, -0.31)),
    ("paw_fr", 10, (0.27, -0.065, -0.36)),
    ("hip_bl", 0, (-0.24, 0.06, -0.02)),
    ("knee_bl", 12, (-0.20, 0.065, -0.17)),
    ("ankle_bl", 13, (-0.27, 0.065, -0.29)),
    ("paw_bl", 14, (-0.25, 0.065, -0.36)),
    ("hip_br", 0, (-0.24, -0.06, -0.02)),
    ("knee_br", 16, (-0.20, -0.065, -0.17)),
    ("ankle_br", 17, (-0.27, -0.065, -0.29)),
    ("paw_br", 18, (-0.25, -0.065, -0.36)),
    ("neck1", 3, (0.30, 0.0, 0.08)),
    ("neck2", 20, (0.36, 0.0, 0.15)),
    ("head", 21, (0.42, 0.0, 0.19)),
    ("nose", 22, (0.55, 0.0, 0.15)),
    ("ear_l", 22, (0.42, 0.04, 0.24)),
    ("ear_l_tip", 24, (0.40, 0.05, 0.30)),
    ("ear_r", 22, (0.42, -0.04, 0.24)),
    ("ear_r_tip", 26, (0.40, -0.05, 0.30)),
] + [
    (f"tail{k + 1}", 0 if k == 0 else 28 + k - 1, (-0.28 - 0.04 * k, 0.0, 0.04 + 0.02 * k))
    for k in range(7)
]

WITHERS = 3
LEGS: Dict[str, Tuple[int, int, int, int]] = {
    "front_l": (4, 5, 6, 7),
    "front_r": (8, 9, 10, 11),
    "back_l": (12, 13, 14, 15),
    "back_r": (16, 17, 18, 19),
}
PAWS = (7, 11, 15, 19)
FOOT_PAIRS = [(7, 11), (15, 19), (6, 10), (14, 18)]

# Joints each part's vertices may be skinned to.
PART_JOINTS: Dict[str, Tuple[int, ...]] = {
    "torso": (0, 1, 2, 3),
    "front_l": (3, 4, 5, 6, 7),
    "front_r": (3, 8, 9, 10, 11),
    "back_l": (0, 12, 13, 14, 15),
    "back_r": (0, 16, 17, 18, 19),
    "neck": (3, 20, 21),
    "head": (21, 22, 23),
    "ear_l": (22, 24, 25),
    "ear_r": (22, 26, 27),
    "tail": (0, 28, 29, 30, 31, 32, 33, 34),
}

LIMB_COEFFICIENTS = (2, 3, 4)
STRUCTURED_FIELDS = 8
SKIN_FALLOFF = 0.015


@dataclass
class _Mesh:
    vertices: List[np.ndarray] = field(default_factory=list)
    faces: List[np.ndarray] = field(default_factory=list)
    parts: List[str] = field(default_factory=list)
    axis: List[np.ndarray] = field(default_factory=list)
    face_parts: List[str] = field(default_factory=list)
    count: int = 0

    def add(self, vertices: np.ndarray, faces: np.ndarray, axis: np.ndarray, part: str) -> None:
        self.vertices.append(vertices)
        self.faces.append(faces + self.count)
        self.axis.append(axis)
        self.parts.extend([part] * len(vertices))
        self.face_parts.extend([part] * len(faces))
        self.count += len(vertices)


def _resample(path: np.ndarray, radii: np.ndarray, rings: int) -> Tuple[np.ndarray, np.ndarray]:
    lengths = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(lengths)])
    s = np.linspace(0.0, arc[-1], rings)
    centers = np.stack([np.interp(s, arc, path[:, k]) for k in range(3)], axis=1)
    ring_radii = np.stack([np.interp(s, arc, radii[:, k]) for k in range(2)], axis=1)
    return centers, ring_radii


def loft_tube(
    path: Sequence[Sequence[float]],
    radii: Sequence,
    rings: int,
    segments: int,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed tube along a polyline with elliptical cross sections.

    Args:
        path: (P, 3) polyline
        radii: P radii, scalars or (r1, r2) pairs
        rings: Cross sections along the tube
        segments: Vertices per cross section

    Returns:
        (vertices, faces, axis): axis is the cross-section center of every vertex.
        Faces wind counter-clockwise seen from outside.
    """
    path = np.asarray(path, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    if radii.ndim == 1:
        radii = np.stack([radii, radii], axis=1)
    centers, ring_radii = _resample(path, radii, max(rings, 2))
    R = len(centers)

    tangents = np.gradient(centers, axis=0)
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    frames = []
    reference = np.array([0.0, 0.0, 1.0]) if abs(tangents[0, 2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    n1 = np.cross(reference, tangents[0])
    n1 /= np.linalg.norm(n1)
    for t in tangents:
        n1 = n1 - (n1 @ t) * t
        n1 /= np.linalg.norm(n1)
        frames.append((n1, np.cross(t, n1)))

    angles = 2.0 * math.pi * np.arange(segments) / segments
    rings_v = []
    for (n1, n2), c, (r1, r2) in zip(frames, centers, ring_radii):
        rings_v.append(c + r1 * np.cos(angles)[:, None] * n1 + r2 * np.sin(angles)[:, None] * n2)
    vertices = np.concatenate(rings_v + [centers[:1], centers[-1:]])
    axis = np.concatenate([np.repeat(centers, segments, axis=0), centers[:1], centers[-1:]])

    faces = []
    for i in range(R - 1):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + (j + 1) % segments
            d = (i + 1) * segments + j
            faces.append((a, b, c))
            faces.append((a, c, d))
    start, end = R * segments, R * segments + 1
    last = (R - 1) * segments
    for j in range(segments):
        k = (j + 1) % segments
        faces.append((start, k, j))
        faces.append((end, last + j, last + k))
    return vertices, np.asarray(faces, dtype=np.int64), axis


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return np.linalg.norm(points - a, axis=1)
    u = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + u[:, None] * ab), axis=1)


def _bones(joints: np.ndarray, parent: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
    """One segment per joint along the body part it rotates."""
    primary = {0: 1, WITHERS: 20, 22: 23}
    children: Dict[int, List[int]] = {}
    for j, p in enumerate(parent):
        children.setdefault(int(p), []).append(j)
    bones = []
    for j in range(len(joints)):
        if j == 0:
            bones.append((np.array([joints[28, 0], 0.0, 0.0]), joints[1]))
        elif j in primary:
            bones.append((joints[j], joints[primary[j]]))
        elif j in PAWS:
            bones.append((joints[j], joints[j] + np.array([0.04, 0.0, 0.0])))
        elif children.get(j):
            bones.append((joints[j], joints[children[j][0]]))
        else:
            bones.append((joints[j], joints[j]))
    return bones


def skinning_weights(
    vertices: np.ndarray, parts: Sequence[str], joints: np.ndarray, parent: np.ndarray
) -> np.ndarray:
    """Distance-to-bone exponential falloff over each part's joints, top 4, row-normalized."""
    V, N = len(vertices), len(joints)
    bones = _bones(joints, parent)
    parts_arr = np.asarray(parts)
    weights = np.zeros((V, N))
    for part, candidates in PART_JOINTS.items():
        rows = np.flatnonzero(parts_arr == part)
        if rows.size == 0:
            continue
        distances = np.stack([_segment_distance(vertices[rows], *bones[j]) for j in candidates], axis=1)
        local = np.exp(-(distances - distances.min(axis=1, keepdims=True)) / SKIN_FALLOFF)
        if local.shape[1] > 4:
            cutoff = -np.sort(-local, axis=1)[:, 3:4]
            local = np.where(local >= cutoff, local, 0.0)
            # Ties at the cutoff can leave more than four; keep the first four.
            for r in np.flatnonzero((local > 0).sum(axis=1) > 4):
                keep = np.argsort(-local[r], kind="stable")[:4]
                row = np.zeros_like(local[r])
                row[keep] = local[r, keep]
                local[r] = row
        weights[np.ix_(rows, list(candidates))] = local
    return weights / weights.sum(axis=1, keepdims=True)


def _joint_parts() -> List[str]:
    parts = ["torso"] * 4
    for leg in LEGS:
        parts += [leg] * 4
    parts += ["neck", "neck", "head", "head", "ear_l", "ear_l", "ear_r", "ear_r"]
    parts += ["tail"] * 7
    return parts


def _anchors(joints: np.ndarray) -> Dict[str, np.ndarray]:
    anchors = {leg: joints[ids[0]] for leg, ids in LEGS.items()}
    anchors.update(
        torso=np.zeros(3),
        neck=joints[WITHERS],
        head=joints[22],
        ear_l=joints[22],
        ear_r=joints[22],
        tail=joints[28],
    )
    return anchors


def shape_fields(
    points: np.ndarray,
    parts: Sequence[str],
    axis: np.ndarray,
    joints: np.ndarray,
    rng_fields: Sequence[Tuple[np.ndarray, np.ndarray, float]],
) -> np.ndarray:
    """Displacement (B, M, 3) of every shape coefficient at the given points.

    Coefficients: 0 body length, 1 girth, 2 front leg length, 3 back leg length,
    4 leg thickness, 5 neck length, 6 tail length, 7 head size, then seeded smooth
    fields. Points on a part's axis (joints) get no radial displacement.
    """
    M = len(points)
    parts_arr = np.asarray(parts)
    anchors = _anchors(joints)
    anchor = np.stack([anchors[p] for p in parts])
    basis = np.zeros((SHAPE_DIM, M, 3))
    is_torso = parts_arr == "torso"
    is_front = np.isin(parts_arr, ("front_l", "front_r"))
    is_back = np.isin(parts_arr, ("back_l", "back_r"))
    is_leg = is_front | is_back
    is_headish = np.isin(parts_arr, ("head", "ear_l", "ear_r"))
    radial = points - axis

    length_x = np.where(is_torso, points[:, 0], anchor[:, 0])
    length_x = np.where(np.isin(parts_arr, ("neck", "head", "ear_l", "ear_r")), joints[WITHERS, 0], length_x)
    basis[0, :, 0] = 0.15 * length_x

    basis[1, is_torso, 1:] = 0.25 * radial[is_torso, 1:]
    basis[1, is_leg, 1] = 0.25 * anchor[is_leg, 1]

    basis[2, is_front, 2] = 0.25 * (points[is_front, 2] - anchor[is_front, 2])
    basis[3, is_back, 2] = 0.25 * (points[is_back, 2] - anchor[is_back, 2])
    basis[4, is_leg] = 0.3 * radial[is_leg]

    is_neck = parts_arr == "neck"
    basis[5, is_neck] = 0.3 * (points[is_neck] - joints[WITHERS])
    basis[5, is_headish] = 0.3 * (joints[22] - joints[WITHERS])
    is_tail = parts_arr == "tail"
    basis[6, is_tail] = 0.3 * (points[is_tail] - joints[28])
    basis[7, is_headish] = 0.2 * (points[is_headish] - joints[22])

    for b, (amplitude, wave, phase) in enumerate(rng_fields, start=STRUCTURED_FIELDS):
        basis[b] = amplitude[None, :] * np.sin(points @ wave + phase)[:, None]
    return basis


def _nearest_vertex(vertices: np.ndarray, parts: np.ndarray, part: str, target) -> int:
    rows = np.flatnonzero(parts == part)
    distances = np.linalg.norm(vertices[rows] - np.asarray(target), axis=1)
    return int(rows[np.argmin(distances)])


def make_template(seed: int = 0, size_class: float = 0.4, resolution: float = 1.0) -> TemplateAssets:
    """Build a procedural quadruped.

    Args:
        seed: Controls body proportions and the smooth shape fields; topology is fixed
        size_class: Withers height above the lowest vertex, meters
        resolution: Multiplier on rings and segments per tube (1.0 gives about 2000 vertices)
    """
    if size_class <= 0:
        raise ValueError(f"size_class must be positive, got {size_class}")
    rng = np.random.default_rng(seed)
    names = [j[0] for j in JOINTS]
    parent = np.array([j[1] for j in JOINTS], dtype=np.int64)
    joints = np.array([j[2] for j in JOINTS], dtype=np.float64)

    # Seeded proportions: body length, leg length, girth and neck length.
    body_len, leg_len, girth, neck_len = rng.uniform(0.9, 1.1, size=4)
    joints[:, 0] *= body_len
    for ids in LEGS.values():
        top = joints[ids[0]].copy()
        for j in ids[1:]:
            joints[j, 2] = top[2] + (joints[j, 2] - top[2]) * leg_len
    for j in range(20, 28):
        joints[j] = joints[WITHERS] + (joints[j] - joints[WITHERS]) * np.array([neck_len, 1.0, neck_len])

    def n(count: float, minimum: int) -> int:
        return max(minimum, int(round(count * resolution)))

    mesh = _Mesh()
    torso_x = np.linspace(-0.30 * body_len, 0.32 * body_len, 7)
    u = np.linspace(-1.0, 1.0, 7)
    profile = np.sqrt(np.maximum(1.0 - u**2, 0.15))
    torso_path = np.stack([torso_x, np.zeros(7), np.interp(torso_x, [joints[0, 0], joints[WITHERS, 0]], [0.0, 0.03])], 1)
    torso_radii = np.stack([0.09 * girth * profile, 0.11 * girth * profile], axis=1)
    mesh.add(*loft_tube(torso_path, torso_radii, n(20, 6), n(24, 8)), part="torso")

    for leg, (top, mid, low, paw) in LEGS.items():
        toe = joints[paw] + np.array([0.04, 0.0, 0.0])
        path = [joints[top] + np.array([0.0, 0.0, 0.05]), joints[mid], joints[low], joints[paw], toe]
        radii = [0.045, 0.032, 0.024, 0.022, 0.016]
        mesh.add(*loft_tube(path, radii, n(16, 6), n(12, 6)), part=leg)

    neck_path = [joints[WITHERS] + np.array([-0.02, 0.0, 0.0]), joints[20], joints[21], joints[22]]
    mesh.add(*loft_tube(neck_path, [0.07, 0.06, 0.05, 0.045], n(10, 4), n(16, 6)), part="neck")
    head_path = [joints[22] + np.array([-0.05, 0.0, 0.01]), joints[22], 0.5 * (joints[22] + joints[23]), joints[23]]
    mesh.add(*loft_tube(head_path, [(0.05, 0.055), (0.055, 0.06), (0.035, 0.035), (0.018, 0.018)], n(10, 4), n(16, 6)), part="head")
    for ear, tip in (("ear_l", 25), ("ear_r", 27)):
        base = joints[names.index(ear)]
        mesh.add(*loft_tube([base, joints[tip]], [0.022, 0.004], n(5, 3), n(8, 4)), part=ear)
    tail_path = joints[28:35]
    mesh.add(*loft_tube(tail_path, np.linspace(0.022, 0.008, len(tail_path)), n(14, 4), n(10, 4)), part="tail")

    vertices = np.concatenate(mesh.vertices)
    faces = np.concatenate(mesh.faces)
    axis = np.concatenate(mesh.axis)
    parts = np.asarray(mesh.parts)

    skin = skinning_weights(vertices, parts, joints, parent)

    rng_fields = []
    for _ in range(SHAPE_DIM - STRUCTURED_FIELDS):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        wave = rng.normal(size=3)
        wave *= rng.uniform(2.0 * math.pi / 1.0, 2.0 * math.pi / 0.4) / np.linalg.norm(wave)
        rng_fields.append((0.012 * direction, wave, float(rng.uniform(0.0, 2.0 * math.pi))))
    shape_basis = shape_fields(vertices, parts, axis, joints, rng_fields)
    joint_basis = shape_fields(joints, _joint_parts(), joints, joints, rng_fields)

    factor = size_class / (joints[WITHERS, 2] - vertices[:, 2].min())
    vertices = vertices * factor
    joints = joints * factor
    shape_basis = shape_basis * factor
    joint_basis = joint_basis * factor

    keypoints = [KeypointEntry(name=names[j], kind="joint", index=j) for j in PAWS]
    keypoints += [KeypointEntry(name=names[j], kind="joint", index=j) for j in (5, 9, 13, 17)]
    keypoints += [KeypointEntry(name=names[j], kind="joint", index=j) for j in (24, 25, 26, 27)]
    keypoints += [KeypointEntry(name="nose", kind="joint", index=23)]
    keypoints += [
        KeypointEntry(name="tail_base", kind="joint", index=28),
        KeypointEntry(name="tail_tip", kind="joint", index=34),
    ]
    head = joints[22] / factor
    for side, name in ((1.0, "eye_l"), (-1.0, "eye_r")):
        target = (head + np.array([0.05, 0.035 * side, 0.02])) * factor
        keypoints.append(KeypointEntry(name=name, kind="vertex", index=_nearest_vertex(vertices, parts, "head", target)))
    withers_top = joints[WITHERS] + np.array([0.0, 0.0, 0.12 * factor])
    keypoints.append(KeypointEntry(name="withers", kind="vertex", index=_nearest_vertex(vertices, parts, "torso", withers_top)))
    chin = (head + np.array([0.08, 0.0, -0.05])) * factor
    keypoints.append(KeypointEntry(name="chin", kind="vertex", index=_nearest_vertex(vertices, parts, "head", chin)))
    keypoints += [KeypointEntry(name=names[j], kind="joint", index=j) for j in (4, 8, 12, 16)]
    keypoints.append(KeypointEntry(name="tail_mid", kind="joint", index=31))

    N = len(joints)
    limb = np.zeros(SHAPE_DIM)
    limb[list(LIMB_COEFFICIENTS)] = 1.0
    leg_faces = np.flatnonzero(np.isin(np.asarray(mesh.face_parts), list(LEGS)))

    assets = TemplateAssets(
        vertices=vertices,
        faces=faces,
        rest_joints=joints,
        parent=parent,
        joint_names=names,
        skin_weights=skin,
        shape_basis=shape_basis,
        joint_shape_basis=joint_basis,
        shape_mean=np.zeros(SHAPE_DIM),
        shape_cov=np.eye(SHAPE_DIM),
        pose_mean=np.tile(np.asarray(IDENTITY_6D, dtype=np.float64), N),
        pose_cov=np.eye(6 * N),
        limb_weights=limb,
        keypoint_table=keypoints,
        foot_pairs=FOOT_PAIRS,
        foot_joints=list(PAWS),
        leg_faces=leg_faces,
    ).validate()
    logger.debug(
        f"Template seed {seed}: {assets.vertex_count} vertices, {len(faces)} faces, {N} joints"
    )
    return assets
