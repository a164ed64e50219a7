"""solution.json, ground_truth.json and mesh/joint exports."""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel, Field, ValidationError

from ..exceptions import SchemaError
from ..field import field_from_arrays, field_to_arrays
from ..fitting.pipeline import MotionSolution, StageLog, materialize
from ..model.assets import TemplateAssets
from ..model.body import BodyState, pose_sequence
from ..synth.render import GroundTruth
from ..types import DTYPE, Setting
from .arrays import ArrayPayload, decode_array, encode_array

logger = logging.getLogger(__name__)

SOLUTION_FORMAT = "dogfit-solution"
SOLUTION_VERSION = 1


class FieldArray(BaseModel):
    shape: List[int]
    values: List[float]


class SolutionDocument(BaseModel):
    """solution.json. Wall-clock times are kept out so identical fits give identical files."""

    format: str = SOLUTION_FORMAT
    version: int = SOLUTION_VERSION
    setting: Setting
    seed: int
    frame_count: int = Field(..., ge=1)
    joint_count: int = Field(..., ge=1)
    beta: List[float]
    scale: float = Field(..., gt=0)
    field: Dict[str, FieldArray]
    theta: ArrayPayload
    translation: ArrayPayload
    orientation: ArrayPayload
    joints: ArrayPayload
    stage_logs: List[StageLog] = Field(default_factory=list)


class GroundTruthDocument(BaseModel):
    """ground_truth.json written by ``synth``."""

    seed: int = 0
    beta: List[float]
    scale: float
    theta: ArrayPayload
    translation: ArrayPayload
    orientation: ArrayPayload
    joints: ArrayPayload


def _invalid(path: Path, error: ValidationError) -> SchemaError:
    diagnostics = [f"{path}: {'.'.join(map(str, err['loc']))}: {err['msg']}" for err in error.errors()]
    return SchemaError(f"invalid {path.name}", file=str(path), diagnostics=diagnostics)


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as e:
        raise SchemaError(f"file not found: {path}", file=str(path)) from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}", file=str(path)) from e


def _tensor(payload: ArrayPayload) -> torch.Tensor:
    return torch.as_tensor(decode_array(payload), dtype=DTYPE)


def solution_to_document(solution: MotionSolution) -> SolutionDocument:
    if solution.theta is None:
        raise ValueError("solution has not been materialized")
    return SolutionDocument(
        setting=solution.setting,
        seed=solution.seed,
        frame_count=solution.frame_count,
        joint_count=solution.field.joint_count,
        beta=solution.beta.tolist(),
        scale=float(solution.scale),
        field={
            name: FieldArray(shape=shape, values=values)
            for name, (shape, values) in field_to_arrays(solution.field).items()
        },
        theta=encode_array(solution.theta.numpy()),
        translation=encode_array(solution.translation.numpy()),
        orientation=encode_array(solution.orientation.numpy()),
        joints=encode_array(solution.joints.numpy()),
        stage_logs=solution.stage_logs,
    )


def save_solution(solution: MotionSolution, path: Union[str, Path]) -> None:
    """Write solution.json plus stage_logs.json (with timings) next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = solution_to_document(solution)
    path.write_text(
        document.model_dump_json(indent=2, exclude={"stage_logs": {"__all__": {"seconds"}}})
    )
    logs = [log.model_dump() for log in solution.stage_logs]
    (path.parent / "stage_logs.json").write_text(json.dumps(logs, indent=2))
    logger.info(f"Saved solution to {path}")


def load_solution(path: Union[str, Path], assets: Optional[TemplateAssets] = None) -> MotionSolution:
    """Read solution.json; with ``assets`` the per-frame arrays are recomputed from the field."""
    path = Path(path)
    try:
        document = SolutionDocument.model_validate(_read_json(path))
    except ValidationError as e:
        raise _invalid(path, e) from e
    if document.format != SOLUTION_FORMAT:
        raise SchemaError(f"{path} is not a solution file", file=str(path))
    try:
        field = field_from_arrays(
            document.joint_count,
            {name: (a.shape, a.values) for name, a in document.field.items()},
        )
    except ValueError as e:
        raise SchemaError(f"{path}: field: {e}", file=str(path)) from e
    solution = MotionSolution(
        beta=torch.tensor(document.beta, dtype=DTYPE),
        scale=torch.tensor(document.scale, dtype=DTYPE),
        field=field,
        frame_count=document.frame_count,
        setting=document.setting,
        seed=document.seed,
        stage_logs=document.stage_logs,
        theta=_tensor(document.theta),
        translation=_tensor(document.translation),
        orientation=_tensor(document.orientation),
        joints=_tensor(document.joints),
    )
    if assets is not None:
        if assets.joint_count != document.joint_count:
            raise SchemaError(
                f"{path}: joint_count {document.joint_count} does not match the assets ({assets.joint_count})",
                file=str(path),
            )
        materialize(solution, assets)
    return solution


def save_ground_truth(truth: GroundTruth, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = truth.state
    document = GroundTruthDocument(
        seed=truth.seed,
        beta=state.beta.tolist(),
        scale=float(state.scale),
        theta=encode_array(state.theta.numpy()),
        translation=encode_array(state.translation.numpy()),
        orientation=encode_array(state.orientation.numpy()),
        joints=encode_array(truth.joints.numpy()),
    )
    path.write_text(document.model_dump_json(indent=2))


def load_ground_truth(path: Union[str, Path]) -> GroundTruth:
    path = Path(path)
    try:
        document = GroundTruthDocument.model_validate(_read_json(path))
    except ValidationError as e:
        raise _invalid(path, e) from e
    state = BodyState(
        beta=torch.tensor(document.beta, dtype=DTYPE),
        scale=torch.tensor(document.scale, dtype=DTYPE),
        theta=_tensor(document.theta),
        translation=_tensor(document.translation),
        orientation=_tensor(document.orientation),
    )
    return GroundTruth(state=state, joints=_tensor(document.joints), seed=document.seed)


def write_obj(path: Union[str, Path], vertices, faces) -> None:
    """Wavefront OBJ with 1-based face indices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64) + 1
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in vertices]
    lines += [f"f {a} {b} {c}" for a, b, c in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def write_joints_csv(path: Union[str, Path], joints) -> None:
    """Rows of (frame, joint, x, y, z)."""
    joints = np.asarray(joints, dtype=np.float64)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "joint", "x", "y", "z"])
        for t, frame in enumerate(joints):
            for j, (x, y, z) in enumerate(frame):
                writer.writerow([t, j, repr(float(x)), repr(float(y)), repr(float(z))])


def export_solution(
    solution: MotionSolution,
    assets: TemplateAssets,
    out: Union[str, Path],
    meshes: bool = True,
    joints: bool = True,
) -> List[Path]:
    """Per-frame OBJ meshes under ``out/meshes`` and ``out/joints.csv``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    with torch.no_grad():
        mesh = pose_sequence(assets, solution.state(), validate=False)
    if meshes:
        folder = out / "meshes"
        folder.mkdir(exist_ok=True)
        faces = mesh.faces.numpy()
        for t in range(solution.frame_count):
            path = folder / f"{t:06d}.obj"
            write_obj(path, mesh.vertices[t].numpy(), faces)
            written.append(path)
    if joints:
        path = out / "joints.csv"
        write_joints_csv(path, mesh.joints.numpy())
        written.append(path)
    logger.info(f"Exported {len(written)} file(s) to {out}")
    return written
