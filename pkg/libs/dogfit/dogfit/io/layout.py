"""Sequence directory layout: cameras, meta, per-view images and detections."""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import cv2
import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, ValidationError

from ..exceptions import ObservationError, SchemaError
from ..geometry.camera import CameraRig, load_cameras, save_cameras
from ..objectives.observation import FrameObservation
from ..types import Setting

logger = logging.getLogger(__name__)

FRAME_PATTERN = "{:06d}.png"


class SequenceMeta(BaseModel):
    """meta.json"""

    frames: int = Field(..., ge=1, description="Frame count T")
    fps: float = Field(15.0, gt=0)
    setting: Setting = Setting.MV_RGBD
    seed: Optional[int] = Field(None, description="Seed of the synthetic generator, if any")


class KeypointsDocument(BaseModel):
    """keypoints.json: per frame, K rows of (u, v, confidence, present)."""

    frames: List[List[List[float]]]


class CorrespondenceFrame(BaseModel):
    pixels: List[List[float]] = Field(default_factory=list)
    vertices: List[int] = Field(default_factory=list)
    confidence: List[float] = Field(default_factory=list)


class CorrespondenceDocument(BaseModel):
    """cse.json: per frame, pixel -> template vertex correspondences."""

    frames: List[CorrespondenceFrame]


def _diagnostics(path: Path, error: ValidationError) -> List[str]:
    return [f"{path}: {'.'.join(map(str, err['loc']))}: {err['msg']}" for err in error.errors()]


def _read_document(path: Path, model):
    try:
        return model.model_validate(json.loads(path.read_text()))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}", file=str(path)) from e
    except ValidationError as e:
        raise SchemaError(f"invalid {path.name}", file=str(path), diagnostics=_diagnostics(path, e)) from e


class SequenceLayout:
    """Paths of one sequence directory.

    ::

        root/
          cameras.json
          meta.json
          view_<id>/mask/000000.png    8-bit, 0/255
          view_<id>/depth/000000.png   16-bit, optional
          view_<id>/rgb/000000.png     optional
          view_<id>/keypoints.json
          view_<id>/cse.json
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @property
    def cameras(self) -> Path:
        return self.root / "cameras.json"

    @property
    def meta(self) -> Path:
        return self.root / "meta.json"

    def view(self, view_id: str) -> Path:
        return self.root / f"view_{view_id}"

    def image(self, view_id: str, modality: str, frame: int) -> Path:
        return self.view(view_id) / modality / FRAME_PATTERN.format(frame)

    def keypoints(self, view_id: str) -> Path:
        return self.view(view_id) / "keypoints.json"

    def cse(self, view_id: str) -> Path:
        return self.view(view_id) / "cse.json"


def save_sequence(
    root: Union[str, Path],
    rig: CameraRig,
    observations: Dict[str, List[FrameObservation]],
    meta: SequenceMeta,
) -> SequenceLayout:
    """Write observations in the sequence layout; images go through OpenCV (RGB via PIL)."""
    layout = SequenceLayout(root)
    layout.root.mkdir(parents=True, exist_ok=True)
    save_cameras(rig, layout.cameras)
    layout.meta.write_text(meta.model_dump_json(indent=2))
    for view_id, frames in observations.items():
        frames = sorted(frames, key=lambda o: o.frame)
        for modality in ("mask", "depth", "rgb"):
            (layout.view(view_id) / modality).mkdir(parents=True, exist_ok=True)
        for obs in frames:
            cv2.imwrite(str(layout.image(view_id, "mask", obs.frame)), (obs.mask > 0).astype(np.uint8) * 255)
            if obs.depth is not None:
                cv2.imwrite(str(layout.image(view_id, "depth", obs.frame)), obs.depth.astype(np.uint16))
            if obs.rgb is not None:
                Image.fromarray(obs.rgb).save(layout.image(view_id, "rgb", obs.frame))
        keypoints = KeypointsDocument(frames=[obs.keypoints.tolist() for obs in frames])
        layout.keypoints(view_id).write_text(keypoints.model_dump_json())
        cse = CorrespondenceDocument(
            frames=[
                CorrespondenceFrame(
                    pixels=obs.cse_pixels.tolist(),
                    vertices=obs.cse_vertices.astype(int).tolist(),
                    confidence=obs.cse_confidence.tolist(),
                )
                for obs in frames
            ]
        )
        layout.cse(view_id).write_text(cse.model_dump_json())
    logger.info(f"Wrote {meta.frames} frames of {len(observations)} view(s) to {layout.root}")
    return layout


def _check_frames(layout: SequenceLayout, view_id: str, T: int) -> Dict[str, bool]:
    """Which optional modalities a view has, raising on any missing frame."""
    missing: List[str] = []
    present: Dict[str, bool] = {}
    for modality, required in (("mask", True), ("depth", False), ("rgb", False)):
        folder = layout.view(view_id) / modality
        found = [layout.image(view_id, modality, t).exists() for t in range(T)]
        extra = sorted(p.name for p in folder.glob("*.png")) if folder.exists() else []
        if len(extra) > T:
            raise ObservationError(
                f"view {view_id}: {modality} has {len(extra)} frames but meta.json declares {T}",
                view_id=view_id,
                path=str(folder),
            )
        present[modality] = any(found)
        if required or any(found):
            missing += [f"{modality}/{FRAME_PATTERN.format(t)}" for t, ok in enumerate(found) if not ok]
    if missing:
        raise ObservationError(
            f"view {view_id} is missing {len(missing)} frame file(s): {', '.join(missing)}",
            view_id=view_id,
            path=str(layout.view(view_id)),
        )
    return present


def load_sequence(
    root: Union[str, Path],
) -> tuple[CameraRig, Dict[str, List[FrameObservation]], SequenceMeta]:
    """Read and validate a sequence directory.

    Raises:
        SchemaError: When cameras.json, meta.json or a detection file is malformed
        ObservationError: When frames are missing or frame counts disagree across views
    """
    layout = SequenceLayout(root)
    if not layout.meta.exists():
        raise ObservationError(f"missing meta.json in {layout.root}", path=str(layout.meta))
    meta = _read_document(layout.meta, SequenceMeta)
    rig = load_cameras(layout.cameras)
    T = meta.frames
    views = [v for v in rig.ids if layout.view(v).exists()]
    if not views:
        raise ObservationError(f"no view_<id> folders in {layout.root} match cameras.json")
    unknown = sorted(
        p.name[len("view_") :] for p in layout.root.glob("view_*") if p.name[len("view_") :] not in rig.ids
    )
    if unknown:
        raise ObservationError(f"view folders {unknown} have no camera in cameras.json", view_id=unknown[0])

    observations: Dict[str, List[FrameObservation]] = {}
    for view_id in views:
        present = _check_frames(layout, view_id, T)
        keypoints = _read_document(layout.keypoints(view_id), KeypointsDocument)
        cse = _read_document(layout.cse(view_id), CorrespondenceDocument)
        for name, count in (("keypoints.json", len(keypoints.frames)), ("cse.json", len(cse.frames))):
            if count != T:
                raise ObservationError(
                    f"view {view_id}: {name} has {count} frames but meta.json declares {T}",
                    view_id=view_id,
                    path=str(layout.view(view_id) / name),
                )
        cam = rig[view_id]
        frames = []
        for t in range(T):
            mask = cv2.imread(str(layout.image(view_id, "mask", t)), cv2.IMREAD_UNCHANGED)
            if mask is None:
                raise ObservationError(
                    f"unreadable mask for view {view_id} frame {t}", view_id=view_id, frame=t
                )
            depth = None
            if present["depth"]:
                depth = cv2.imread(str(layout.image(view_id, "depth", t)), cv2.IMREAD_UNCHANGED)
            rgb = None
            if present["rgb"]:
                rgb = np.asarray(Image.open(layout.image(view_id, "rgb", t)).convert("RGB"))
            kp = np.asarray(keypoints.frames[t], dtype=np.float64).reshape(-1, 4)
            corr = cse.frames[t]
            obs = FrameObservation(
                view_id=view_id,
                frame=t,
                mask=(mask > 0).astype(np.uint8) * 255,
                depth=depth,
                keypoints=kp,
                cse_pixels=np.asarray(corr.pixels, dtype=np.float64).reshape(-1, 2),
                cse_vertices=np.asarray(corr.vertices, dtype=np.int64),
                cse_confidence=np.asarray(corr.confidence, dtype=np.float64),
                rgb=rgb,
            )
            frames.append(obs.validate(cam))
        observations[view_id] = frames
    logger.info(f"Loaded {T} frames from {len(observations)} view(s) in {layout.root}")
    return rig, observations, meta
