"""Pinhole cameras, projection and rasterization."""

from .camera import Camera, CameraRig, backproject, load_cameras, project, save_cameras
from .raster import rasterize, rasterize_silhouette, render_depth

__all__ = [
    "Camera",
    "CameraRig",
    "backproject",
    "load_cameras",
    "project",
    "rasterize",
    "rasterize_silhouette",
    "render_depth",
    "save_cameras",
]
