"""Edge-function triangle rasterizer with a z-buffer.

Used for silhouettes, synthetic depth and metrics only; nothing here is differentiated.
"""

from typing import Tuple

import numpy as np

from ..model.body import PosedMesh
from .camera import Z_NEAR, Camera

DEPTH_MAX = np.iinfo(np.uint16).max


def _as_numpy(mesh: PosedMesh) -> Tuple[np.ndarray, np.ndarray]:
    vertices = mesh.vertices.detach().cpu().numpy().astype(np.float64)
    faces = mesh.faces.detach().cpu().numpy().astype(np.int64)
    return vertices, faces


def rasterize(mesh: PosedMesh, cam: Camera) -> Tuple[np.ndarray, np.ndarray]:
    """Z-buffer the front-of-camera triangles of a mesh.

    A pixel is covered when its center (integer pixel coordinates) lies inside or on
    the projected triangle. Triangles with any vertex at or behind z_near are skipped.

    Returns:
        (zbuffer, face_ids): camera depth in meters (inf where empty) and the index of
        the nearest face per pixel (-1 where empty).
    """
    H, W = cam.height, cam.width
    zbuffer = np.full((H, W), np.inf)
    face_ids = np.full((H, W), -1, dtype=np.int64)
    vertices, faces = _as_numpy(mesh)
    if vertices.size == 0 or faces.size == 0:
        return zbuffer, face_ids

    R = cam.rotation.numpy()
    t = cam.translation.numpy()
    cam_points = vertices @ R.T + t
    z = cam_points[:, 2]
    safe_z = np.where(z > Z_NEAR, z, 1.0)
    u = cam.fx * cam_points[:, 0] / safe_z + cam.cx
    v = cam.fy * cam_points[:, 1] / safe_z + cam.cy

    front = (z[faces] > Z_NEAR).all(axis=1)
    for f in np.flatnonzero(front):
        i0, i1, i2 = faces[f]
        x0, y0, x1, y1, x2, y2 = u[i0], v[i0], u[i1], v[i1], u[i2], v[i2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        xmin = max(int(np.ceil(min(x0, x1, x2))), 0)
        xmax = min(int(np.floor(max(x0, x1, x2))), W - 1)
        ymin = max(int(np.ceil(min(y0, y1, y2))), 0)
        ymax = min(int(np.floor(max(y0, y1, y2))), H - 1)
        if xmin > xmax or ymin > ymax:
            continue
        px, py = np.meshgrid(
            np.arange(xmin, xmax + 1, dtype=np.float64),
            np.arange(ymin, ymax + 1, dtype=np.float64),
        )
        w0 = ((x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)) / area
        w1 = ((x0 - x2) * (py - y2) - (y0 - y2) * (px - x2)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        # Perspective-correct depth: 1/z is affine in screen space.
        depth = 1.0 / (w0 / z[i0] + w1 / z[i1] + w2 / z[i2])
        region = zbuffer[ymin : ymax + 1, xmin : xmax + 1]
        ids = face_ids[ymin : ymax + 1, xmin : xmax + 1]
        closer = inside & (depth < region)
        region[closer] = depth[closer]
        ids[closer] = f
    return zbuffer, face_ids


def rasterize_silhouette(mesh: PosedMesh, cam: Camera) -> np.ndarray:
    """Binary (H, W) coverage image of the mesh."""
    zbuffer, _ = rasterize(mesh, cam)
    return np.isfinite(zbuffer)


def render_depth(mesh: PosedMesh, cam: Camera) -> np.ndarray:
    """Nearest-surface depth in ``cam.depth_unit`` integers, 0 where uncovered."""
    zbuffer, _ = rasterize(mesh, cam)
    return depth_image(zbuffer, cam)


def depth_image(zbuffer: np.ndarray, cam: Camera) -> np.ndarray:
    covered = np.isfinite(zbuffer)
    depth = np.zeros(zbuffer.shape, dtype=np.uint16)
    quantized = np.rint(zbuffer[covered] / cam.depth_unit)
    depth[covered] = np.clip(quantized, 1, DEPTH_MAX).astype(np.uint16)
    return depth


def render_shaded(mesh: PosedMesh, cam: Camera, color=(200, 160, 110)) -> np.ndarray:
    """Flat-shaded (H, W, 3) uint8 inspection image on a gray background."""
    zbuffer, face_ids = rasterize(mesh, cam)
    vertices, faces = _as_numpy(mesh)
    image = np.full((cam.height, cam.width, 3), 40, dtype=np.uint8)
    covered = face_ids >= 0
    if not covered.any():
        return image
    tri = vertices[faces]
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normals /= np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-12)
    view = cam.center.numpy() - tri.mean(axis=1)
    view /= np.maximum(np.linalg.norm(view, axis=1, keepdims=True), 1e-12)
    shade = 0.25 + 0.75 * np.abs((normals * view).sum(axis=1))
    intensity = shade[face_ids[covered]][:, None]
    image[covered] = np.clip(intensity * np.asarray(color, dtype=np.float64), 0, 255).astype(np.uint8)
    return image
