"""Tests for projection, back-projection, camera files and the rasterizer."""

import numpy as np
import pytest
import torch
from scipy.spatial import KDTree

from dogfit.exceptions import SchemaError
from dogfit.geometry.camera import (
    Camera,
    CameraRig,
    backproject,
    backproject_pixels,
    depth_to_points,
    load_cameras,
    project,
    save_cameras,
)
from dogfit.geometry.raster import rasterize_silhouette, render_depth
from dogfit.metrics import iou
from dogfit.model.body import BodyState, PosedMesh, pose_mesh
from dogfit.model.sampling import sample_surface
from dogfit.types import DTYPE


def _quad(z: float, half: float = 0.5, shift=(0.0, 0.0)) -> PosedMesh:
    x0, y0 = shift
    vertices = torch.tensor(
        [
            [x0 - half, y0 - half, z],
            [x0 + half, y0 - half, z],
            [x0 + half, y0 + half, z],
            [x0 - half, y0 + half, z],
        ],
        dtype=DTYPE,
    )
    faces = torch.tensor([[0, 1, 2], [0, 2, 3]])
    return PosedMesh(vertices=vertices, faces=faces, joints=torch.zeros(1, 3, dtype=DTYPE))


def _concat(a: PosedMesh, b: PosedMesh) -> PosedMesh:
    return PosedMesh(
        vertices=torch.cat([a.vertices, b.vertices]),
        faces=torch.cat([a.faces, b.faces + a.vertices.shape[0]]),
        joints=a.joints,
    )


def test_project_principal_ray(axis_camera):
    uv, valid = project(axis_camera, [[0.0, 0.0, 1.0], [0.5, 0.0, 1.0]])
    assert valid.all()
    torch.testing.assert_close(uv, torch.tensor([[50.0, 50.0], [100.0, 50.0]], dtype=DTYPE))


def test_points_behind_camera_are_flagged(axis_camera):
    _, valid = project(axis_camera, [[0.0, 0.0, -1.0]])
    assert not valid.any()


def test_project_backproject_round_trip(rig, generator):
    cam = rig["0"]
    points = torch.rand(50, 3, generator=generator, dtype=DTYPE) * 0.6 - 0.3
    uv, valid = project(cam, points)
    assert valid.all()
    depth = cam.to_camera(points)[:, 2]
    torch.testing.assert_close(backproject_pixels(cam, uv, depth), points, atol=1e-9, rtol=0)


def test_projection_invariant_to_joint_rigid_motion(rig, generator):
    cam = rig["1"]
    points = torch.rand(20, 3, generator=generator, dtype=DTYPE) * 0.4
    angle = 0.3
    R = torch.tensor(
        [[np.cos(angle), -np.sin(angle), 0.0], [np.sin(angle), np.cos(angle), 0.0], [0.0, 0.0, 1.0]],
        dtype=DTYPE,
    )
    shift = torch.tensor([0.2, -0.1, 0.05], dtype=DTYPE)
    moved = points @ R.T + shift
    cam_R = cam.rotation @ R.T
    cam_t = cam.translation - cam_R @ shift
    moved_cam = Camera(**{**cam.model_dump(), "R": cam_R.reshape(-1).tolist(), "t": cam_t.tolist()})
    torch.testing.assert_close(project(moved_cam, moved)[0], project(cam, points)[0], atol=1e-7, rtol=0)


def test_backproject_single_center_pixel(axis_camera):
    depth = np.zeros((101, 101), dtype=np.uint16)
    depth[50, 50] = 1500
    mask = depth > 0
    points = backproject(axis_camera, depth, mask)
    torch.testing.assert_close(points, torch.tensor([[0.0, 0.0, 1.5]], dtype=DTYPE))
    assert backproject(axis_camera, depth, np.zeros_like(mask)).shape == (0, 3)


def test_depth_to_points_keeps_every_valid_pixel(axis_camera):
    depth = np.zeros((101, 101), dtype=np.uint16)
    depth[50, 50] = 1000
    depth[50, 60] = 2000
    points = depth_to_points(axis_camera, depth)
    expected = torch.tensor([[0.0, 0.0, 1.0], [0.2, 0.0, 2.0]], dtype=DTYPE)
    torch.testing.assert_close(points, expected)


def test_cameras_file_round_trip(rig, tmp_path):
    path = tmp_path / "cameras.json"
    save_cameras(rig, path)
    loaded = load_cameras(path)
    assert loaded.ids == rig.ids
    for a, b in zip(loaded.cameras, rig.cameras):
        assert a.R == b.R and a.t == b.t and a.fx == b.fx


def test_cameras_file_errors_name_the_field(tmp_path):
    path = tmp_path / "cameras.json"
    path.write_text('{"cameras": [{"id": "0", "fx": -1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4, "R": [1,0,0,0,1,0,0,0,1], "t": [0,0,0]}]}')
    with pytest.raises(SchemaError) as info:
        load_cameras(path)
    assert any("fx" in line for line in info.value.diagnostics)


def test_ring_layout(rig):
    assert len(rig) == 3
    for cam in rig.cameras:
        center = cam.center.numpy()
        assert np.hypot(center[0], center[1]) == pytest.approx(2.5)
        assert center[2] == pytest.approx(0.45)


def test_depth_of_fronto_parallel_plane(axis_camera):
    depth = render_depth(_quad(2.0), axis_camera)
    covered = depth > 0
    assert covered.any()
    assert (depth[covered] == 2000).all()


def test_zbuffer_keeps_nearer_surface(axis_camera):
    mesh = _concat(_quad(2.0), _quad(1.5, half=0.2))
    depth = render_depth(mesh, axis_camera)
    assert depth[50, 50] == 1500
    assert depth[50, 35] == 2000


def test_square_area_matches_projection(axis_camera):
    # Half-width 0.25 m at 1 m projects to a 50 x 50 px square.
    silhouette = rasterize_silhouette(_quad(1.0, half=0.25), axis_camera)
    expected = 50 * 50
    perimeter = 4 * 51
    assert abs(int(silhouette.sum()) - expected) <= perimeter


def test_mesh_behind_camera_renders_nothing(axis_camera):
    assert not rasterize_silhouette(_quad(-1.0), axis_camera).any()
    assert (render_depth(_quad(-1.0), axis_camera) == 0).all()


def test_silhouette_equals_depth_coverage(assets, rig):
    mesh = pose_mesh(assets, BodyState.rest(assets), 0)
    cam = rig["0"]
    np.testing.assert_array_equal(rasterize_silhouette(mesh, cam), render_depth(mesh, cam) > 0)


def test_out_of_frustum_silhouette_has_zero_iou(axis_camera):
    inside = rasterize_silhouette(_quad(2.0, half=0.3), axis_camera)
    outside = rasterize_silhouette(_quad(2.0, half=0.3, shift=(50.0, 0.0)), axis_camera)
    assert iou(inside, outside) == 0.0


def test_backprojected_render_lies_on_surface(assets, rig):
    mesh = pose_mesh(assets, BodyState.rest(assets), 0)
    cam = rig["2"]
    depth = render_depth(mesh, cam)
    points = backproject(cam, depth, depth > 0).numpy()
    dense = sample_surface(mesh, 200_000, seed=0).points.numpy()
    distance, _ = KDTree(dense).query(points)
    assert np.median(distance) < 0.01


def test_rig_rejects_duplicate_ids(axis_camera):
    with pytest.raises(ValueError):
        CameraRig(id="dup", cameras=[axis_camera, axis_camera])
