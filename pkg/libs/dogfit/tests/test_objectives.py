"""Tests for the Chamfer distance, the individual loss terms and their weighted total."""

import math
import warnings
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from dogfit.exceptions import DogfitError
from dogfit.model.body import BodyState, PosedMesh, pose_batch, pose_mesh
from dogfit.model.sampling import SurfaceSamples, sample_surface
from dogfit.objectives.chamfer import chamfer, nearest_indices
from dogfit.objectives.losses import (
    SkipLog,
    cse_loss,
    depth_loss,
    keypoint_loss,
    leg_cross_loss,
    mask_loss,
    pose_prior_loss,
    shape_prior_loss,
    temporal_loss,
)
from dogfit.objectives.observation import FrameObservation, LossWeights, SampleConfig
from dogfit.objectives.total import TERM_NAMES, active_terms, combine, total_loss
from dogfit.optim.engine import finite_difference_gradient
from dogfit.types import DTYPE


def _points(*rows):
    return torch.tensor(rows, dtype=DTYPE)


def _obs(**kwargs) -> FrameObservation:
    kwargs.setdefault("mask", np.zeros((101, 101), dtype=np.uint8))
    return FrameObservation(view_id="axis", frame=0, **kwargs)


# Chamfer


def test_chamfer_of_identical_sets_is_zero(generator):
    a = torch.rand(50, 3, generator=generator, dtype=DTYPE)
    assert float(chamfer(a, a)) == 0.0


def test_chamfer_single_points():
    assert float(chamfer(_points([0.0, 0.0]), _points([3.0, 4.0]))) == pytest.approx(5.0)


def test_chamfer_matches_brute_force(generator):
    a = torch.rand(200, 3, generator=generator, dtype=DTYPE)
    b = torch.rand(300, 3, generator=generator, dtype=DTYPE)
    distances = torch.cdist(a, b)
    expected = 0.5 * (distances.min(dim=1).values.mean() + distances.min(dim=0).values.mean())
    torch.testing.assert_close(chamfer(a, b), expected)
    torch.testing.assert_close(chamfer(b, a), chamfer(a, b))


def test_nearest_indices_against_cdist(generator):
    a = torch.rand(40, 2, generator=generator, dtype=DTYPE)
    b = torch.rand(60, 2, generator=generator, dtype=DTYPE)
    torch.testing.assert_close(nearest_indices(a, b), torch.cdist(a, b).argmin(dim=1))


def test_chamfer_rejects_empty_sets():
    with pytest.raises(DogfitError):
        chamfer(torch.zeros(0, 2, dtype=DTYPE), _points([1.0, 1.0]))


def test_chamfer_gradient_matches_finite_differences(generator):
    a = torch.rand(20, 3, generator=generator, dtype=DTYPE)
    b = torch.rand(30, 3, generator=generator, dtype=DTYPE)
    x = a.clone().requires_grad_(True)
    chamfer(x, b).backward()
    numeric = finite_difference_gradient(lambda v: chamfer(v, b), a)
    torch.testing.assert_close(x.grad, numeric, atol=1e-6, rtol=1e-4)


# Keypoints and correspondences


def _keypoint_mesh(*keypoints) -> PosedMesh:
    points = _points(*keypoints)
    return PosedMesh(
        vertices=points.clone(),
        faces=torch.zeros(0, 3, dtype=torch.int64),
        joints=points.clone(),
        keypoints=points,
    )


def test_keypoint_error_in_pixels(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    obs = _obs(keypoints=np.array([[56.0, 58.0, 1.0, 1.0]]))
    assert float(keypoint_loss(obs, mesh, axis_camera)) == pytest.approx(10.0)


def test_zero_confidence_keypoint_is_ignored(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0], [0.2, 0.0, 1.0])
    obs = _obs(keypoints=np.array([[56.0, 58.0, 1.0, 1.0], [0.0, 0.0, 0.0, 1.0]]))
    assert float(keypoint_loss(obs, mesh, axis_camera)) == pytest.approx(10.0)


def test_absent_keypoints_skip_the_term(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    obs = _obs(keypoints=np.array([[56.0, 58.0, 1.0, 0.0]]))
    skips = SkipLog()
    assert float(keypoint_loss(obs, mesh, axis_camera, skips=skips)) == 0.0
    assert skips.records[0].term == "keypoint"


def test_keypoint_count_mismatch_raises(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    obs = _obs(keypoints=np.ones((2, 4)))
    with pytest.raises(ValueError):
        keypoint_loss(obs, mesh, axis_camera)


def test_correspondence_error_in_pixels(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    obs = _obs(
        cse_pixels=np.array([[57.0, 50.0]]),
        cse_vertices=np.array([0]),
        cse_confidence=np.array([1.0]),
    )
    assert float(cse_loss(obs, mesh, axis_camera)) == pytest.approx(7.0)


def test_empty_mask_is_skipped_and_recorded(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    skips = SkipLog()
    assert float(mask_loss(_obs(), mesh, axis_camera, skips=skips)) == 0.0
    assert float(mask_loss(_obs(), mesh, axis_camera, skips=skips)) == 0.0
    assert len(skips) == 1
    assert (skips.records[0].term, skips.records[0].reason) == ("mask", "empty mask")


def test_missing_depth_is_skipped(axis_camera):
    mesh = _keypoint_mesh([0.0, 0.0, 1.0])
    skips = SkipLog()
    assert float(depth_loss(_obs(), mesh, axis_camera, skips=skips)) == 0.0
    assert skips.records[0].reason == "no depth"


# Regularizers


def test_leg_cross_activation():
    pairs = [(0, 1)]
    delta = math.exp(-0.05)
    far = _points([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    assert float(leg_cross_loss(far, pairs, delta)) == 0.0
    same = _points([0.3, 0.2, 0.1], [0.3, 0.2, 0.1])
    assert float(leg_cross_loss(same, pairs, delta)) == pytest.approx(1.0)


def test_leg_cross_boundary_counts():
    joints = _points([0.0, 0.0, 0.0], [0.05, 0.0, 0.0])
    boundary = float(torch.exp(-torch.linalg.vector_norm(joints[1] - joints[0])))
    assert float(leg_cross_loss(joints, [(0, 1)], boundary)) == pytest.approx(math.exp(-0.05))


def test_leg_cross_rejects_bad_delta():
    with pytest.raises(ValueError):
        leg_cross_loss(_points([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]), [(0, 1)], 1.5)


def _prior_assets(cov: torch.Tensor, limb=None) -> SimpleNamespace:
    B = cov.shape[0]
    return SimpleNamespace(
        tensors={
            "shape_mean": torch.zeros(B, dtype=DTYPE),
            "limb_weights": torch.zeros(B, dtype=DTYPE) if limb is None else limb,
            "pose_mean": torch.zeros(B, dtype=DTYPE),
        },
        shape_cov_cholesky=torch.linalg.cholesky(cov),
        pose_cov_cholesky=torch.linalg.cholesky(cov),
    )


def test_shape_prior_unit_vector():
    assets = _prior_assets(torch.eye(4, dtype=DTYPE))
    beta = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=DTYPE)
    assert float(shape_prior_loss(beta, assets)) == pytest.approx(1.0)


def test_shape_prior_limb_penalty():
    assets = _prior_assets(torch.eye(2, dtype=DTYPE), limb=torch.tensor([0.0, 2.0], dtype=DTYPE))
    beta = torch.tensor([0.0, 1.5], dtype=DTYPE)
    assert float(shape_prior_loss(beta, assets, w_body=0.0, w_limb=1.0)) == pytest.approx(9.0)


def test_priors_match_dense_solve(generator):
    A = torch.randn(6, 6, generator=generator, dtype=DTYPE)
    cov = A @ A.T + torch.eye(6, dtype=DTYPE)
    assets = _prior_assets(cov)
    x = torch.randn(6, generator=generator, dtype=DTYPE)
    expected = x @ torch.linalg.solve(cov, x)
    torch.testing.assert_close(shape_prior_loss(x, assets), expected)
    torch.testing.assert_close(pose_prior_loss(x, assets), expected)


def test_temporal_is_zero_for_static_joints(rig):
    joints = torch.ones(5, 4, 3, dtype=DTYPE).mul(0.1)
    assert float(temporal_loss(joints, rig.cameras)) == 0.0


def test_temporal_adds_3d_and_mean_image_motion(axis_camera):
    joints = torch.tensor([[[0.0, 0.0, 1.0]], [[0.1, 0.0, 1.0]]], dtype=DTYPE)
    # 0.1 m in 3D plus 10 px in the only view.
    assert float(temporal_loss(joints, [axis_camera])) == pytest.approx(10.1)
    assert float(temporal_loss(joints[:1], [axis_camera])) == 0.0


# Ground truth


def test_data_terms_vanish_at_ground_truth(sequence):
    assets, rig, observations, truth = sequence
    config = SampleConfig(samples=3000)
    for view_id, frames in observations.items():
        cam = rig[view_id]
        for obs in frames[:2]:
            mesh = pose_mesh(assets, truth.state, obs.frame)
            assert float(keypoint_loss(obs, mesh, cam)) < 1e-6
            assert float(cse_loss(obs, mesh, cam)) < 1e-6
            assert float(mask_loss(obs, mesh, cam, config)) < 1.5
            assert float(depth_loss(obs, mesh, cam, config)) < 0.03


def test_depth_term_grows_when_body_moves(sequence):
    assets, rig, observations, truth = sequence
    obs = observations["0"][0]
    cam = rig["0"]
    near = depth_loss(obs, pose_mesh(assets, truth.state, 0), cam)
    shifted = truth.state.detach()
    shifted.translation[0] += 0.1 * cam.rotation[2]
    far = depth_loss(obs, pose_mesh(assets, shifted, 0), cam)
    assert float(far) > float(near) + 0.02


def test_keypoint_gradient_matches_finite_differences(sequence):
    assets, rig, observations, truth = sequence
    obs = observations["1"][0]
    cam = rig["1"]
    base = truth.state.detach()

    def loss(offset: torch.Tensor) -> torch.Tensor:
        state = BodyState(
            beta=base.beta,
            scale=base.scale,
            theta=base.theta,
            translation=base.translation + offset,
            orientation=base.orientation,
        )
        return keypoint_loss(obs, pose_mesh(assets, state, 0, validate=False), cam)

    offset = torch.tensor([0.05, 0.03, -0.02], dtype=DTYPE)
    x = offset.clone().requires_grad_(True)
    loss(x).backward()
    numeric = finite_difference_gradient(loss, offset)
    torch.testing.assert_close(x.grad, numeric, atol=1e-4, rtol=1e-4)


# Total


def test_weight_defaults():
    assert LossWeights().as_vector() == (400.0, 60.0, 1.0, 20.0, 2.5, 0.005, 0.1)


def test_stage_one_rgb_combination():
    terms = {"mask": torch.tensor(1.0), "keypoint": torch.tensor(1.0), "depth": torch.tensor(5.0)}
    breakdown = combine(1, terms, LossWeights(), use_depth=False)
    assert float(breakdown.total) == pytest.approx(460.0)
    assert set(breakdown.terms) == {"mask", "keypoint"}


def test_depth_gating():
    assert "depth" not in active_terms(2, use_depth=False)
    assert active_terms(3, use_depth=True) == TERM_NAMES
    assert active_terms(1, use_depth=True) == ("mask", "keypoint", "depth")
    with pytest.raises(ValueError):
        active_terms(4, use_depth=True)


def test_total_averages_over_views(sequence):
    assets, rig, observations, truth = sequence
    config = SampleConfig(samples=500)
    state = truth.state.detach().select([0])
    by_frame = {0: [observations[v][0] for v in rig.ids]}
    breakdown = total_loss(
        1,
        by_frame,
        state,
        LossWeights(),
        assets=assets,
        rig=rig,
        frames=[0],
        config=config,
        use_depth=False,
        generator=torch.Generator().manual_seed(11),
    )

    mesh = pose_batch(assets, state.beta, state.scale, state.theta, state.translation, state.orientation)
    drawn = sample_surface(mesh, config.samples, leg_boost=config.leg_boost, generator=torch.Generator().manual_seed(11))
    samples = SurfaceSamples(drawn.points[0], drawn.face_ids[0], drawn.barycentric[0])
    frame_mesh = mesh.frame(0)
    masks = [mask_loss(obs, frame_mesh, rig[obs.view_id], config, samples) for obs in by_frame[0]]
    keypoints = [keypoint_loss(obs, frame_mesh, rig[obs.view_id]) for obs in by_frame[0]]
    expected = 400.0 * torch.stack(masks).mean() + 60.0 * torch.stack(keypoints).mean()
    torch.testing.assert_close(breakdown.total, expected)


def test_total_is_differentiable(sequence):
    assets, rig, observations, truth = sequence
    state = truth.state.detach()
    state.translation.requires_grad_(True)
    by_frame = {t: [observations[v][t] for v in rig.ids] for t in range(state.frame_count)}
    breakdown = total_loss(
        3,
        by_frame,
        state,
        LossWeights(),
        assets=assets,
        rig=rig,
        frames=list(range(state.frame_count)),
        config=SampleConfig(samples=300),
    )
    breakdown.total.backward()
    assert torch.isfinite(state.translation.grad).all()
    assert set(breakdown.terms) == set(TERM_NAMES)


def test_duplicated_views_leave_total_unchanged(sequence):
    assets, rig, observations, truth = sequence
    state = truth.state.detach().select([0, 1])
    frames = [0, 1]
    single = {t: [observations[v][t] for v in rig.ids] for t in frames}
    doubled = {t: [obs for obs in single[t] for _ in range(2)] for t in frames}
    kwargs = dict(assets=assets, rig=rig, frames=frames, config=SampleConfig(samples=300))
    base = total_loss(3, single, state, LossWeights(), **kwargs)
    repeated = total_loss(3, doubled, state, LossWeights(), **kwargs)
    torch.testing.assert_close(repeated.total, base.total)
    for name in TERM_NAMES:
        torch.testing.assert_close(repeated.terms[name], base.terms[name])


def test_mask_loss_grows_with_silhouette_shift(sequence):
    assets, rig, observations, truth = sequence
    obs = observations["0"][0]
    cam = rig["0"]
    mesh = pose_mesh(assets, truth.state, 0)
    config = SampleConfig(samples=2000)
    samples = sample_surface(mesh, config.samples, seed=0)
    losses = []
    for shift in range(0, 11, 2):
        moved = FrameObservation(view_id=obs.view_id, frame=obs.frame, mask=np.roll(obs.mask, shift, axis=1))
        losses.append(float(mask_loss(moved, mesh, cam, config, samples)))
    assert all(b > a for a, b in zip(losses, losses[1:]))


def test_breakdown_floats_do_not_warn():
    value = torch.tensor(2.0, dtype=DTYPE, requires_grad=True)
    breakdown = combine(1, {"mask": value * 1.5, "keypoint": value}, LossWeights(), use_depth=False)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        floats = breakdown.as_floats()
    assert floats == {"mask": 3.0, "keypoint": 2.0, "total": 1320.0}


# Gradients against central differences, five random configurations per term


def _offset(seed: int, size=(3,)) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    return 0.03 + 0.04 * torch.randn(size, generator=generator, dtype=DTYPE)


def _translated(state: BodyState, offset: torch.Tensor) -> BodyState:
    return BodyState(
        beta=state.beta,
        scale=state.scale,
        theta=state.theta,
        translation=state.translation + offset,
        orientation=state.orientation,
    )


def _assert_gradient(loss, x0: torch.Tensor, rtol: float, atol: float, fine: bool = False) -> None:
    x = x0.clone().requires_grad_(True)
    loss(x).backward()
    # Nearest-neighbour terms are only piecewise smooth, so they get tiny steps.
    steps = dict(rel_step=1e-7, min_step=1e-9) if fine else {}
    numeric = finite_difference_gradient(loss, x0, **steps)
    torch.testing.assert_close(x.grad, numeric, rtol=rtol, atol=atol)


SEEDS = range(5)


@pytest.mark.parametrize("seed", SEEDS)
def test_cse_gradient(sequence, seed):
    assets, rig, observations, truth = sequence
    obs = observations["2"][1]
    base = truth.state.detach()

    def loss(offset):
        return cse_loss(obs, pose_mesh(assets, _translated(base, offset), 1, validate=False), rig["2"])

    _assert_gradient(loss, _offset(seed), rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("seed", SEEDS)
def test_mask_gradient(sequence, seed):
    assets, rig, observations, truth = sequence
    obs = observations["0"][1]
    base = truth.state.detach()
    config = SampleConfig(samples=300, max_mask_pixels=300)

    def loss(offset):
        return mask_loss(obs, pose_mesh(assets, _translated(base, offset), 1, validate=False), rig["0"], config)

    _assert_gradient(loss, _offset(seed), rtol=1e-3, atol=1e-5, fine=True)


@pytest.mark.parametrize("seed", SEEDS)
def test_depth_gradient(sequence, seed):
    assets, rig, observations, truth = sequence
    obs = observations["1"][2]
    base = truth.state.detach()
    config = SampleConfig(samples=300, max_depth_points=300)

    def loss(offset):
        return depth_loss(obs, pose_mesh(assets, _translated(base, offset), 2, validate=False), rig["1"], config)

    _assert_gradient(loss, _offset(seed), rtol=1e-3, atol=1e-6, fine=True)


@pytest.mark.parametrize("seed", SEEDS)
def test_leg_cross_gradient(seed):
    generator = torch.Generator().manual_seed(seed)
    left = torch.randn(2, 3, generator=generator, dtype=DTYPE)
    step = torch.randn(3, generator=generator, dtype=DTYPE)
    close = left[0] + 0.03 * step / step.norm()
    far = left[1] + torch.tensor([1.0, 0.0, 0.0], dtype=DTYPE)
    joints = torch.stack([left[0], close, left[1], far])
    pairs = [(0, 1), (2, 3)]

    def loss(x):
        return leg_cross_loss(x, pairs, math.exp(-0.05))

    _assert_gradient(loss, joints, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("seed", SEEDS)
def test_prior_gradients(assets, seed):
    generator = torch.Generator().manual_seed(seed)
    beta = 0.5 * torch.randn(assets.shape_dim, generator=generator, dtype=DTYPE)
    theta = assets.tensors["pose_mean"] + 0.1 * torch.randn(
        assets.tensors["pose_mean"].shape, generator=generator, dtype=DTYPE
    )
    _assert_gradient(lambda b: shape_prior_loss(b, assets), beta, rtol=1e-5, atol=1e-7)
    _assert_gradient(lambda t: pose_prior_loss(t, assets), theta, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("seed", SEEDS)
def test_temporal_gradient(rig, seed):
    generator = torch.Generator().manual_seed(seed)
    joints = 0.2 * torch.randn(4, 5, 3, generator=generator, dtype=DTYPE)
    _assert_gradient(lambda j: temporal_loss(j, rig.cameras), joints, rtol=1e-5, atol=1e-7)


@pytest.mark.parametrize("seed", SEEDS)
def test_total_loss_gradient(sequence, seed):
    assets, rig, observations, truth = sequence
    frames = [1, 2]
    base = truth.state.detach().select(frames)
    batch = {t: [observations[v][t] for v in rig.ids] for t in frames}
    config = SampleConfig(samples=200, max_mask_pixels=200, max_depth_points=200)

    def loss(offset):
        state = _translated(base, offset)
        return total_loss(
            3, batch, state, LossWeights(), assets=assets, rig=rig, frames=frames, config=config
        ).total

    _assert_gradient(loss, _offset(seed, size=(2, 3)), rtol=1e-3, atol=1e-2, fine=True)
