"""Tests for the procedural template, the scripted gaits and the observation renderer."""

import math

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from dogfit.exceptions import ConfigError
from dogfit.geometry.camera import project
from dogfit.metrics import foot_skating, jitter, pene_pct
from dogfit.model.body import pose_sequence
from dogfit.synth.motion import (
    DISC_RADIUS,
    NoiseSpec,
    SynthSpec,
    leg_offset,
    load_spec,
    synth_motion,
    trajectory_radius,
)
from dogfit.synth.render import make_rig, noisy_mask, render_observations
from dogfit.types import Gait


def _motion(assets, gait: Gait, frames: int = 30):
    spec = SynthSpec(gait=gait, frames=frames, template_resolution=0.5)
    state = synth_motion(assets, spec)
    with torch.no_grad():
        mesh = pose_sequence(assets, state)
    return state, mesh


def test_idle_is_still(assets):
    _, mesh = _motion(assets, Gait.IDLE, frames=10)
    assert jitter(mesh.joints.numpy()) < 1e-9


def test_walk_keeps_planted_feet_still(assets):
    _, mesh = _motion(assets, Gait.WALK)
    feet = mesh.joints[:, assets.foot_joints].numpy()
    assert foot_skating(feet) < 0.005


@pytest.mark.parametrize("gait", list(Gait))
def test_gaits_stay_above_floor_and_inside_disc(assets, gait):
    state, mesh = _motion(assets, gait)
    assert pene_pct(mesh.vertices.numpy()) == 0.0
    assert trajectory_radius(state) <= DISC_RADIUS
    assert float(mesh.vertices[..., 2].min()) < 0.01


def test_jump_leaves_the_ground(assets):
    _, mesh = _motion(assets, Gait.JUMP, frames=24)
    lowest = mesh.vertices[..., 2].min(dim=-1).values
    assert float(lowest.max()) > 0.03


def test_stance_offset_is_linear_and_swing_returns():
    stride, duty = 0.1, 0.6
    assert leg_offset(0.0, duty, stride) == (pytest.approx(0.05), 0.0)
    assert leg_offset(0.3, duty, stride)[0] == pytest.approx(0.0)
    end_of_swing, lift = leg_offset(0.999999, duty, stride)
    assert end_of_swing == pytest.approx(0.05, abs=1e-5)
    assert leg_offset(0.8, duty, stride)[1] == pytest.approx(0.9)


def test_motion_is_seeded(assets):
    a = synth_motion(assets, SynthSpec(frames=5, seed=2))
    b = synth_motion(assets, SynthSpec(frames=5, seed=2))
    c = synth_motion(assets, SynthSpec(frames=5, seed=3))
    assert torch.equal(a.theta, b.theta) and torch.equal(a.translation, b.translation)
    assert not torch.equal(a.beta, c.beta)


def test_spec_validation(tmp_path):
    with pytest.raises(ValidationError):
        SynthSpec(frames=1)
    path = tmp_path / "spec.json"
    path.write_text('{"frames": 8, "gait": "trot", "noise": {"keypoint_sigma": 1.5}}')
    spec = load_spec(path)
    assert spec.gait == Gait.TROT and spec.noise.keypoint_sigma == 1.5
    path.write_text('{"gait": "gallop"}')
    with pytest.raises(ConfigError):
        load_spec(path)


def test_realistic_noise_preset():
    noise = NoiseSpec.realistic()
    assert (noise.keypoint_sigma, noise.mask_px, noise.depth_sigma) == (2.0, 1, 0.005)
    assert (noise.cse_dropout, noise.cse_sigma) == (0.2, 3.0)
    assert NoiseSpec() == NoiseSpec(keypoint_sigma=0, mask_px=0, depth_sigma=0, cse_dropout=0, cse_sigma=0)


def test_rig_looks_at_the_dog(small_spec):
    rig = make_rig(small_spec)
    target = torch.tensor([0.0, 0.0, 0.5 * small_spec.size_class * small_spec.scale], dtype=torch.float64)
    for cam in rig.cameras:
        uv, valid = project(cam, target.unsqueeze(0))
        assert bool(valid[0])
        assert 0 <= float(uv[0, 0]) < cam.width
        assert 0 <= float(uv[0, 1]) < cam.height


def test_noise_free_observations(sequence):
    assets, rig, observations, truth = sequence
    assert list(observations) == rig.ids
    for frames in observations.values():
        assert [obs.frame for obs in frames] == list(range(truth.state.frame_count))
        for obs in frames:
            assert obs.mask.dtype == np.uint8
            assert set(np.unique(obs.mask)) <= {0, 255}
            assert (obs.mask > 0).any()
            assert ((obs.depth > 0) == (obs.mask > 0)).all()
            assert obs.keypoints.shape == (assets.keypoint_count, 4)
            assert len(set(obs.cse_vertices.tolist())) == len(obs.cse_vertices) <= 60


def test_some_keypoints_are_occluded(sequence):
    _, _, observations, _ = sequence
    present = np.concatenate([obs.keypoints[:, 3] for frames in observations.values() for obs in frames])
    assert 0 < present.mean() < 1
    rows = np.concatenate([obs.keypoints for frames in observations.values() for obs in frames])
    np.testing.assert_array_equal(rows[:, 2], rows[:, 3])


def test_keypoint_noise_has_requested_spread(assets, small_spec):
    spec = small_spec.model_copy(update={"frames": 6})
    rig = make_rig(spec)
    state = synth_motion(assets, spec)
    observations, _ = render_observations(
        rig, assets, state, NoiseSpec(keypoint_sigma=2.0), seed=1, cse_per_frame=0
    )
    with torch.no_grad():
        keypoints = pose_sequence(assets, state).keypoints
    residuals = []
    for cam in rig.cameras:
        uv, _ = project(cam, keypoints)
        for obs in observations[cam.id]:
            present = obs.keypoints[:, 3] > 0
            error = obs.keypoints[present, :2] - uv[obs.frame].numpy()[present]
            residuals.extend(np.linalg.norm(error, axis=-1))
    assert len(residuals) > 100
    assert np.mean(residuals) == pytest.approx(2.0 * math.sqrt(math.pi / 2.0), rel=0.1)


def test_correspondence_dropout(sequence, small_spec):
    assets, rig, _, truth = sequence
    observations, _ = render_observations(
        rig, assets, truth.state, NoiseSpec(cse_dropout=0.5), seed=0, cse_per_frame=60
    )
    counts = [len(obs.cse_vertices) for frames in observations.values() for obs in frames]
    assert 0.3 * 60 < np.mean(counts) < 0.7 * 60


def test_rendering_is_reproducible(sequence):
    assets, rig, _, truth = sequence
    noise = NoiseSpec.realistic()
    a, _ = render_observations(rig, assets, truth.state, noise, seed=4, cse_per_frame=20)
    b, _ = render_observations(rig, assets, truth.state, noise, seed=4, cse_per_frame=20)
    for view_id in rig.ids:
        for x, y in zip(a[view_id], b[view_id]):
            np.testing.assert_array_equal(x.mask, y.mask)
            np.testing.assert_array_equal(x.depth, y.depth)
            np.testing.assert_array_equal(x.keypoints, y.keypoints)
            np.testing.assert_array_equal(x.cse_pixels, y.cse_pixels)


def test_noisy_mask_moves_the_boundary():
    mask = np.zeros((40, 40), dtype=bool)
    mask[10:30, 10:30] = True
    sizes = {int((noisy_mask(mask, 2, np.random.default_rng(seed)) > 0).sum()) for seed in range(16)}
    assert min(sizes) < 400 < max(sizes)
    assert (noisy_mask(mask, 0, np.random.default_rng(0)) > 0).sum() == 400
