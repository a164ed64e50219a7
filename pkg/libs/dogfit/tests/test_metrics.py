"""Tests for the evaluation metrics."""

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from dogfit.metrics import (
    MetricsReport,
    evaluate_sequence,
    foot_skating,
    fscore,
    iou,
    iou_w5,
    jitter,
    mean_joint_error,
    pene_pct,
)
from dogfit.model.body import pose_sequence


def test_iou_identical_and_disjoint():
    a = np.zeros((10, 10), dtype=bool)
    a[2:5, 2:5] = True
    b = np.zeros_like(a)
    b[6:9, 6:9] = True
    assert iou(a, a) == 1.0
    assert iou(a, b) == 0.0


def test_iou_partial_overlap():
    a = np.zeros((4, 4), dtype=bool)
    a[:, :2] = True
    b = np.zeros_like(a)
    b[:, 1:3] = True
    assert iou(a, b) == pytest.approx(1 / 3)


def test_iou_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        iou(np.zeros((2, 2)), np.zeros((3, 3)))


def test_iou_w5_takes_worst_frames():
    assert iou_w5([1.0] * 19 + [0.2]) == pytest.approx(0.2)
    assert iou_w5([0.9, 0.5, 0.7]) == pytest.approx(0.5)
    assert iou_w5([1.0] * 38 + [0.4, 0.6]) == pytest.approx(0.5)


def test_fscore_limits():
    points = np.random.default_rng(0).random((100, 3))
    assert fscore(points, points) == 1.0
    assert fscore(points, points + 10.0) == 0.0


def test_fscore_half_precision():
    pred = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    gt = np.array([[0.0, 0.0, 0.0]])
    assert fscore(pred, gt) == pytest.approx(2 / 3)


def test_fscore_matches_brute_force():
    rng = np.random.default_rng(3)
    pred = rng.random((300, 3)) * 0.5
    gt = rng.random((200, 3)) * 0.5
    d = cdist(pred, gt)
    precision = (d.min(axis=1) <= 0.05).mean()
    recall = (d.min(axis=0) <= 0.05).mean()
    expected = 2 * precision * recall / (precision + recall)
    assert fscore(pred, gt) == pytest.approx(expected)


def test_pene_fractions():
    above = np.array([[0.0, 0.0, 0.1], [0.0, 0.0, 0.0]])
    assert pene_pct(above) == 0.0
    assert pene_pct(above - [0.0, 0.0, 1.0]) == 1.0
    assert pene_pct(np.array([[0.0, 0.0, 0.1], [0.0, 0.0, -0.1]])) == 0.5
    assert pene_pct(above, floor_z=0.05) == 0.5


def test_jitter():
    t = np.arange(10, dtype=np.float64)
    still = np.zeros((10, 2, 3))
    assert jitter(still) == 0.0
    linear = np.zeros((10, 1, 3))
    linear[:, 0, 0] = 0.3 * t
    assert jitter(linear) == pytest.approx(0.0, abs=1e-12)
    quadratic = np.zeros((10, 1, 3))
    quadratic[:, 0, 1] = 0.01 * t**2
    assert jitter(quadratic) == pytest.approx(0.02)
    assert jitter(still[:2]) == 0.0


def test_foot_skating():
    frames = 6
    feet = np.zeros((frames, 1, 3))
    feet[:, 0, 2] = 0.2
    feet[:, 0, 0] = 0.1 * np.arange(frames)
    assert foot_skating(feet) == 0.0

    planted = np.zeros((frames, 1, 3))
    planted[:, 0, 2] = 0.01
    assert foot_skating(planted) == 0.0

    sliding = planted.copy()
    sliding[:, 0, 0] = 0.02 * np.arange(frames)
    assert foot_skating(sliding) == pytest.approx(0.02)


def test_mean_joint_error():
    a = np.zeros((2, 3, 3))
    b = a.copy()
    b[..., 2] = 0.5
    assert mean_joint_error(a, b) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        mean_joint_error(a, b[:1])


def test_ground_truth_scores_perfectly(sequence):
    assets, rig, observations, truth = sequence
    mesh = pose_sequence(assets, truth.state)
    report = evaluate_sequence(
        mesh, observations, rig, assets, fscore_samples=3000, gt_joints=truth.joints.numpy()
    )
    assert isinstance(report, MetricsReport)
    assert report.iou == pytest.approx(1.0)
    assert report.iou_w5 == pytest.approx(1.0)
    assert report.fscore > 0.85
    assert report.pene_pct == 0.0
    assert report.mean_joint_error == pytest.approx(0.0, abs=1e-12)
    assert report.foot_skating < 0.005
    assert len(report.per_frame["iou"]) == truth.state.frame_count
    assert len(report.row()) == 6
