"""Tests for sequence and solution files, exports and the command-line interface."""

import json
import shutil

import numpy as np
import pytest
import torch

from dogfit.cli import main, parse_args
from dogfit.exceptions import ObservationError, SchemaError
from dogfit.field import perturb_field
from dogfit.fitting.config import FitSettings
from dogfit.fitting.pipeline import fit_sequence, materialize
from dogfit.io.layout import SequenceMeta, load_sequence, save_sequence
from dogfit.io.solution import (
    export_solution,
    load_ground_truth,
    load_solution,
    save_ground_truth,
    save_solution,
)


@pytest.fixture
def saved(sequence, tmp_path):
    assets, rig, observations, truth = sequence
    root = tmp_path / "seq"
    save_sequence(root, rig, observations, SequenceMeta(frames=truth.state.frame_count, seed=0))
    return root


@pytest.fixture
def solution(sequence):
    assets, rig, observations, _ = sequence
    result = fit_sequence(observations, rig, assets, FitSettings(skip_stages=[1, 2, 3], seed=2))
    perturb_field(result.field, sigma=0.05, seed=1)
    return materialize(result, assets)


def test_sequence_round_trip(sequence, saved):
    _, rig, observations, _ = sequence
    loaded_rig, loaded, meta = load_sequence(saved)
    assert meta.frames == 4
    assert loaded_rig.ids == rig.ids
    for view_id, frames in observations.items():
        for a, b in zip(frames, loaded[view_id]):
            np.testing.assert_array_equal(a.mask, b.mask)
            np.testing.assert_array_equal(a.depth, b.depth)
            np.testing.assert_array_equal(a.keypoints, b.keypoints)
            np.testing.assert_array_equal(a.cse_vertices, b.cse_vertices)
            np.testing.assert_allclose(a.cse_pixels, b.cse_pixels)
            assert b.rgb is None


def test_missing_frames_are_all_listed(saved):
    (saved / "view_1" / "mask" / "000001.png").unlink()
    (saved / "view_1" / "mask" / "000003.png").unlink()
    with pytest.raises(ObservationError) as info:
        load_sequence(saved)
    message = str(info.value)
    assert info.value.view_id == "1"
    assert "mask/000001.png" in message and "mask/000003.png" in message


def test_extra_frames_name_the_view(saved):
    folder = saved / "view_2" / "depth"
    shutil.copy(folder / "000000.png", folder / "000007.png")
    with pytest.raises(ObservationError) as info:
        load_sequence(saved)
    assert info.value.view_id == "2"


def test_keypoint_count_mismatch(saved):
    path = saved / "view_0" / "keypoints.json"
    document = json.loads(path.read_text())
    document["frames"] = document["frames"][:2]
    path.write_text(json.dumps(document))
    with pytest.raises(ObservationError) as info:
        load_sequence(saved)
    assert "keypoints.json" in str(info.value)


def test_malformed_detection_file(saved):
    (saved / "view_0" / "cse.json").write_text('{"frames": [{"vertices": ["a"]}]}')
    with pytest.raises(SchemaError) as info:
        load_sequence(saved)
    assert info.value.diagnostics


def test_solution_round_trip_is_exact(sequence, solution, tmp_path):
    assets = sequence[0]
    path = tmp_path / "fit" / "solution.json"
    save_solution(solution, path)
    loaded = load_solution(path, assets)
    assert loaded.frame_count == solution.frame_count
    assert torch.equal(loaded.joints, solution.joints)
    assert torch.equal(loaded.theta, solution.theta)
    assert torch.equal(loaded.scale, solution.scale)
    assert (tmp_path / "fit" / "stage_logs.json").exists()
    assert "seconds" not in path.read_text()


def test_solution_joint_count_must_match_assets(sequence, solution, tmp_path):
    assets = sequence[0]
    path = tmp_path / "solution.json"
    save_solution(solution, path)
    document = json.loads(path.read_text())
    document["joint_count"] = 3
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaError):
        load_solution(path, assets)


def test_ground_truth_round_trip(sequence, tmp_path):
    truth = sequence[3]
    path = tmp_path / "ground_truth.json"
    save_ground_truth(truth, path)
    loaded = load_ground_truth(path)
    assert torch.equal(loaded.joints, truth.joints)
    assert torch.equal(loaded.state.theta, truth.state.theta)


def test_export_writes_meshes_and_joints(sequence, solution, tmp_path):
    assets = sequence[0]
    written = export_solution(solution, assets, tmp_path / "export")
    meshes = sorted((tmp_path / "export" / "meshes").glob("*.obj"))
    assert [p.name for p in meshes] == [f"{t:06d}.obj" for t in range(4)]
    lines = meshes[0].read_text().splitlines()
    assert sum(line.startswith("v ") for line in lines) == assets.vertex_count
    assert sum(line.startswith("f ") for line in lines) == len(assets.faces)
    assert min(int(i) for line in lines if line.startswith("f ") for i in line.split()[1:]) == 1
    rows = (tmp_path / "export" / "joints.csv").read_text().splitlines()
    assert rows[0] == "frame,joint,x,y,z"
    assert len(rows) == 1 + 4 * assets.joint_count
    assert len(written) == 5


def test_parse_args_requires_a_command():
    with pytest.raises(SystemExit):
        parse_args([])
    args = parse_args(["--log-level", "debug", "export", "--solution", "s", "--assets", "a", "--out", "o"])
    assert args.command == "export" and args.log_level == "debug"


def test_cli_reports_missing_sequence(tmp_path):
    assert main(["fit", "--seq", str(tmp_path / "nothing"), "--out", str(tmp_path / "out")]) == 1


@pytest.mark.slow
def test_cli_synth_fit_eval_export(tmp_path):
    spec = {
        "frames": 3,
        "cameras": 2,
        "width": 64,
        "height": 48,
        "focal": 60.0,
        "template_resolution": 0.5,
        "cse_per_frame": 30,
    }
    config = {
        "multi_view_multipliers": [1, 1, 1],
        "sampling": {"samples": 150, "max_mask_pixels": 200, "max_depth_points": 200},
        "batch_size": 2,
        "segment_length": 2,
        "init_yaw_candidates": 2,
    }
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    (tmp_path / "fit.json").write_text(json.dumps(config))
    seq = tmp_path / "seq"
    fit = tmp_path / "fit"

    assert main(["synth", "--spec", str(tmp_path / "spec.json"), "--out", str(seq)]) == 0
    for name in ("cameras.json", "meta.json", "assets.json", "ground_truth.json", "synth_spec.json"):
        assert (seq / name).exists()

    assert main(["fit", "--seq", str(seq), "--config", str(tmp_path / "fit.json"), "--out", str(fit)]) == 0
    assert (fit / "solution.json").exists()

    assert main(["eval", "--seq", str(seq), "--solution", str(fit / "solution.json"), "--out", str(fit)]) == 0
    metrics = json.loads((fit / "metrics.json").read_text())
    assert 0.0 <= metrics["iou"] <= 1.0
    assert metrics["mean_joint_error"] is not None

    assets = str(seq / "assets.json")
    out = tmp_path / "export"
    assert main(["export", "--solution", str(fit / "solution.json"), "--assets", assets, "--out", str(out)]) == 0
    assert len(list((out / "meshes").glob("*.obj"))) == 3
