"""Shared fixtures: a coarse procedural template, a small camera ring and a short synthetic walk."""

import pytest
import torch

from dogfit.geometry.camera import Camera, CameraRig
from dogfit.synth.motion import SynthSpec
from dogfit.synth.render import synth_sequence
from dogfit.synth.template import make_template

SMALL_IMAGE = dict(width=96, height=72, focal=90.0)


@pytest.fixture(scope="session")
def assets():
    return make_template(seed=0, size_class=0.4, resolution=0.5)


@pytest.fixture(scope="session")
def rig():
    return CameraRig.ring(count=3, width=96, height_px=72, focal=90.0, seed=0)


@pytest.fixture
def axis_camera():
    """Camera at the origin looking down +z with fx = fy = 100 and principal point (50, 50)."""
    return Camera(
        id="axis",
        fx=100.0,
        fy=100.0,
        cx=50.0,
        cy=50.0,
        width=101,
        height=101,
        R=[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        t=[0.0, 0.0, 0.0],
    )


@pytest.fixture(scope="session")
def small_spec():
    return SynthSpec(
        seed=0,
        cameras=3,
        frames=4,
        template_resolution=0.5,
        cse_per_frame=60,
        **SMALL_IMAGE,
    )


@pytest.fixture(scope="session")
def sequence(small_spec):
    """(assets, rig, observations, truth) of a noise-free 4-frame walk seen by 3 cameras."""
    return synth_sequence(small_spec)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(0)
