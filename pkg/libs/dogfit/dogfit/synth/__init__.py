"""Synthetic quadruped sequences with known ground truth."""

from .motion import NoiseSpec, SynthSpec, synth_motion
from .render import GroundTruth, render_observations, synth_sequence
from .template import make_template

__all__ = [
    "GroundTruth",
    "NoiseSpec",
    "SynthSpec",
    "make_template",
    "render_observations",
    "synth_motion",
    "synth_sequence",
]
