"""Tests for the time embedding and the motion field."""

import math

import pytest
import torch

from dogfit.field import (
    EMBED_DIM,
    embed,
    field_from_arrays,
    field_inputs,
    field_state,
    field_to_arrays,
    init_field,
    perturb_field,
)
from dogfit.model.rotations import IDENTITY_6D
from dogfit.types import DTYPE

JOINTS = 35


def test_embedding_at_first_frame():
    e = embed(0, 10)
    assert e.t_hat == 0.0
    expected = torch.tensor([0.0] + [0.0] * 4 + [1.0] * 4, dtype=DTYPE)
    torch.testing.assert_close(e.features, expected)


def test_embedding_at_last_frame():
    e = embed(9, 10)
    assert e.t_hat == 1.0
    torch.testing.assert_close(e.features[1:5], torch.zeros(4, dtype=DTYPE), atol=1e-12, rtol=0)
    torch.testing.assert_close(e.features[5:], torch.ones(4, dtype=DTYPE))


def test_embedding_at_midpoint():
    e = embed(2, 5)
    assert e.t_hat == 0.5
    assert float(e.features[5]) == pytest.approx(math.cos(math.pi))
    assert float(e.features[6]) == pytest.approx(1.0)


def test_single_frame_sequence_uses_zero_time():
    assert embed(0, 1).t_hat == 0.0


@pytest.mark.parametrize("t,T", [(-1, 5), (5, 5), (0, 0)])
def test_embedding_out_of_range(t, T):
    with pytest.raises(ValueError):
        embed(t, T)


def test_fresh_field_outputs_its_bias():
    field = init_field(0, JOINTS)
    theta, gamma, phi = field(field_inputs(7))
    torch.testing.assert_close(theta, torch.tensor(IDENTITY_6D, dtype=DTYPE).repeat(7, JOINTS))
    torch.testing.assert_close(gamma, torch.zeros(7, 3, dtype=DTYPE))
    torch.testing.assert_close(phi, torch.tensor(IDENTITY_6D, dtype=DTYPE).expand(7, 6))


def test_coarse_alignment_initializes_bias():
    phi_bar = (0.0, 1.0, 0.0, -1.0, 0.0, 0.0)
    field = init_field(0, JOINTS, coarse=((1.0, 0.0, 0.3), phi_bar))
    _, gamma, phi = field(field_inputs(4))
    torch.testing.assert_close(gamma, torch.tensor([1.0, 0.0, 0.3], dtype=DTYPE).expand(4, 3))
    torch.testing.assert_close(phi, torch.tensor(phi_bar, dtype=DTYPE).expand(4, 6))


def test_seeds_change_hidden_weights_only():
    a = init_field(1, JOINTS)
    b = init_field(2, JOINTS)
    assert not torch.equal(a.net_theta[0].weight, b.net_theta[0].weight)
    torch.testing.assert_close(a.bias_theta, b.bias_theta)


def test_same_seed_is_deterministic():
    a = field_state(init_field(4, JOINTS))
    b = field_state(init_field(4, JOINTS))
    assert a.keys() == b.keys()
    for name in a:
        assert torch.equal(a[name], b[name])


def test_perturbation_makes_output_time_varying():
    field = init_field(0, JOINTS)
    perturb_field(field, sigma=0.1, seed=3)
    with torch.no_grad():
        theta, gamma, _ = field(field_inputs(6))
    assert theta.std(dim=0).max() > 0
    assert gamma.std(dim=0).max() > 0


def test_field_inputs_shape():
    assert field_inputs(12).shape == (12, EMBED_DIM)
    with pytest.raises(ValueError):
        field_inputs(0)


def test_weights_survive_array_conversion():
    field = init_field(7, JOINTS)
    perturb_field(field, sigma=0.05, seed=1)
    restored = field_from_arrays(JOINTS, field_to_arrays(field))
    inputs = field_inputs(5)
    with torch.no_grad():
        for a, b in zip(field(inputs), restored(inputs)):
            assert torch.equal(a, b)


def test_array_conversion_rejects_wrong_joint_count():
    with pytest.raises(ValueError):
        field_from_arrays(JOINTS - 1, field_to_arrays(init_field(0, JOINTS)))
