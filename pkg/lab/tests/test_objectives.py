import numpy as np
import pytest

from config.experiment_config import CfgRangeMode, WeightMode
from core.value import Value, backward
from models.oracle_fields import CallableField
from models.rollout import backward_simulate
from objectives.dmd2 import dmd2_fake_loss, dmd2_generator_objective
from objectives.fsf_dmd import (
    ADAPTIVE_WEIGHT_FLOOR,
    adaptive_weight,
    dmd_weight,
    fsf_delta,
    fsf_dmd_loss,
    perturb,
    sample_dmd_time,
    sample_open_unit,
    scratch_delta,
    timestep_shift,
)
from objectives.guidance import AnalyticTeacher, Guidance, NetworkTeacher, cfg_velocity, guided_velocity
from oracle.gaussian_mixture import gm_marginal_velocity
from utils.exceptions import DomainError


def test_timestep_shift_shape():
    u = np.linspace(0.0, 0.999, 200)
    np.testing.assert_allclose(timestep_shift(u, 1.0), u)
    shifted = timestep_shift(u, 10.0)
    assert shifted[0] == 0.0
    assert np.all(np.diff(shifted) > 0) and np.all(shifted < 1.0)
    assert np.all(shifted >= u)
    assert timestep_shift(0.5, 3.0) == pytest.approx(0.75)
    with pytest.raises(DomainError):
        timestep_shift(u, 0.5)


def test_dmd_times_avoid_the_endpoints(rng):
    u = sample_open_unit(rng, 10_000)
    assert np.all((u > 0.0) & (u < 1.0))
    t = sample_dmd_time(rng, 10_000, 10.0)
    assert np.all((t > 0.0) & (t < 1.0))
    assert np.median(t) > 0.8


def test_perturb_interpolates_with_fresh_noise(rng):
    x_hat = rng.standard_normal((6, 2))
    sample = perturb(x_hat, rng, gamma=1.0)
    expected = (1.0 - sample.t[:, None]) * x_hat + sample.t[:, None] * sample.noise
    np.testing.assert_allclose(sample.x_hat_t, expected)


def test_cfg_blend_and_range(ring_spec, rng):
    teacher = AnalyticTeacher(ring_spec)
    x = rng.standard_normal((4, 2))
    c = np.array([0, 1, 2, 3])
    t = np.array([0.1, 0.5, 0.95, 0.3])
    conditional = teacher.velocity(x, t, c)
    unconditional = teacher.velocity(x, t, np.full(4, teacher.null_label))

    np.testing.assert_array_equal(cfg_velocity(teacher, x, t, c, 1.0), conditional)
    blended = cfg_velocity(teacher, x, t, c, 6.0, (0.0, 0.9))
    expected = 6.0 * conditional + (1.0 - 6.0) * unconditional
    np.testing.assert_allclose(blended[[0, 1, 3]], expected[[0, 1, 3]])
    np.testing.assert_allclose(blended[2], conditional[2])
    always = cfg_velocity(teacher, x, t, c, 6.0, (0.0, 0.9), CfgRangeMode.ALWAYS)
    np.testing.assert_allclose(always, expected)


def test_analytic_teacher_null_class_is_the_marginal(ring_spec, rng):
    x = rng.standard_normal((5, 2))
    np.testing.assert_allclose(AnalyticTeacher(ring_spec).velocity(x, 0.4, None), gm_marginal_velocity(ring_spec, x, 0.4))


@pytest.mark.parametrize("t", [0.0, 1e-8, 1.2, -0.1])
def test_analytic_teacher_rejects_out_of_range_times(ring_spec, rng, t):
    with pytest.raises(DomainError):
        AnalyticTeacher(ring_spec).velocity(rng.standard_normal((3, 2)), t, None)


def test_network_teacher_uses_the_diagonal(small_net, rng):
    x = rng.standard_normal((3, 2))
    teacher = NetworkTeacher(small_net)
    np.testing.assert_array_equal(teacher.velocity(x, 0.3, 2), small_net.evaluate(x, 0.3, 0.3, 2))
    assert teacher.null_label == small_net.num_classes


def test_fsf_loss_value_and_gradient_form(small_net, rng):
    z = rng.standard_normal((5, 2))
    c = rng.integers(8, size=5)
    delta = rng.standard_normal((5, 2))
    w = rng.random(5)
    base = small_net.params.arrays()

    loss = fsf_dmd_loss(backward_simulate(small_net, z, c, 2, detached_weights=base), delta, w)
    assert float(loss.data) == pytest.approx(np.mean(w * np.sum(delta ** 2, axis=1)))
    grads = backward(loss, small_net.params)

    trace = backward_simulate(small_net, z, c, 2, detached_weights=base)
    reference = backward(((trace.tilde_f * delta).sum(axis=1) * (2.0 * w)).mean(), small_net.params)
    for name in grads:
        np.testing.assert_allclose(grads[name], reference[name], rtol=1e-10, atol=1e-12)


def test_fsf_loss_accepts_a_plain_value():
    tilde = Value(np.ones((2, 2)), requires_grad=True)
    loss = fsf_dmd_loss(tilde, np.full((2, 2), 0.5))
    backward(loss)
    np.testing.assert_allclose(tilde.grad, np.full((2, 2), 0.5))


def test_delta_against_a_matching_teacher_vanishes(ring_spec, rng):
    teacher = AnalyticTeacher(ring_spec)
    field = CallableField(lambda x, t, s, c: teacher.velocity(x, t, c), num_classes=8)
    x = rng.standard_normal((4, 2))
    t = rng.uniform(0.1, 0.9, size=4)
    c = rng.integers(8, size=4)
    np.testing.assert_allclose(fsf_delta(field, teacher, x, t, c, Guidance()), 0.0, atol=1e-12)
    np.testing.assert_allclose(scratch_delta(field, x, t, c), 0.0, atol=1e-12)


def test_weight_modes(rng):
    t = np.array([0.2, 0.7])
    tilde = np.array([[1.0, 1.0], [0.0, 0.0]])
    teacher = np.array([[0.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(dmd_weight(WeightMode.CONSTANT, t, constant=2.0), [2.0, 2.0])
    np.testing.assert_allclose(dmd_weight(WeightMode.COSINE, t), np.cos(t))
    adaptive = dmd_weight(WeightMode.ADAPTIVE, t, tilde, teacher)
    np.testing.assert_allclose(adaptive, [1.0, 1.0 / ADAPTIVE_WEIGHT_FLOOR])
    np.testing.assert_allclose(dmd_weight(WeightMode.ADAPTIVE_COSINE, t, tilde, teacher), np.cos(t) * adaptive)
    np.testing.assert_allclose(adaptive_weight(Value(tilde), teacher), adaptive)


def test_dmd2_fake_loss_trains_toward_the_conditional_velocity(small_net, rng):
    x_hat = rng.standard_normal((8, 2))
    loss = dmd2_fake_loss(small_net, x_hat, np.zeros(8, dtype=int), np.random.default_rng(1))
    grads = backward(loss, small_net.params)
    assert float(loss.data) > 0.0
    assert any(np.any(g != 0.0) for g in grads.values())


def test_dmd2_generator_objective_gradient():
    tilde = Value(np.array([[1.0, 3.0]]), requires_grad=True)
    v_fake = np.array([[2.0, 0.0]])
    v_teacher = np.array([[0.0, 1.0]])
    loss = dmd2_generator_objective(tilde, v_fake, v_teacher)
    backward(loss)
    norm = np.mean(np.abs(tilde.data - v_teacher))
    np.testing.assert_allclose(tilde.grad, (v_fake - v_teacher) / norm)


def test_guided_velocity_uses_the_guidance_settings(ring_spec, rng):
    teacher = AnalyticTeacher(ring_spec)
    x = rng.standard_normal((3, 2))
    c = np.zeros(3, dtype=int)
    guidance = Guidance(scale=2.0, t_range=(0.0, 1.0))
    np.testing.assert_allclose(guided_velocity(teacher, x, 0.5, c, guidance), cfg_velocity(teacher, x, 0.5, c, 2.0))
