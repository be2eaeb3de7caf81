import numpy as np
import pytest

from config.experiment_config import ConsistencyConfig, ConsistencyWeight, LossMetric, SimulationMode, TimeSamplerConfig
from core.value import Value, backward
from models.consistency_losses import (
    apply_label_dropout,
    consistency_target,
    consistency_weight,
    flow_map_apply,
    jvp_central_difference,
    regression_loss,
)
from models.oracle_fields import AnalyticFlowMapField, CallableField, ConstantField
from models.pseudo_velocity_net import CLASS_TABLE, PseudoVelocityNet
from models.rollout import backward_simulate, dmd2_backward_simulate, rollout, simulate
from models.time_sampling import order_time_pair, sample_time_pair
from oracle.gaussian_flow import LinearGaussianFlow, analytic_flow_map
from oracle.interpolant import T_MIN
from utils.exceptions import DomainError


def test_network_output_shape_and_zero_head(ring_spec, rng):
    net = PseudoVelocityNet.create(2, ring_spec.num_components, rng, hidden_width=8, depth=1, time_frequencies=2)
    x = rng.standard_normal((5, 2))
    out = net(x, 0.7, 0.2, np.arange(5))
    assert out.shape == (5, 2)
    np.testing.assert_array_equal(out.data, np.zeros((5, 2)))
    assert net.params[CLASS_TABLE].shape == (ring_spec.num_components + 1, net.class_embed_dim)


def test_missing_labels_mean_the_null_class(small_net, rng):
    x = rng.standard_normal((4, 2))
    null = np.full(4, small_net.null_label)
    np.testing.assert_array_equal(small_net.evaluate(x, 0.5, 0.1), small_net.evaluate(x, 0.5, 0.1, null))
    assert not np.allclose(small_net.evaluate(x, 0.5, 0.1, np.zeros(4, dtype=int)), small_net.evaluate(x, 0.5, 0.1))


def test_architecture_round_trip_and_weight_override(small_net, rng):
    rebuilt = PseudoVelocityNet.from_architecture(small_net.architecture(), small_net.params.arrays())
    x = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(rebuilt.evaluate(x, 0.4, 0.4, 1), small_net.evaluate(x, 0.4, 0.4, 1))
    zeros = {name: np.zeros_like(a) for name, a in small_net.params.arrays().items()}
    np.testing.assert_array_equal(small_net.evaluate(x, 0.4, 0.4, 1, zeros), np.zeros((3, 2)))


def test_flow_map_is_identity_at_equal_times(small_net, rng):
    x = rng.standard_normal((6, 2))
    t = rng.random(6)
    np.testing.assert_array_equal(flow_map_apply(small_net, x, t, t, 0).data, x)


def test_analytic_field_reproduces_the_flow_map(rng):
    flow = LinearGaussianFlow(mean=(1.0, -1.0), stdev=0.4)
    field = AnalyticFlowMapField(flow)
    x = rng.standard_normal((5, 2))
    t, s = np.full(5, 0.8), np.full(5, 0.3)
    np.testing.assert_allclose(flow_map_apply(field, x, t, s).data, analytic_flow_map(flow, x, t, s), atol=1e-12)
    np.testing.assert_allclose(field.evaluate(x, t, t), flow.velocity(x, t))


def test_oracle_fields_own_separate_parameter_stores():
    first, second = ConstantField(0.0), CallableField(lambda x, t, s, c: x)
    assert first.params is not second.params
    first.params.add("stray", np.zeros(1))
    assert "stray" not in second.params
    assert len(ConstantField(1.0).params) == 0


def test_jvp_is_exact_for_affine_fields(rng):
    field = CallableField(lambda x, t, s, c: 3.0 * x + 2.0 * np.asarray(t)[:, None] - np.asarray(s)[:, None])
    x = rng.standard_normal((4, 2))
    t, s = rng.random(4), rng.random(4)
    v_x, v_t, v_s = rng.standard_normal((4, 2)), rng.standard_normal(4), rng.standard_normal(4)
    jvp = jvp_central_difference(field, x, t, s, None, (v_x, v_t, v_s), eps=0.01)
    np.testing.assert_allclose(jvp, 3.0 * v_x + 2.0 * v_t[:, None] - v_s[:, None], atol=1e-12)
    with pytest.raises(DomainError):
        jvp_central_difference(field, x, t, s, None, (v_x, v_t, v_s), eps=0.0)


def test_consistency_target_for_a_constant_field_is_the_velocity(rng):
    x = rng.standard_normal((3, 2))
    velocity = rng.standard_normal((3, 2))
    target = consistency_target(ConstantField([1.0, 2.0]), x, np.full(3, 0.8), np.full(3, 0.2), None, velocity, 0.005)
    np.testing.assert_allclose(target, velocity, atol=1e-12)


def test_regression_loss_value_and_gradient():
    prediction = Value(np.array([[1.0, 2.0], [0.0, 1.0]]), requires_grad=True)
    target = np.array([[0.0, 0.0], [0.0, 0.0]])
    loss = regression_loss(prediction, target, np.array([1.0, 2.0]))
    assert float(loss.data) == pytest.approx((5.0 + 2.0) / 2)
    backward(loss)
    np.testing.assert_allclose(prediction.grad, [[1.0, 2.0], [0.0, 2.0]])

    huber = regression_loss(prediction, target + 1.0, np.ones(2), LossMetric.PSEUDO_HUBER_COSINE)
    assert float(huber.data) > 0.0


def test_consistency_weight_schedules():
    t = np.array([0.0, 1.0])
    np.testing.assert_allclose(consistency_weight(ConsistencyWeight.COSINE, t), np.cos(t))
    np.testing.assert_array_equal(consistency_weight(ConsistencyWeight.CONSTANT, t), [1.0, 1.0])


def test_time_pairs_are_ordered_and_masked():
    cfg = TimeSamplerConfig(mask_prob=0.3)
    pair = sample_time_pair(cfg, np.random.default_rng(4), n=50_000)
    assert np.all(pair.s <= pair.t)
    assert np.all((pair.t >= 0) & (pair.t <= 1))
    assert np.mean(pair.s == pair.t) == pytest.approx(0.3, abs=0.01)
    single = sample_time_pair(cfg, np.random.default_rng(5))
    assert isinstance(single.t, float)


def test_time_draws_stay_above_the_positive_time_floor():
    pair = sample_time_pair(TimeSamplerConfig(beta_alpha=0.05, mask_prob=0.0), np.random.default_rng(9), n=20_000)
    assert np.min(pair.s) >= T_MIN
    uniform = sample_time_pair(TimeSamplerConfig(uniform=True), np.random.default_rng(9), n=1000)
    assert np.min(uniform.s) >= T_MIN


def test_skipping_the_reorder_step_is_caught():
    with pytest.raises(DomainError):
        sample_time_pair(TimeSamplerConfig(mask_prob=0.0), np.random.default_rng(6), n=1000, reorder=False)
    t, s = order_time_pair(np.array([0.2, 0.9]), np.array([0.6, 0.1]), np.array([False, True]))
    np.testing.assert_array_equal(t, [0.6, 0.9])
    np.testing.assert_array_equal(s, [0.2, 0.9])


def test_label_dropout_rate(rng):
    labels = np.zeros(20_000, dtype=int)
    dropped = apply_label_dropout(labels, 8, 0.1, rng)
    assert set(np.unique(dropped)) == {0, 8}
    assert np.mean(dropped == 8) == pytest.approx(0.1, abs=0.01)


def test_rollout_with_a_constant_field(rng):
    z = rng.standard_normal((4, 2))
    field = ConstantField([0.5, -1.0])
    for steps in (1, 2, 4):
        x, visited = rollout(field, z, None, steps)
        np.testing.assert_allclose(x, z - np.array([0.5, -1.0]))
        assert [time for time, _ in visited] == [i / steps for i in range(steps, -1, -1)]
    with pytest.raises(DomainError):
        rollout(field, z, None, 0)


def test_backward_simulation_endpoint_matches_rollout(small_net, rng):
    z = rng.standard_normal((5, 2))
    c = rng.integers(8, size=5)
    for steps in (1, 2, 3):
        trace = backward_simulate(small_net, z, c, steps)
        expected, _ = rollout(small_net, z, c, steps)
        np.testing.assert_allclose(trace.endpoint, expected, atol=1e-12)
        assert trace.tilde_f.requires_grad


def test_single_step_dmd2_simulation_is_one_generator_call(small_net, rng):
    z = rng.standard_normal((5, 2))
    c = rng.integers(8, size=5)
    trace = dmd2_backward_simulate(small_net, z, c, 1, rng)
    np.testing.assert_allclose(trace.endpoint, z - small_net.evaluate(z, 1.0, 0.0, c), atol=1e-12)


def test_simulation_modes(small_net, rng):
    z = rng.standard_normal((3, 2))
    none = simulate(small_net, z, 0, SimulationMode.NONE, 4, rng)
    assert len(none.intermediates) == 2
    flowmap = simulate(small_net, z, 0, SimulationMode.FLOWMAP, 4, rng)
    assert [time for time, _ in flowmap.intermediates] == [1.0, 0.75, 0.5, 0.25, 0.0]


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_two_step_dmd2_simulation_renoises_the_full_rollout_with_z(small_net, seed):
    z = np.random.default_rng(10 + seed).standard_normal((4, 2))
    c = np.array([0, 3, 5, 7])
    trace = dmd2_backward_simulate(small_net, z, c, 2, np.random.default_rng(seed))

    def generate(x, t):
        return x - t * small_net.evaluate(x, t, 0.0, c)

    first = generate(z, 1.0)
    second = generate(0.5 * first + 0.5 * z, 0.5)
    t_graded = 1.0 - int(np.random.default_rng(seed).integers(2)) / 2
    x_in = (1.0 - t_graded) * second + t_graded * z
    np.testing.assert_allclose(trace.endpoint, generate(x_in, t_graded), atol=1e-12)
    assert [time for time, _ in trace.intermediates] == [1.0, 0.5, t_graded, 0.0]
    np.testing.assert_allclose(trace.intermediates[2][1], x_in, atol=1e-12)
    assert trace.tilde_f.requires_grad
