"""
Identity suite: closed-form checks of the oracles, the finite-difference JVP,
the stop-gradient contracts and every training loss, runnable without any
trained checkpoint.

A canary swaps one building block for a deliberately broken version; the
suite must then fail.
"""
import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from config.experiment_config import ConsistencyConfig, TimeSamplerConfig, WeightMode
from config.presets import g1, gm2_sym, gm8_ring
from core.layers import Weights
from core.value import Value, backward, no_grad, square, stop_gradient
from models.consistency_losses import (
    cfm_loss,
    consistency_residual_loss,
    consistency_weight,
    draw_consistency_batch,
    emd_consistency_loss,
    jvp_central_difference,
)
from models.oracle_fields import AnalyticFlowMapField, CallableField
from models.pseudo_velocity_net import PseudoVelocityNet
from models.rollout import RolloutTrace, backward_simulate
from models.time_sampling import sample_time_pair
from objectives.dmd2 import dmd2_fake_loss, dmd2_generator_objective
from objectives.fsf_dmd import ADAPTIVE_WEIGHT_FLOOR, dmd_weight, fsf_delta_terms, fsf_dmd_loss, perturb, timestep_shift
from objectives.guidance import AnalyticTeacher, Guidance, guided_velocity
from oracle.gaussian_flow import LinearGaussianFlow, analytic_flow_map, average_velocity_quadrature, euler_pf_ode
from oracle.gaussian_mixture import GaussianMixtureSpec, gm_marginal_score, gm_marginal_velocity, sample_gaussian_mixture
from oracle.interpolant import interpolate, score_from_velocity, time_column
from utils.exceptions import VerificationFailure

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
GRADIENT_TOLERANCE = 1e-4


class Canary(str, Enum):
    """Deliberate mutations the suite must detect"""
    SCORE_SIGN = "score-sign"
    DROP_SG = "drop-sg"
    DROP_REORDER = "drop-reorder"


class CheckResult(BaseModel):
    """
    One row of the verification table.

    Attributes:
        name (str): check identifier
        passed (bool): measured <= tolerance and no error was raised
        measured (Optional[float]): the measured error, None if the check raised
        tolerance (float): acceptance bound
        detail (str): context or the error message
    """
    name: str
    passed: bool
    measured: Optional[float] = None
    tolerance: float
    detail: str = ""


class VerifyReport(BaseModel):
    passed: bool
    canary: Optional[Canary] = None
    seconds: float
    checks: List[CheckResult]


def _fsf_loss_without_sg(trace, delta, w_t):
    tilde = trace.tilde_f if isinstance(trace, RolloutTrace) else trace
    target = tilde - Value(np.asarray(delta, dtype=np.float64), op="const")
    per_sample = square(tilde - target).sum(axis=1)
    return (per_sample * np.asarray(w_t, dtype=np.float64)).mean()


def _score_sign_flipped(v, x_t, t):
    return score_from_velocity(-v, x_t, t)


@dataclass(frozen=True)
class SuiteParts:
    """The swappable building blocks; canaries replace exactly one of them."""
    score_from_velocity: Callable = score_from_velocity
    fsf_dmd_loss: Callable = fsf_dmd_loss
    reorder_times: bool = True

    @classmethod
    def for_canary(cls, canary: Optional[Canary]) -> "SuiteParts":
        if canary == Canary.SCORE_SIGN:
            return cls(score_from_velocity=_score_sign_flipped)
        if canary == Canary.DROP_SG:
            return cls(fsf_dmd_loss=_fsf_loss_without_sg)
        if canary == Canary.DROP_REORDER:
            return cls(reorder_times=False)
        return cls()


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def sample_coordinates(
    arrays: Dict[str, np.ndarray], rng: np.random.Generator, per_param: int = 3
) -> List[Tuple[str, Tuple[int, ...]]]:
    """A few random entries of every parameter array, in name order."""
    coordinates = []
    for name in sorted(arrays):
        shape = arrays[name].shape
        size = int(np.prod(shape))
        for flat in rng.choice(size, size=min(per_param, size), replace=False):
            coordinates.append((name, tuple(int(i) for i in np.unravel_index(int(flat), shape))))
    return coordinates


def finite_difference_gradient(
    fn: Callable[[Dict[str, np.ndarray]], float],
    arrays: Dict[str, np.ndarray],
    coordinates: Sequence[Tuple[str, Tuple[int, ...]]],
    step: float = FD_STEP,
) -> np.ndarray:
    """Central differences of a scalar function of named arrays at the given coordinates."""
    work = {name: np.array(array, dtype=np.float64) for name, array in arrays.items()}
    result = np.empty(len(coordinates))
    with no_grad():
        for i, (name, index) in enumerate(coordinates):
            original = work[name][index]
            work[name][index] = original + step
            plus = fn(work)
            work[name][index] = original - step
            minus = fn(work)
            work[name][index] = original
            result[i] = (plus - minus) / (2.0 * step)
    return result


def _small_net(spec: GaussianMixtureSpec, rng: np.random.Generator) -> PseudoVelocityNet:
    return PseudoVelocityNet.create(
        spec.dimension,
        spec.num_components,
        rng,
        zero_init_output=False,
        hidden_width=32,
        depth=2,
        time_frequencies=4,
        class_embed_dim=4,
    )


def _frozen_target_loss(tilde: np.ndarray, target: np.ndarray, w: np.ndarray) -> float:
    return float(np.mean(np.asarray(w) * np.sum((tilde - target) ** 2, axis=1)))


def _gradient_check(
    name: str,
    net: PseudoVelocityNet,
    loss_fn: Callable[[Weights], Value],
    numeric_fn: Callable[[Dict[str, np.ndarray]], float],
    rng: np.random.Generator,
    tolerance: float = GRADIENT_TOLERANCE,
) -> CheckResult:
    grads = backward(loss_fn(net.params), net.params)
    base = net.params.arrays()
    coordinates = sample_coordinates(base, rng)
    analytic = np.array([grads[param][index] for param, index in coordinates])
    numeric = finite_difference_gradient(numeric_fn, base, coordinates)
    error = relative_error(analytic, numeric)
    return CheckResult(
        name=name,
        passed=error <= tolerance,
        measured=error,
        tolerance=tolerance,
        detail=f"{len(coordinates)} coordinates, |grad|={np.linalg.norm(analytic):.3e}",
    )


def check_score_velocity(parts: SuiteParts) -> CheckResult:
    axis = np.linspace(-2.0, 2.0, 20)
    grid = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    worst = 0.0
    for spec in (gm8_ring(), gm2_sym(), g1(mean=[0.5, -1.0], stdev=0.7)):
        for t in np.linspace(0.02, 0.98, 20):
            expected = gm_marginal_score(spec, grid, t)
            got = parts.score_from_velocity(gm_marginal_velocity(spec, grid, t), grid, t)
            worst = max(worst, float(np.max(np.abs(got - expected) / (1.0 + np.abs(expected)))))
    return CheckResult(name="score-velocity", passed=worst <= 1e-9, measured=worst, tolerance=1e-9,
                       detail="3 mixtures, 20x20 grid, t in [0.02, 0.98]")


def _gaussian_flow() -> LinearGaussianFlow:
    return LinearGaussianFlow(mean=(1.0, -0.5), stdev=0.5)


def check_flow_map_round_trip(parts: SuiteParts) -> CheckResult:
    flow = _gaussian_flow()
    x = np.random.default_rng(1).standard_normal((64, 2))
    worst = 0.0
    for t in (0.1, 0.5, 0.9, 1.0):
        back = analytic_flow_map(flow, analytic_flow_map(flow, x, 0.0, t), t, 0.0)
        worst = max(worst, float(np.max(np.abs(back - x))))
    return CheckResult(name="flow-map-round-trip", passed=worst <= 1e-12, measured=worst, tolerance=1e-12)


def check_semigroup(parts: SuiteParts) -> CheckResult:
    flow = _gaussian_flow()
    x = np.random.default_rng(2).standard_normal((64, 2))
    worst = 0.0
    for t, r, s in ((0.9, 0.5, 0.1), (1.0, 0.3, 0.0), (0.7, 0.7, 0.2), (0.6, 0.2, 0.2)):
        direct = analytic_flow_map(flow, x, t, s)
        composed = analytic_flow_map(flow, analytic_flow_map(flow, x, t, r), r, s)
        worst = max(worst, float(np.max(np.abs(direct - composed))))
    return CheckResult(name="semigroup", passed=worst <= 1e-12, measured=worst, tolerance=1e-12)


def check_average_velocity(parts: SuiteParts) -> CheckResult:
    flow = _gaussian_flow()
    x_t = np.random.default_rng(3).standard_normal((4, 2))
    worst = 0.0
    for t in (0.3, 0.8):
        endpoint = (x_t - analytic_flow_map(flow, x_t, t, 0.0)) / t
        quadrature = average_velocity_quadrature(flow, x_t, t, nodes=10_001)
        worst = max(worst, float(np.max(np.abs(endpoint - quadrature))))
    return CheckResult(name="average-velocity", passed=worst <= 1e-6, measured=worst, tolerance=1e-6,
                       detail="Simpson quadrature, 10001 nodes")


def check_euler_order(parts: SuiteParts) -> CheckResult:
    flow = _gaussian_flow()
    z = np.random.default_rng(4).standard_normal((32, 2))
    exact = analytic_flow_map(flow, z, 1.0, 0.0)
    errors = [
        float(np.max(np.abs(euler_pf_ode(flow.velocity, z, 1.0, 0.0, steps) - exact)))
        for steps in (16, 32, 64)
    ]
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    measured = max(abs(r - 2.0) / 2.0 for r in ratios)
    return CheckResult(name="euler-first-order", passed=measured <= 0.1, measured=measured, tolerance=0.1,
                       detail=f"error ratios {ratios[0]:.3f}, {ratios[1]:.3f}")


def _tangent(rng: np.random.Generator, n: int):
    x = rng.standard_normal((n, 2))
    t, s = rng.random(n), rng.random(n)
    v_x, v_t, v_s = rng.standard_normal((n, 2)), rng.standard_normal(n), rng.standard_normal(n)
    return x, t, s, (v_x, v_t, v_s)


def check_jvp_exact(parts: SuiteParts) -> CheckResult:
    def quadratic(x, t, s, c):
        tc, sc = time_column(t, x), time_column(s, x)
        return x * x + tc * x + sc * tc

    x, t, s, (v_x, v_t, v_s) = _tangent(np.random.default_rng(5), 16)
    tc, sc = time_column(t, x), time_column(s, x)
    vt, vs = time_column(v_t, x), time_column(v_s, x)
    expected = 2.0 * x * v_x + vt * x + tc * v_x + vs * tc + sc * vt
    got = jvp_central_difference(CallableField(quadratic), x, t, s, None, (v_x, v_t, v_s), eps=0.005)
    error = float(np.max(np.abs(got - expected)))
    return CheckResult(name="jvp-quadratic-exact", passed=error <= 1e-9, measured=error, tolerance=1e-9)


def check_jvp_order(parts: SuiteParts) -> CheckResult:
    def smooth(x, t, s, c):
        return np.sin(x) * np.cos(time_column(t, x)) + time_column(s, x) * x

    x, t, s, (v_x, v_t, v_s) = _tangent(np.random.default_rng(6), 16)
    tc, sc = time_column(t, x), time_column(s, x)
    expected = (
        np.cos(x) * np.cos(tc) * v_x
        - np.sin(x) * np.sin(tc) * time_column(v_t, x)
        + time_column(v_s, x) * x
        + sc * v_x
    )
    field = CallableField(smooth)
    errors = [
        float(np.max(np.abs(jvp_central_difference(field, x, t, s, None, (v_x, v_t, v_s), eps=eps) - expected)))
        for eps in (0.04, 0.02)
    ]
    ratio = errors[0] / errors[1]
    measured = abs(ratio - 4.0) / 4.0
    return CheckResult(name="jvp-second-order", passed=measured <= 0.1, measured=measured, tolerance=0.1,
                       detail=f"error ratio {ratio:.3f} when eps halves")


def check_stop_gradient(parts: SuiteParts) -> CheckResult:
    rng = np.random.default_rng(7)
    p = Value(rng.standard_normal((3, 2)), requires_grad=True)
    detached = stop_gradient(p)
    backward((detached * p).sum())
    forward_ok = np.array_equal(detached.data, p.data)
    grad_error = float(np.max(np.abs(p.grad - p.data)))

    # the consistency target must ignore gradient even when handed live parameters
    spec = gm8_ring()
    net = _small_net(spec, rng)
    x, c = sample_gaussian_mixture(spec, 8, rng)
    batch = draw_consistency_batch(x, c, TimeSamplerConfig(), rng)
    cfg = ConsistencyConfig()
    frozen = backward(
        consistency_residual_loss(net, batch.x_t, batch.t, batch.s, c, batch.z - batch.x, cfg,
                                  target_weights=net.params.arrays()),
        net.params,
    )
    masked = backward(
        consistency_residual_loss(net, batch.x_t, batch.t, batch.s, c, batch.z - batch.x, cfg,
                                  target_weights=net.params),
        net.params,
    )
    target_error = max(float(np.max(np.abs(frozen[k] - masked[k]))) for k in frozen)
    measured = max(grad_error, target_error) + (0.0 if forward_ok else 1.0)
    return CheckResult(name="stop-gradient", passed=measured == 0.0, measured=measured, tolerance=0.0,
                       detail="sg forward identity, zero backward, target branch check")


def _dmd_fixture(seed: int):
    rng = np.random.default_rng(seed)
    spec = gm8_ring()
    net = _small_net(spec, rng)
    z = rng.standard_normal((6, 2))
    c = rng.integers(spec.num_components, size=6)
    return rng, spec, net, z, c


def check_backward_simulation_identity(parts: SuiteParts) -> CheckResult:
    """∇θ⟨u, x̂⟩ = −∇θ⟨u, tilde-F⟩ with stop-gradient intermediates."""
    rng, spec, net, z, c = _dmd_fixture(8)
    base = net.params.arrays()
    u = rng.standard_normal(z.shape)
    trace = backward_simulate(net, z, c, 2, detached_weights=base)
    grads = backward((trace.tilde_f * u).sum(), net.params)
    coordinates = sample_coordinates(base, rng)
    analytic = -np.array([grads[name][index] for name, index in coordinates])

    def endpoint_of(arrays):
        return float(np.sum(u * backward_simulate(net, z, c, 2, weights=arrays, detached_weights=base).endpoint))

    numeric = finite_difference_gradient(endpoint_of, base, coordinates)
    error = relative_error(analytic, numeric)
    return CheckResult(name="backward-simulation-gradient", passed=error <= GRADIENT_TOLERANCE, measured=error,
                       tolerance=GRADIENT_TOLERANCE, detail="M=2, random direction")


def _fsf_inputs(rng, spec, net, z, c, steps):
    base = net.params.arrays()
    trace = backward_simulate(net, z, c, steps, detached_weights=base)
    sample = perturb(trace.endpoint, rng, gamma=10.0)
    delta, v_real = fsf_delta_terms(
        net, AnalyticTeacher(spec), sample.x_hat_t, sample.t, c, Guidance(scale=6.0, t_range=(0.0, 0.9)), base
    )
    w = dmd_weight(WeightMode.ADAPTIVE, sample.t, trace.tilde_f.data, v_real)
    return base, trace, delta, w


def check_fsf_gradient_form(parts: SuiteParts) -> CheckResult:
    """Gradient of the sg-encoded loss is 2·w·Δᵀ ∂tilde-F/∂θ."""
    rng, spec, net, z, c = _dmd_fixture(9)
    base, trace, delta, w = _fsf_inputs(rng, spec, net, z, c, 2)
    grads = backward(parts.fsf_dmd_loss(trace, delta, w), net.params)
    reference_trace = backward_simulate(net, z, c, 2, detached_weights=base)
    reference = backward(((reference_trace.tilde_f * delta).sum(axis=1) * (2.0 * w)).mean(), net.params)
    error = relative_error(
        np.concatenate([grads[k].ravel() for k in sorted(grads)]),
        np.concatenate([reference[k].ravel() for k in sorted(reference)]),
    )
    return CheckResult(name="fsf-gradient-form", passed=error <= 1e-6, measured=error, tolerance=1e-6)


def check_single_step_reduction(parts: SuiteParts) -> CheckResult:
    rng, spec, net, z, c = _dmd_fixture(10)
    delta = rng.standard_normal(z.shape)
    w = rng.random(z.shape[0])
    rolled = parts.fsf_dmd_loss(backward_simulate(net, z, c, 1), delta, w)
    rolled_grads = backward(rolled, net.params)
    direct = parts.fsf_dmd_loss(net(z, 1.0, 0.0, c), delta, w)
    direct_grads = backward(direct, net.params)
    identical = np.array_equal(rolled.data, direct.data) and all(
        np.array_equal(rolled_grads[k], direct_grads[k]) for k in rolled_grads
    )
    return CheckResult(name="single-step-reduction", passed=identical, measured=0.0 if identical else 1.0,
                       tolerance=0.0, detail="M=1 rollout vs direct evaluation, bitwise")


def check_matched_stationarity(parts: SuiteParts) -> CheckResult:
    """
    Exact generator against the exact teacher on single-Gaussian data: the
    mean of Δ vanishes at every t, so the loss gradient along any translation
    of the generator output is zero.
    """
    spec = g1(mean=[0.5, -1.0], stdev=0.8)
    flow = LinearGaussianFlow.from_spec(spec)
    generator = AnalyticFlowMapField(flow)
    teacher = AnalyticTeacher(spec)
    rng = np.random.default_rng(11)
    z = rng.standard_normal((256, 2))
    noise = rng.standard_normal((256, 2))
    z, noise = np.concatenate([z, -z]), np.concatenate([noise, -noise])
    labels = np.zeros(z.shape[0], dtype=np.int64)
    x_hat = z - generator.evaluate(z, 1.0, 0.0, labels)
    worst_mean, worst_pointwise = 0.0, 0.0
    for t in np.linspace(0.05, 0.95, 10):
        x_hat_t = interpolate(x_hat, noise, t)
        delta = generator.evaluate(x_hat_t, t, 0.0, labels) - teacher.velocity(x_hat_t, t, labels)
        worst_mean = max(worst_mean, float(np.max(np.abs(2.0 * delta.mean(axis=0)))))
        worst_pointwise = max(worst_pointwise, float(np.max(np.abs(delta))))
    return CheckResult(name="matched-stationarity", passed=worst_mean <= 1e-5, measured=worst_mean, tolerance=1e-5,
                       detail=f"translation gradient; pointwise max |delta| {worst_pointwise:.3e}")


def check_timestep_shift(parts: SuiteParts) -> CheckResult:
    rng = np.random.default_rng(12)
    u = np.sort(rng.random(1000))
    violations = 0
    for gamma in np.concatenate([[1.0], 1.0 + 20.0 * rng.random(20)]):
        shifted = timestep_shift(u, gamma)
        violations += int(np.any(np.diff(shifted) < 0.0) or np.any(shifted < 0.0) or np.any(shifted >= 1.0))
    return CheckResult(name="timestep-shift", passed=violations == 0, measured=float(violations), tolerance=0.0,
                       detail="monotone map of [0, 1) for 21 values of gamma")


def check_time_sampler(parts: SuiteParts) -> CheckResult:
    cfg = TimeSamplerConfig()
    n = 100_000
    pair = sample_time_pair(cfg, np.random.default_rng(13), n=n, reorder=parts.reorder_times)
    p = cfg.mask_prob
    fraction = float(np.mean(pair.s == pair.t))
    z_score = abs(fraction - p) / np.sqrt(p * (1.0 - p) / n)
    return CheckResult(name="time-sampler", passed=z_score <= 3.0, measured=float(z_score), tolerance=3.0,
                       detail=f"P(s=t)={fraction:.4f} over {n} draws")


def check_loss_gradients(parts: SuiteParts) -> List[CheckResult]:
    rng = np.random.default_rng(14)
    spec = gm8_ring()
    net = _small_net(spec, rng)
    x, c = sample_gaussian_mixture(spec, 8, rng)
    cfg = ConsistencyConfig()
    base = net.params.arrays()
    results = []

    def fresh():
        return np.random.default_rng(99)

    results.append(_gradient_check(
        "gradient:cfm", net,
        lambda w: cfm_loss(net, x, c, fresh(), w),
        lambda a: float(cfm_loss(net, x, c, fresh(), a).data),
        rng,
    ))

    batch = draw_consistency_batch(x, c, TimeSamplerConfig(), rng)
    x_t = batch.x_t
    for name, velocity in (
        ("gradient:ct", batch.z - batch.x),
        ("gradient:cd", guided_velocity(AnalyticTeacher(spec), x_t, batch.t, c, Guidance(6.0, (0.0, 0.9)))),
    ):
        results.append(_gradient_check(
            name, net,
            lambda w, v=velocity: consistency_residual_loss(net, x_t, batch.t, batch.s, c, v, cfg, w, base),
            lambda a, v=velocity: float(consistency_residual_loss(net, x_t, batch.t, batch.s, c, v, cfg, a, base).data),
            rng,
        ))

    z = rng.standard_normal((6, 2))
    zc = rng.integers(spec.num_components, size=6)
    for steps in (1, 2):
        _, trace, delta, w_t = _fsf_inputs(rng, spec, net, z, zc, steps)
        target = trace.tilde_f.data - delta
        results.append(_gradient_check(
            f"gradient:fsf-dmd-m{steps}", net,
            lambda w, s=steps, d=delta, wt=w_t: parts.fsf_dmd_loss(
                backward_simulate(net, z, zc, s, w, base), d, wt),
            lambda a, s=steps, tg=target, wt=w_t: _frozen_target_loss(
                backward_simulate(net, z, zc, s, a, base).tilde_f.data, tg, wt),
            rng,
        ))

    fake = _small_net(spec, rng)
    x_hat = backward_simulate(net, z, zc, 2).endpoint
    results.append(_gradient_check(
        "gradient:dmd2-fake", fake,
        lambda w: dmd2_fake_loss(fake, x_hat, zc, fresh(), w),
        lambda a: float(dmd2_fake_loss(fake, x_hat, zc, fresh(), a).data),
        rng,
    ))

    trace = backward_simulate(net, z, zc, 2, detached_weights=base)
    sample = perturb(trace.endpoint, rng, gamma=1.0)
    v_fake = fake.evaluate(sample.x_hat_t, sample.t, sample.t, zc)
    v_teacher = guided_velocity(AnalyticTeacher(spec), sample.x_hat_t, sample.t, zc, Guidance(6.0, (0.0, 0.9)))
    norm = np.mean(np.abs(trace.tilde_f.data - v_teacher), axis=1, keepdims=True)
    target = trace.tilde_f.data - (v_fake - v_teacher) / np.maximum(norm, ADAPTIVE_WEIGHT_FLOOR)
    results.append(_gradient_check(
        "gradient:dmd2-generator", net,
        lambda w: dmd2_generator_objective(backward_simulate(net, z, zc, 2, w, base).tilde_f, v_fake, v_teacher),
        lambda a: _frozen_target_loss(backward_simulate(net, z, zc, 2, a, base).tilde_f.data, target, 0.5),
        rng,
    ))

    # the EMD form with w̃ = 2w/(t − s) must reproduce the consistency-training gradient
    no_mask = draw_consistency_batch(x, c, TimeSamplerConfig(mask_prob=0.0), rng)
    w_ct = consistency_weight(cfg.weight, no_mask.t)
    w_tilde = 2.0 * w_ct / (no_mask.t - no_mask.s)
    velocity = no_mask.z - no_mask.x
    ct_grads = backward(
        consistency_residual_loss(net, no_mask.x_t, no_mask.t, no_mask.s, c, velocity, cfg,
                                  target_weights=base, weight=w_ct),
        net.params,
    )
    emd_grads = backward(
        emd_consistency_loss(net, no_mask.x_t, no_mask.t, no_mask.s, c, velocity, w_tilde,
                             eps=cfg.jvp_eps, target_weights=base),
        net.params,
    )
    error = relative_error(
        np.concatenate([ct_grads[k].ravel() for k in sorted(ct_grads)]),
        np.concatenate([emd_grads[k].ravel() for k in sorted(emd_grads)]),
    )
    results.append(CheckResult(name="gradient:emd-equivalence", passed=error <= GRADIENT_TOLERANCE,
                               measured=error, tolerance=GRADIENT_TOLERANCE))
    return results


CHECKS: List[Callable[[SuiteParts], CheckResult]] = [
    check_score_velocity,
    check_flow_map_round_trip,
    check_semigroup,
    check_average_velocity,
    check_euler_order,
    check_jvp_exact,
    check_jvp_order,
    check_stop_gradient,
    check_backward_simulation_identity,
    check_fsf_gradient_form,
    check_single_step_reduction,
    check_matched_stationarity,
    check_timestep_shift,
    check_time_sampler,
]


def _run_guarded(name: str, fn: Callable[[], object]) -> List[CheckResult]:
    try:
        result = fn()
        return result if isinstance(result, list) else [result]
    except Exception as e:
        logger.warning(f"Check {name} raised: {str(e)}")
        return [CheckResult(name=name, passed=False, tolerance=0.0, detail=f"{type(e).__name__}: {str(e)}")]


def run_verify(canary: Optional[Canary] = None) -> VerifyReport:
    """
    Run the whole suite; a failing or raising check never stops the others.

    Returns:
        VerifyReport: one CheckResult per check, passed only if all passed
    """
    parts = SuiteParts.for_canary(canary)
    if canary is not None:
        logger.info(f"Running the identity suite with canary '{canary.value}'")
    started = time.perf_counter()
    checks: List[CheckResult] = []
    for check in CHECKS:
        name = check.__name__.replace("check_", "").replace("_", "-")
        checks.extend(_run_guarded(name, lambda c=check: c(parts)))
    checks.extend(_run_guarded("loss-gradients", lambda: check_loss_gradients(parts)))
    seconds = time.perf_counter() - started
    passed = all(check.passed for check in checks)
    logger.info(f"Identity suite: {sum(c.passed for c in checks)}/{len(checks)} passed in {seconds:.1f}s")
    return VerifyReport(passed=passed, canary=canary, seconds=seconds, checks=checks)


def format_table(report: VerifyReport) -> str:
    """Fixed-width pass/fail table with measured errors and tolerances."""
    lines = [f"{'check':<32} {'result':<6} {'measured':>12} {'tolerance':>10}  detail"]
    for check in report.checks:
        measured = "-" if check.measured is None else f"{check.measured:.3e}"
        lines.append(
            f"{check.name:<32} {'PASS' if check.passed else 'FAIL':<6} {measured:>12} "
            f"{check.tolerance:>10.1e}  {check.detail}"
        )
    lines.append(f"{'all passed' if report.passed else 'FAILED'} in {report.seconds:.1f}s")
    return "\n".join(lines)


def raise_on_failure(report: VerifyReport) -> None:
    failed = [c for c in report.checks if not c.passed]
    if failed:
        summary = ", ".join(
            f"{c.name} (measured {c.measured if c.measured is not None else 'error'}, tolerance {c.tolerance:g})"
            for c in failed
        )
        raise VerificationFailure(f"{len(failed)} check(s) failed: {summary}")
