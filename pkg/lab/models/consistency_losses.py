"""
Forward-divergence objectives of the flow-map model: flow matching,
consistency training and consistency distillation, plus the EMD-form
consistency loss whose gradient matches consistency training.

Every loss is a per-sample weighted squared error summed over dimensions and
averaged over the batch. Targets are built from plain arrays, so the JVP and
the teacher never carry gradient.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.experiment_config import ConsistencyConfig, ConsistencyWeight, LossMetric, TimeSamplerConfig
from core.layers import Weights, freeze_weights
from core.value import Value, sqrt, square, stop_gradient
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from models.time_sampling import sample_time_pair
from objectives.guidance import Guidance, Teacher, guided_velocity
from oracle.interpolant import TimeLike, interpolate, time_column
from utils.exceptions import DomainError

logger = logging.getLogger(__name__)

# keeps the cosine term finite when either vector vanishes
_NORM_FLOOR = 1e-12


@dataclass
class ConsistencyBatch:
    """One draw of everything a consistency loss consumes."""
    x: np.ndarray
    c: np.ndarray
    z: np.ndarray
    t: np.ndarray
    s: np.ndarray

    @property
    def x_t(self) -> np.ndarray:
        return interpolate(self.x, self.z, self.t)


def draw_consistency_batch(
    x: np.ndarray, c: np.ndarray, time_cfg: TimeSamplerConfig, rng: np.random.Generator
) -> ConsistencyBatch:
    """Noise first, then the time pair; the rng order is fixed."""
    z = rng.standard_normal(x.shape)
    pair = sample_time_pair(time_cfg, rng, n=x.shape[0])
    return ConsistencyBatch(x=x, c=c, z=z, t=pair.t, s=pair.s)


def apply_label_dropout(labels: np.ndarray, null_label: int, prob: float, rng: np.random.Generator) -> np.ndarray:
    """Replace each label by ∅ with probability `prob` (one uniform per row)."""
    drop = rng.random(labels.shape[0]) < prob
    return np.where(drop, null_label, labels)


def flow_map_apply(
    net: PseudoVelocityField, x_t, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
) -> Value:
    """x_s = x_t + (s − t)·F(x_t; t, s, c). Exactly x_t when s = t."""
    F = net(x_t, t, s, c, weights)
    x_data = x_t.data if isinstance(x_t, Value) else np.asarray(x_t, dtype=np.float64)
    gap = time_column(np.asarray(s, dtype=np.float64) - np.asarray(t, dtype=np.float64), x_data)
    x_value = x_t if isinstance(x_t, Value) else Value(x_data, op="const")
    return x_value + F * gap


def jvp_central_difference(
    net: PseudoVelocityField,
    x: np.ndarray,
    t: TimeLike,
    s: TimeLike,
    c: Labels,
    tangent: Tuple[np.ndarray, TimeLike, TimeLike],
    eps: float = 0.005,
    weights: Optional[Weights] = None,
) -> np.ndarray:
    """
    (F(x + ε v_x, t + ε v_t, s + ε v_s) − F(x − ε v_x, t − ε v_t, s − ε v_s)) / 2ε

    Perturbed times may leave [0, 1]; the network extrapolates. The result is
    a plain array and therefore gradient-opaque.

    Raises:
        DomainError: eps <= 0
    """
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    v_x, v_t, v_s = tangent
    x = np.asarray(x, dtype=np.float64)
    v_x = np.asarray(v_x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    plus = net.evaluate(x + eps * v_x, t + eps * np.asarray(v_t), s + eps * np.asarray(v_s), c, weights)
    minus = net.evaluate(x - eps * v_x, t - eps * np.asarray(v_t), s - eps * np.asarray(v_s), c, weights)
    return (plus - minus) / (2.0 * eps)


def consistency_weight(kind: ConsistencyWeight, t: np.ndarray) -> np.ndarray:
    if kind == ConsistencyWeight.COSINE:
        return np.cos(np.asarray(t, dtype=np.float64))
    return np.ones_like(np.asarray(t, dtype=np.float64))


def regression_loss(
    prediction: Value,
    target: np.ndarray,
    weight: np.ndarray,
    metric: LossMetric = LossMetric.SQUARED,
    huber_c: float = 0.03,
    cosine_weight: float = 1.0,
) -> Value:
    """
    Batch mean of weight·‖prediction − sg[target]‖², or of the
    pseudo-Huber distance plus a (1 − cosine similarity) term.
    """
    target_value = stop_gradient(target)
    residual = prediction - target_value
    sq = square(residual).sum(axis=1)
    if metric == LossMetric.SQUARED:
        per_sample = sq
    else:
        huber = sqrt(sq + huber_c ** 2) - huber_c
        dot = (prediction * target_value).sum(axis=1)
        norm_p = sqrt(square(prediction).sum(axis=1) + _NORM_FLOOR)
        norm_t = np.sqrt(np.sum(target ** 2, axis=1) + _NORM_FLOOR)
        per_sample = huber + (1.0 - dot / (norm_p * norm_t)) * cosine_weight
    return (per_sample * np.asarray(weight, dtype=np.float64)).mean()


def consistency_target(
    net: PseudoVelocityField,
    x_t: np.ndarray,
    t: np.ndarray,
    s: np.ndarray,
    c: Labels,
    velocity: np.ndarray,
    eps: float,
    weights: Optional[Weights] = None,
) -> np.ndarray:
    """v + (s − t)·dF/dt along the trajectory, with tangent (v, 1, 0)."""
    n = x_t.shape[0]
    jvp = jvp_central_difference(
        net, x_t, t, s, c, (velocity, np.ones(n), np.zeros(n)), eps=eps, weights=weights
    )
    return velocity + time_column(s - t, x_t) * jvp


def consistency_residual_loss(
    net: PseudoVelocityField,
    x_t: np.ndarray,
    t: np.ndarray,
    s: np.ndarray,
    c: Labels,
    velocity: np.ndarray,
    cfg: ConsistencyConfig,
    weights: Optional[Weights] = None,
    target_weights: Optional[Weights] = None,
    weight: Optional[np.ndarray] = None,
) -> Value:
    """
    Shared body of ct_loss and cd_loss for an already drawn batch.

    Args:
        target_weights: weights for the stop-gradient JVP branch; defaults to a
            snapshot of `weights`
        weight: per-sample w_{t,s}; defaults to the configured schedule
    """
    live = net.params if weights is None else weights
    if target_weights is None:
        target_weights = freeze_weights(live)
    target = consistency_target(net, x_t, t, s, c, velocity, cfg.jvp_eps, target_weights)
    prediction = net(x_t, t, s, c, weights)
    w = consistency_weight(cfg.weight, t) if weight is None else weight
    return regression_loss(prediction, target, w, cfg.loss_metric, cfg.huber_c, cfg.cosine_weight)


def cfm_loss(
    net: PseudoVelocityField,
    x: np.ndarray,
    c: Labels,
    rng: np.random.Generator,
    weights: Optional[Weights] = None,
) -> Value:
    """Flow matching: mean ‖F(x_t, t, t, c) − (z − x)‖² with t ~ U[0, 1], z ~ N(0, I)."""
    x = np.asarray(x, dtype=np.float64)
    z = rng.standard_normal(x.shape)
    t = rng.random(x.shape[0])
    x_t = interpolate(x, z, t)
    prediction = net(x_t, t, t, c, weights)
    return regression_loss(prediction, z - x, np.ones(x.shape[0]))


def ct_loss(
    net: PseudoVelocityField,
    x: np.ndarray,
    c: Labels,
    cfg: ConsistencyConfig,
    time_cfg: TimeSamplerConfig,
    rng: np.random.Generator,
    weights: Optional[Weights] = None,
) -> Value:
    """Consistency training with the conditional velocity z − x."""
    batch = draw_consistency_batch(np.asarray(x, dtype=np.float64), c, time_cfg, rng)
    velocity = batch.z - batch.x
    return consistency_residual_loss(net, batch.x_t, batch.t, batch.s, c, velocity, cfg, weights)


def cd_loss(
    net: PseudoVelocityField,
    teacher: Teacher,
    x: np.ndarray,
    c: Labels,
    cfg: ConsistencyConfig,
    time_cfg: TimeSamplerConfig,
    rng: np.random.Generator,
    guidance: Guidance = Guidance(),
    weights: Optional[Weights] = None,
) -> Value:
    """Consistency distillation: the conditional velocity becomes the CFG teacher velocity."""
    batch = draw_consistency_batch(np.asarray(x, dtype=np.float64), c, time_cfg, rng)
    x_t = batch.x_t
    velocity = guided_velocity(teacher, x_t, batch.t, c, guidance)
    return consistency_residual_loss(net, x_t, batch.t, batch.s, c, velocity, cfg, weights)


def emd_consistency_loss(
    net: PseudoVelocityField,
    x_t: np.ndarray,
    t: np.ndarray,
    s: np.ndarray,
    c: Labels,
    velocity: np.ndarray,
    weight_tilde: np.ndarray,
    eps: float = 0.005,
    weights: Optional[Weights] = None,
    target_weights: Optional[Weights] = None,
) -> Value:
    """
    Batch mean of w̃·⟨f_θ(x_t; t, s), sg[d f_θ/dt]⟩ with
    d f/dt = v + (s − t)·dF/dt − F. Its parameter gradient equals that of
    the consistency-training loss weighted by w = w̃·(t − s)/2.
    """
    live = net.params if weights is None else weights
    if target_weights is None:
        target_weights = freeze_weights(live)
    F_frozen = net.evaluate(x_t, t, s, c, target_weights)
    d_flow = consistency_target(net, x_t, t, s, c, velocity, eps, target_weights) - F_frozen
    flow = flow_map_apply(net, x_t, t, s, c, weights)
    per_sample = (flow * stop_gradient(d_flow)).sum(axis=1)
    return (per_sample * np.asarray(weight_tilde, dtype=np.float64)).mean()
