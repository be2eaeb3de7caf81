"""
Fake-score-network-free distribution matching.

The fake velocity of DMD is replaced by the generator's own endpoint
pseudo-velocity F(x̂_t; t, 0), so the only networks involved are the
generator (or its EMA shadow) and the frozen teacher.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from config.experiment_config import WeightMode
from core.layers import Weights
from core.value import Value, square, stop_gradient
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from models.rollout import RolloutTrace
from objectives.guidance import Guidance, Teacher, guided_velocity
from oracle.interpolant import T_MIN, TimeLike, interpolate
from utils.exceptions import DomainError

logger = logging.getLogger(__name__)

ADAPTIVE_WEIGHT_FLOOR = 1e-3


def timestep_shift(u: TimeLike, gamma: float) -> TimeLike:
    """γu / ((γ − 1)u + 1): a monotone bijection of [0, 1) that leans toward t = 1."""
    if gamma < 1.0:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    u = np.asarray(u, dtype=np.float64)
    return gamma * u / ((gamma - 1.0) * u + 1.0)


def sample_open_unit(rng: np.random.Generator, n: int, margin: float = T_MIN) -> np.ndarray:
    """U(0, 1) draws, redrawing anything within `margin` of either endpoint."""
    u = rng.random(n)
    bad = (u < margin) | (u > 1.0 - margin)
    while np.any(bad):
        u[bad] = rng.random(int(bad.sum()))
        bad = (u < margin) | (u > 1.0 - margin)
    return u


def sample_dmd_time(rng: np.random.Generator, n: int, gamma: float) -> np.ndarray:
    return timestep_shift(sample_open_unit(rng, n), gamma)


@dataclass
class PerturbedSample:
    """x̂_t = (1 − t)·x̂ + t·z′ built from a generator sample."""
    x_hat_t: np.ndarray
    t: np.ndarray
    noise: np.ndarray


def perturb(x_hat: np.ndarray, rng: np.random.Generator, gamma: float = 1.0) -> PerturbedSample:
    """Shifted time first, then fresh noise."""
    t = sample_dmd_time(rng, x_hat.shape[0], gamma)
    noise = rng.standard_normal(x_hat.shape)
    return PerturbedSample(x_hat_t=interpolate(x_hat, noise, t), t=t, noise=noise)


def fsf_delta_terms(
    net: PseudoVelocityField,
    teacher: Teacher,
    x_hat_t: np.ndarray,
    t: np.ndarray,
    c: Labels,
    guidance: Guidance,
    weights: Optional[Weights] = None,
    fake_labels: Labels = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        Tuple[np.ndarray, np.ndarray]: (Δ, guided teacher velocity), both plain arrays
    """
    fake_c = c if fake_labels is None else fake_labels
    fake = net.evaluate(x_hat_t, t, 0.0, fake_c, weights)
    real = guided_velocity(teacher, x_hat_t, t, c, guidance)
    return fake - real, real


def fsf_delta(
    net: PseudoVelocityField,
    teacher: Teacher,
    x_hat_t: np.ndarray,
    t: np.ndarray,
    c: Labels,
    guidance: Guidance,
    weights: Optional[Weights] = None,
    fake_labels: Labels = None,
) -> np.ndarray:
    """Δ = F(x̂_t; t, 0, c) − v_cfg(x̂_t; t, c), gradient-opaque."""
    return fsf_delta_terms(net, teacher, x_hat_t, t, c, guidance, weights, fake_labels)[0]


def scratch_delta(
    net: PseudoVelocityField,
    x_hat_t: np.ndarray,
    t: np.ndarray,
    c: Labels,
    weights: Optional[Weights] = None,
) -> np.ndarray:
    """Self-teacher difference F(x̂_t; t, 0) − F(x̂_t; t, t), gradient-opaque."""
    endpoint = net.evaluate(x_hat_t, t, 0.0, c, weights)
    instant = net.evaluate(x_hat_t, t, t, c, weights)
    return endpoint - instant


def fsf_dmd_loss(
    trace: Union[RolloutTrace, Value], delta: np.ndarray, w_t: Union[float, np.ndarray] = 1.0
) -> Value:
    """
    Batch mean of w_t·‖tilde-F − sg[tilde-F − Δ]‖²; its parameter gradient
    is 2·w_t·Δᵀ ∂tilde-F/∂θ.
    """
    tilde = trace.tilde_f if isinstance(trace, RolloutTrace) else trace
    target = stop_gradient(tilde.data - np.asarray(delta, dtype=np.float64))
    per_sample = square(tilde - target).sum(axis=1)
    return (per_sample * np.broadcast_to(np.asarray(w_t, dtype=np.float64), per_sample.shape)).mean()


def adaptive_weight(
    tilde_f: np.ndarray, v_teacher: np.ndarray, floor: float = ADAPTIVE_WEIGHT_FLOOR
) -> np.ndarray:
    """Reciprocal per-sample mean |tilde-F − v_teacher|, floored; gradient-opaque."""
    tilde_f = tilde_f.data if isinstance(tilde_f, Value) else np.asarray(tilde_f, dtype=np.float64)
    diff = np.mean(np.abs(tilde_f - np.asarray(v_teacher, dtype=np.float64)), axis=-1)
    return 1.0 / np.maximum(diff, floor)


def dmd_weight(
    mode: WeightMode,
    t: np.ndarray,
    tilde_f: Optional[np.ndarray] = None,
    v_teacher: Optional[np.ndarray] = None,
    constant: float = 1.0,
) -> np.ndarray:
    """Per-sample w_t for the configured schedule; γ_t and (1 − t) are absorbed here."""
    t = np.asarray(t, dtype=np.float64)
    if mode == WeightMode.CONSTANT:
        return np.full(t.shape, constant)
    if mode == WeightMode.COSINE:
        return np.cos(t)
    adaptive = adaptive_weight(tilde_f, v_teacher)
    if mode == WeightMode.ADAPTIVE_COSINE:
        return np.cos(t) * adaptive
    return adaptive
