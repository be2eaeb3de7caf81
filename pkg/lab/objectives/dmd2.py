"""
DMD2 baseline in velocity space: an explicit fake network trained by flow
matching on generator samples, and the normalized generator objective.
"""
import logging
from typing import Optional

import numpy as np

from core.layers import Weights
from core.value import Value, square, stop_gradient
from models.consistency_losses import regression_loss
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from models.rollout import RolloutTrace
from objectives.fsf_dmd import ADAPTIVE_WEIGHT_FLOOR, perturb
from objectives.guidance import Guidance, Teacher, guided_velocity
from oracle.interpolant import interpolate

logger = logging.getLogger(__name__)


def dmd2_fake_loss(
    fake_net: PseudoVelocityField,
    x_hat: np.ndarray,
    c: Labels,
    rng: np.random.Generator,
    weights: Optional[Weights] = None,
) -> Value:
    """
    Flow matching on detached generator samples:
    mean ‖F_ψ(x̂_t, t, t, c) − (z′ − x̂)‖² with t ~ U(0, 1) and fresh z′.
    """
    x_hat = np.asarray(x_hat.data if isinstance(x_hat, Value) else x_hat, dtype=np.float64)
    t = rng.random(x_hat.shape[0])
    noise = rng.standard_normal(x_hat.shape)
    prediction = fake_net(interpolate(x_hat, noise, t), t, t, c, weights)
    return regression_loss(prediction, noise - x_hat, np.ones(x_hat.shape[0]))


def dmd2_generator_objective(
    tilde: Value, v_fake: np.ndarray, v_teacher: np.ndarray, floor: float = ADAPTIVE_WEIGHT_FLOOR
) -> Value:
    """½·mean ‖tilde − sg[tilde − (v_fake − v_teacher)/|tilde − v_teacher|]‖²."""
    norm = np.mean(np.abs(tilde.data - v_teacher), axis=1, keepdims=True)
    direction = (v_fake - v_teacher) / np.maximum(norm, floor)
    target = stop_gradient(tilde.data - direction)
    return square(tilde - target).sum(axis=1).mean() * 0.5


def dmd2_generator_loss(
    trace: RolloutTrace,
    fake_net: PseudoVelocityField,
    teacher: Teacher,
    c: Labels,
    guidance: Guidance,
    rng: np.random.Generator,
    fake_weights: Optional[Weights] = None,
) -> Value:
    """
    Generator step of DMD2. The perturbation time stays uniform, without shifting.
    """
    sample = perturb(trace.endpoint, rng, gamma=1.0)
    v_fake = fake_net.evaluate(sample.x_hat_t, sample.t, sample.t, c, fake_weights)
    v_teacher = guided_velocity(teacher, sample.x_hat_t, sample.t, c, guidance)
    return dmd2_generator_objective(trace.tilde_f, v_fake, v_teacher)
