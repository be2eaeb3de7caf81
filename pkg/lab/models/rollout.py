"""
Few-step generation with a flow map, and the two backward simulations that
turn a generator sample into a training input for distribution matching.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config.experiment_config import SimulationMode
from core.layers import Weights, freeze_weights
from core.value import Value
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from utils.exceptions import DomainError, NonFiniteError

logger = logging.getLogger(__name__)


@dataclass
class RolloutTrace:
    """
    Result of a backward simulation.

    Attributes:
        intermediates (List[Tuple[float, np.ndarray]]): (time, state) pairs, gradient-opaque
        tilde_f (Value): accumulated pseudo-velocity carrying the generator gradient
        endpoint (np.ndarray): generated sample x̂ = z − tilde_f
        z (np.ndarray): starting noise
    """
    intermediates: List[Tuple[float, np.ndarray]]
    tilde_f: Value
    endpoint: np.ndarray
    z: np.ndarray = field(repr=False, default=None)


def _check_steps(steps: int) -> None:
    if steps < 1:
        raise DomainError(f"Number of generation steps must be >= 1, got {steps}")


def _check_state(x: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"Non-finite rollout state at t={t:.4f}")


def rollout(
    net: PseudoVelocityField,
    z: np.ndarray,
    c: Labels,
    steps: int,
    weights: Optional[Weights] = None,
) -> Tuple[np.ndarray, List[Tuple[float, np.ndarray]]]:
    """
    N-step flow-map sampling x̂_{(i−1)/N} = f(x̂_{i/N}; i/N, (i−1)/N, c) from x̂_1 = z.

    Returns:
        Tuple[np.ndarray, List[Tuple[float, np.ndarray]]]: x̂_0 and every visited (time, state)
    """
    _check_steps(steps)
    x = np.array(z, dtype=np.float64)
    visited = [(1.0, x.copy())]
    for i in range(steps, 0, -1):
        t, s = i / steps, (i - 1) / steps
        x = x + (s - t) * net.evaluate(x, t, s, c, weights)
        _check_state(x, s)
        visited.append((s, x.copy()))
    return x, visited


def backward_simulate(
    net: PseudoVelocityField,
    z: np.ndarray,
    c: Labels,
    steps: int,
    weights: Optional[Weights] = None,
    detached_weights: Optional[Weights] = None,
) -> RolloutTrace:
    """
    Flow-map backward simulation: tilde-F = (1/M)·Σ_i F(sg[x̂_{i/M}], i/M, (i−1)/M, c)
    and x̂ = z − tilde-F, so ∇θ x̂ = −∇θ tilde-F.

    Args:
        detached_weights: weights used to advance the stop-gradient states;
            defaults to a snapshot of `weights`
    """
    _check_steps(steps)
    live = net.params if weights is None else weights
    if detached_weights is None:
        detached_weights = freeze_weights(live)
    z = np.asarray(z, dtype=np.float64)
    x = z.copy()
    intermediates = [(1.0, x.copy())]
    tilde = None
    for i in range(steps, 0, -1):
        t, s = i / steps, (i - 1) / steps
        F = net(x, t, s, c, weights)
        tilde = F if tilde is None else tilde + F
        if i > 1:
            x = x + (s - t) * net.evaluate(x, t, s, c, detached_weights)
            _check_state(x, s)
            intermediates.append((s, x.copy()))
    tilde = tilde * (1.0 / steps)
    endpoint = z - tilde.data
    intermediates.append((0.0, endpoint.copy()))
    return RolloutTrace(intermediates=intermediates, tilde_f=tilde, endpoint=endpoint, z=z)


def dmd2_backward_simulate(
    net: PseudoVelocityField,
    z: np.ndarray,
    c: Labels,
    steps: int,
    rng: np.random.Generator,
    weights: Optional[Weights] = None,
    detached_weights: Optional[Weights] = None,
) -> RolloutTrace:
    """
    DMD2-style backward simulation on the grid t_k = k/N.

    The full N-step pipeline runs without gradient: x̂^(0) = z and
    x̂^(i+1) = G(x̂^(i)_t, t) at t = t_{N−i}, where x̂^(i)_t = (1−t)·x̂^(i) + t·z
    re-noises with the same z and G(x, t) = x − t·F(x; t, 0). A graded time
    t_{N−j} with j ~ U{0..N−1} is drawn, x̂^(N) is re-noised there with z, and
    one generator call carries the gradient. The result is expressed as a
    trace with tilde-F = z − x̂.
    """
    _check_steps(steps)
    live = net.params if weights is None else weights
    if detached_weights is None:
        detached_weights = freeze_weights(live)
    z = np.asarray(z, dtype=np.float64)
    intermediates = []
    x_hat = z.copy()
    for i in range(steps):
        t = (steps - i) / steps
        x_t = (1.0 - t) * x_hat + t * z
        intermediates.append((t, x_t.copy()))
        x_hat = x_t - t * net.evaluate(x_t, t, 0.0, c, detached_weights)
        _check_state(x_hat, 0.0)
    j = int(rng.integers(steps))
    t_graded = (steps - j) / steps
    x_in = (1.0 - t_graded) * x_hat + t_graded * z
    intermediates.append((t_graded, x_in.copy()))
    F = net(x_in, t_graded, 0.0, c, weights)
    tilde = Value(z - x_in, op="const") + F * t_graded
    endpoint = z - tilde.data
    _check_state(endpoint, 0.0)
    intermediates.append((0.0, endpoint.copy()))
    return RolloutTrace(intermediates=intermediates, tilde_f=tilde, endpoint=endpoint, z=z)


def simulate(
    net: PseudoVelocityField,
    z: np.ndarray,
    c: Labels,
    mode: SimulationMode,
    steps: int,
    rng: np.random.Generator,
    weights: Optional[Weights] = None,
) -> RolloutTrace:
    """Generator sample for distribution matching under the configured simulation mode."""
    if mode == SimulationMode.NONE:
        return backward_simulate(net, z, c, 1, weights)
    if mode == SimulationMode.DMD2:
        return dmd2_backward_simulate(net, z, c, steps, rng, weights)
    return backward_simulate(net, z, c, steps, weights)
