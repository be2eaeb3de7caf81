"""Adam, EMA shadow weights and IDA parameter blending over ParamStores."""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from core.params import ParamStore, require_same_keys
from utils.exceptions import DomainError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    First/second moments per parameter plus the Adam hyperparameters.

    Attributes:
        learning_rate (float): step size
        beta1 (float): first-moment decay, in (0, 1)
        beta2 (float): second-moment decay, in (0, 1)
        epsilon (float): denominator floor, > 0
    """
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.95
    epsilon: float = 1e-8
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise DomainError(f"Adam betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0:
            raise DomainError(f"Adam epsilon must be positive, got {self.epsilon}")
        if self.learning_rate < 0.0:
            raise DomainError(f"Learning rate must be non-negative, got {self.learning_rate}")

    @classmethod
    def for_params(cls, params: ParamStore, learning_rate: float, **kwargs) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kwargs)
        for name, param in params.items():
            state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
        return state


def adam_step(
    params: ParamStore, grads: Mapping[str, np.ndarray], state: AdamState
) -> Tuple[ParamStore, AdamState]:
    """
    Apply one bias-corrected Adam update in place.

    Raises:
        KeyMismatchError: if grads or moments are keyed differently from params
    """
    require_same_keys(params, grads, "adam_step")
    if not state.first_moment:
        for name, param in params.items():
            state.first_moment[name] = np.zeros_like(param.data)
            state.second_moment[name] = np.zeros_like(param.data)
    require_same_keys(params, state.first_moment, "adam_step moments")

    params.step_count += 1
    step = params.step_count
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    for name, param in params.items():
        g = grads[name]
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        param.data = param.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


@dataclass
class EmaState:
    """Shadow copy of a ParamStore averaged with `decay`."""
    shadow: Dict[str, np.ndarray]
    decay: float
    warmup: bool = False
    updates: int = 0

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise DomainError(f"EMA decay must lie in [0, 1], got {self.decay}")

    @classmethod
    def from_params(cls, params: ParamStore, decay: float, warmup: bool = False) -> "EmaState":
        return cls(shadow=params.arrays(), decay=decay, warmup=warmup)

    def effective_decay(self) -> float:
        """With warm-up the decay ramps as (1+n)/(10+n) until it reaches `decay`."""
        if not self.warmup:
            return self.decay
        return min(self.decay, (1.0 + self.updates) / (10.0 + self.updates))


def ema_update(ema: EmaState, params: ParamStore) -> EmaState:
    """shadow ← d·shadow + (1−d)·param, elementwise."""
    require_same_keys(ema.shadow, params, "ema_update")
    decay = ema.effective_decay()
    for name, param in params.items():
        ema.shadow[name] = decay * ema.shadow[name] + (1.0 - decay) * param.data
    ema.updates += 1
    return ema


def ida_blend(psi: ParamStore, theta: ParamStore, lambda_ida: float) -> ParamStore:
    """Pull the fake network toward the generator: ψ ← λψ + (1−λ)θ."""
    if not 0.0 <= lambda_ida <= 1.0:
        raise DomainError(f"lambda_ida must lie in [0, 1], got {lambda_ida}")
    require_same_keys(psi, theta, "ida_blend")
    for name, param in psi.items():
        param.data = lambda_ida * param.data + (1.0 - lambda_ida) * theta[name].data
    return psi


def shadow_or_live(params: ParamStore, ema: Optional[EmaState], use_ema: bool):
    """Weights for a gradient-free evaluation: the EMA shadow when requested."""
    if use_ema and ema is not None:
        return ema.shadow
    return params.arrays()
