"""
Frozen teachers and the classifier-free-guidance blend of their velocities.
"""
import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from config.experiment_config import CfgRangeMode, FsfConfig
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from oracle.gaussian_mixture import GaussianMixtureSpec, gm_class_velocity
from oracle.interpolant import TimeLike, check_unit_interval

logger = logging.getLogger(__name__)


class Teacher:
    """Frozen velocity v_Φ(x_t; t, c); label K means the null class ∅."""
    num_classes: int = 0

    @property
    def null_label(self) -> int:
        return self.num_classes

    def velocity(self, x_t: np.ndarray, t: TimeLike, c: Labels) -> np.ndarray:
        raise NotImplementedError


class NetworkTeacher(Teacher):
    """A trained network evaluated on the diagonal s = t with fixed weights."""

    def __init__(self, net: PseudoVelocityField, weights: Optional[Mapping[str, np.ndarray]] = None):
        self.net = net
        self.weights = weights if weights is not None else net.params.arrays()
        self.num_classes = net.num_classes

    def velocity(self, x_t: np.ndarray, t: TimeLike, c: Labels) -> np.ndarray:
        return self.net.evaluate(x_t, t, t, c, self.weights)


class AnalyticTeacher(Teacher):
    """
    Exact class-conditional velocity of a Gaussian mixture: label k conditions
    on component k, ∅ uses the whole mixture.
    """

    def __init__(self, spec: GaussianMixtureSpec):
        self.spec = spec
        self.num_classes = spec.num_components

    def velocity(self, x_t: np.ndarray, t: TimeLike, c: Labels) -> np.ndarray:
        """
        Raises:
            DomainError: t outside [T_MIN, 1]
        """
        x_t = np.asarray(x_t, dtype=np.float64)
        n = x_t.shape[0]
        labels = np.full(n, self.null_label) if c is None else np.broadcast_to(np.asarray(c), (n,))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        check_unit_interval(t)
        return gm_class_velocity(self.spec, x_t, t, labels)


@dataclass(frozen=True)
class Guidance:
    """CFG scale ω applied on t ∈ [t_lo, t_hi) (or everywhere with ALWAYS)."""
    scale: float = 1.0
    t_range: Tuple[float, float] = (0.0, 1.0)
    mode: CfgRangeMode = CfgRangeMode.BLEND_INSIDE

    @classmethod
    def from_config(cls, cfg: FsfConfig) -> "Guidance":
        return cls(scale=cfg.cfg_scale, t_range=tuple(cfg.cfg_range), mode=cfg.cfg_range_mode)


def cfg_velocity(
    teacher: Teacher,
    x_t: np.ndarray,
    t: TimeLike,
    c: Labels,
    omega: float,
    t_range: Tuple[float, float] = (0.0, 1.0),
    mode: CfgRangeMode = CfgRangeMode.BLEND_INSIDE,
) -> np.ndarray:
    """
    ω·v(x_t, t, c) + (1 − ω)·v(x_t, t, ∅) inside the range, v(x_t, t, c) outside.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    n = x_t.shape[0]
    conditional = teacher.velocity(x_t, t, c)
    if omega == 1.0:
        return conditional
    unconditional = teacher.velocity(x_t, t, np.full(n, teacher.null_label))
    blended = omega * conditional + (1.0 - omega) * unconditional
    if mode == CfgRangeMode.ALWAYS:
        return blended
    tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
    inside = (tt >= t_range[0]) & (tt < t_range[1])
    return np.where(inside[:, None], blended, conditional)


def guided_velocity(teacher: Teacher, x_t: np.ndarray, t: TimeLike, c: Labels, guidance: Guidance) -> np.ndarray:
    return cfg_velocity(teacher, x_t, t, c, guidance.scale, guidance.t_range, guidance.mode)
