"""
Linear interpolant x_t = (1−t)x + t·z between data (t=0) and N(0, I) noise (t=1),
and the conversions between velocity and score it induces.

All functions accept a single point (shape (d,)) with scalar t, or a batch
(shape (n, d)) with scalar t or per-row t of shape (n,).
"""
from dataclasses import dataclass
from typing import Union

import numpy as np

from utils.exceptions import DomainError

TimeLike = Union[float, np.ndarray]

# times closer than this to a singular endpoint are rejected, never clamped
T_MIN = 1e-6


@dataclass(frozen=True)
class TimePair:
    """Source time t and target time s of a flow map, ordered so that s ≤ t."""
    t: TimeLike
    s: TimeLike

    def __post_init__(self):
        t, s = np.asarray(self.t), np.asarray(self.s)
        if np.any(t < 0.0) or np.any(t > 1.0) or np.any(s < 0.0) or np.any(s > 1.0):
            raise DomainError("TimePair entries must lie in [0, 1]")
        if np.any(s > t):
            raise DomainError("TimePair requires s <= t")


def time_column(t: TimeLike, x: np.ndarray) -> np.ndarray:
    """Shape t so it broadcasts against x along the feature axis."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (np.ndim(x) - t.ndim))


def check_unit_interval(t: TimeLike, name: str = "t") -> None:
    t = np.asarray(t)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError(f"{name} must lie in [0, 1]")


def check_positive_time(t: TimeLike, name: str = "t") -> None:
    if np.any(np.asarray(t) < T_MIN):
        raise DomainError(f"{name} must be >= {T_MIN}, got min {np.min(t)}")


def interpolate(x: np.ndarray, z: np.ndarray, t: TimeLike) -> np.ndarray:
    check_unit_interval(t)
    tc = time_column(t, x)
    return (1.0 - tc) * x + tc * z


def conditional_velocity(x: np.ndarray, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """v_t(x_t | x) = (x_t − x) / t, which equals z − x on the interpolant."""
    check_positive_time(t)
    return (x_t - x) / time_column(t, x_t)


def score_from_velocity(v: np.ndarray, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """s = −(x_t + (1−t)·v) / t"""
    check_positive_time(t)
    tc = time_column(t, x_t)
    return -(x_t + (1.0 - tc) * v) / tc


def velocity_from_score(s: np.ndarray, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """v = −(t·s + x_t) / (1−t); undefined at both endpoints."""
    check_positive_time(t)
    if np.any(np.asarray(t) > 1.0 - T_MIN):
        raise DomainError("velocity_from_score requires t < 1")
    tc = time_column(t, x_t)
    return -(tc * s + x_t) / (1.0 - tc)


def gamma_weight(t: TimeLike) -> TimeLike:
    """γ_t = (1−t)/t, the score-to-velocity factor of the DMD gradient."""
    check_positive_time(t)
    return (1.0 - np.asarray(t, dtype=np.float64)) / t
