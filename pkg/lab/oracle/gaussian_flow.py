"""
Closed-form probability-flow ODE for Gaussian data N(μ, σ² I), and a
fixed-step Euler integrator used as the numerical oracle elsewhere.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from oracle.gaussian_mixture import GaussianMixtureSpec
from oracle.interpolant import TimeLike, check_unit_interval, time_column
from utils.exceptions import DomainError, NonFiniteError

logger = logging.getLogger(__name__)

VelocityField = Callable[[np.ndarray, TimeLike], np.ndarray]


@dataclass(frozen=True)
class LinearGaussianFlow:
    """
    Marginal path of Gaussian data under the linear interpolant:
    mean m(t) = (1−t)μ and stdev ρ(t) = √((1−t)²σ² + t²).
    """
    mean: Sequence[float]
    stdev: float

    def __post_init__(self):
        if self.stdev <= 0.0:
            raise DomainError("LinearGaussianFlow requires stdev > 0")

    @classmethod
    def from_spec(cls, spec: GaussianMixtureSpec) -> "LinearGaussianFlow":
        if spec.num_components != 1:
            raise DomainError("The closed-form flow map exists only for single-Gaussian data")
        return cls(mean=tuple(spec.means[0]), stdev=spec.stdevs[0])

    @property
    def mu(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=np.float64)

    def path_mean(self, t: TimeLike, like: np.ndarray) -> np.ndarray:
        return (1.0 - time_column(t, like)) * self.mu

    def path_stdev(self, t: TimeLike) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return np.sqrt((1.0 - t) ** 2 * self.stdev ** 2 + t ** 2)

    def velocity(self, x: np.ndarray, t: TimeLike) -> np.ndarray:
        """dx/dt = m'(t) + (ρ'(t)/ρ(t))·(x − m(t)); finite on all of [0, 1]."""
        tt = np.asarray(t, dtype=np.float64)
        rho = self.path_stdev(tt)
        rho_dot = (tt - (1.0 - tt) * self.stdev ** 2) / rho
        ratio = time_column(rho_dot / rho, x)
        return -self.mu + ratio * (x - self.path_mean(t, x))


def analytic_flow_map(flow: LinearGaussianFlow, x_t: np.ndarray, t: TimeLike, s: TimeLike) -> np.ndarray:
    """f(x; t, s) = m(s) + (ρ(s)/ρ(t))·(x − m(t))"""
    check_unit_interval(t)
    check_unit_interval(s, "s")
    x_t = np.asarray(x_t, dtype=np.float64)
    scale = time_column(flow.path_stdev(s) / flow.path_stdev(t), x_t)
    return flow.path_mean(s, x_t) + scale * (x_t - flow.path_mean(t, x_t))


def euler_pf_ode(
    field: VelocityField, x_start: np.ndarray, t_start: float, t_end: float, steps: int
) -> np.ndarray:
    """
    Explicit Euler for dx = v(x, t) dt on a uniform grid from t_start to t_end.

    Raises:
        DomainError: if steps < 1
        NonFiniteError: if the state leaves the reals
    """
    if steps < 1:
        raise DomainError(f"euler_pf_ode needs steps >= 1, got {steps}")
    x = np.array(x_start, dtype=np.float64)
    dt = (t_end - t_start) / steps
    for i in range(steps):
        t = t_start + i * dt
        x = x + dt * field(x, t)
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"Euler state became non-finite at t={t:.6f}")
    return x


def average_velocity_quadrature(
    flow: LinearGaussianFlow,
    x_t: np.ndarray,
    t: float,
    nodes: int = 10_000,
    field: Optional[VelocityField] = None,
) -> np.ndarray:
    """
    (1/t)∫_0^t v(x_τ, τ) dτ along the exact trajectory through x_t, by
    Simpson's rule. Matches the endpoint pseudo-velocity (x_t − f(x_t; t, 0))/t.
    """
    field = field or flow.velocity
    x_t = np.asarray(x_t, dtype=np.float64)
    taus = np.linspace(0.0, t, nodes)
    samples = np.stack([field(analytic_flow_map(flow, x_t, t, tau), tau) for tau in taus])
    return integrate.simpson(samples, x=taus, axis=0) / t
