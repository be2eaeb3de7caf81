"""
Parameter-free pseudo-velocity fields with known answers, used to inject
oracles where a trained network would normally go.
"""
from typing import Callable, Optional

import numpy as np

from core.layers import Weights
from models.pseudo_velocity_net import Labels, PseudoVelocityField
from oracle.gaussian_flow import LinearGaussianFlow, analytic_flow_map
from oracle.interpolant import TimeLike, time_column


class ConstantField(PseudoVelocityField):
    """F ≡ c for every input."""

    def __init__(self, constant, num_classes: int = 0):
        self.constant = np.asarray(constant, dtype=np.float64)
        super().__init__(num_classes)

    def evaluate(self, x, t, s, c=None, weights=None) -> np.ndarray:
        return np.broadcast_to(self.constant, np.shape(x)).copy()


class AnalyticFlowMapField(PseudoVelocityField):
    """
    Exact pseudo-velocity of single-Gaussian data:
    F(x; t, s) = (x − f(x; t, s)) / (t − s), and the exact velocity at s = t.
    """

    def __init__(self, flow: LinearGaussianFlow, num_classes: int = 1):
        self.flow = flow
        super().__init__(num_classes)

    def evaluate(
        self, x: np.ndarray, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
    ) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        ss = np.broadcast_to(np.asarray(s, dtype=np.float64), (n,))
        gap = tt - ss
        same = gap == 0.0
        safe_gap = np.where(same, 1.0, gap)
        average = (x - analytic_flow_map(self.flow, x, tt, ss)) / time_column(safe_gap, x)
        instant = self.flow.velocity(x, tt)
        return np.where(same[:, None], instant, average)


class CallableField(PseudoVelocityField):
    """Wrap a plain function F(x, t, s, c) -> array."""

    def __init__(self, fn: Callable[..., np.ndarray], num_classes: int = 0):
        self.fn = fn
        super().__init__(num_classes)

    def evaluate(self, x, t, s, c=None, weights=None) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=np.float64), t, s, c), dtype=np.float64)
