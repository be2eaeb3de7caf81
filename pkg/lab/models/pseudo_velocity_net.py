"""
Two-time pseudo-velocity network F(x_t; t, s, c).

At s = t the output is an instantaneous velocity; for s < t it is the average
velocity that moves x_t to the flow-map value x_s = x_t + (s − t)·F.
"""
import logging
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from core.layers import MLP, Weights, as_value
from core.params import ParamStore
from core.value import Value, concat, no_grad, take_rows
from oracle.interpolant import TimeLike

logger = logging.getLogger(__name__)

Labels = Optional[Union[int, np.ndarray]]

CLASS_TABLE = "embed.class"


class PseudoVelocityField:
    """
    Anything that produces a pseudo-velocity. Subclasses provide `evaluate`;
    parameter-free fields enter graphs as constants.
    """
    num_classes: int = 0

    def __init__(self, num_classes: int = 0):
        self.num_classes = num_classes
        self.params = ParamStore()

    @property
    def null_label(self) -> int:
        return self.num_classes

    def evaluate(
        self, x: np.ndarray, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
    ) -> np.ndarray:
        raise NotImplementedError

    def __call__(
        self, x, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
    ) -> Value:
        data = x.data if isinstance(x, Value) else x
        return Value(self.evaluate(data, t, s, c, weights), op="field")


class PseudoVelocityNet(PseudoVelocityField):
    """
    MLP over [x, sin/cos(ω t), sin/cos(ω s), class embedding]. The class table
    has K + 1 rows; row K is the null class ∅.

    Attributes:
        dimension (int): data dimension d
        num_classes (int): number of real classes K
        params (ParamStore): trainable parameters
    """

    def __init__(
        self,
        dimension: int,
        num_classes: int,
        hidden_width: int = 128,
        depth: int = 3,
        time_frequencies: int = 8,
        max_frequency: float = 8.0,
        class_embed_dim: int = 16,
        params: Optional[ParamStore] = None,
    ):
        super().__init__(num_classes)
        self.dimension = dimension
        self.hidden_width = hidden_width
        self.depth = depth
        self.time_frequencies = time_frequencies
        self.max_frequency = max_frequency
        self.class_embed_dim = class_embed_dim
        self.frequencies = np.pi * np.geomspace(0.5, max_frequency, time_frequencies)
        in_features = dimension + 4 * time_frequencies + class_embed_dim
        self.trunk = MLP("trunk", in_features, hidden_width, depth, dimension)
        self.params = params if params is not None else ParamStore()

    @classmethod
    def create(
        cls,
        dimension: int,
        num_classes: int,
        rng: np.random.Generator,
        zero_init_output: bool = True,
        **architecture: Any,
    ) -> "PseudoVelocityNet":
        net = cls(dimension, num_classes, **architecture)
        net.params.add(CLASS_TABLE, rng.normal(0.0, 1.0, size=(num_classes + 1, net.class_embed_dim)))
        net.trunk.register(net.params, rng, zero_head=zero_init_output)
        logger.debug(f"Created PseudoVelocityNet with {net.params.num_parameters()} parameters")
        return net

    @classmethod
    def from_architecture(
        cls, architecture: Mapping[str, Any], arrays: Optional[Mapping[str, np.ndarray]] = None
    ) -> "PseudoVelocityNet":
        """Rebuild a network from a checkpoint header (and its parameter arrays)."""
        net = cls(**architecture)
        if arrays is not None:
            for name in sorted(arrays):
                net.params.add(name, arrays[name])
        return net

    def architecture(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "num_classes": self.num_classes,
            "hidden_width": self.hidden_width,
            "depth": self.depth,
            "time_frequencies": self.time_frequencies,
            "max_frequency": self.max_frequency,
            "class_embed_dim": self.class_embed_dim,
        }

    def with_params(self, params: ParamStore) -> "PseudoVelocityNet":
        """Same architecture bound to another ParamStore."""
        return PseudoVelocityNet(**self.architecture(), params=params)

    def _time_features(self, t: TimeLike, n: int) -> np.ndarray:
        tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (n,))
        phase = tt[:, None] * self.frequencies[None, :]
        return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)

    def _labels(self, c: Labels, n: int) -> np.ndarray:
        if c is None:
            return np.full(n, self.null_label, dtype=np.int64)
        return np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))

    def __call__(
        self, x, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
    ) -> Value:
        """
        Forward pass recording a graph.

        Args:
            x: batch (n, d) as array or Value
            t, s: scalars or per-row arrays of shape (n,)
            c: labels in 0..K (K is ∅); None means ∅ for every row
            weights: parameter override, e.g. an EMA shadow; defaults to self.params

        Returns:
            Value: pseudo-velocity of shape (n, d)
        """
        weights = self.params if weights is None else weights
        x = as_value(x)
        n = x.shape[0]
        embed = take_rows(as_value(weights[CLASS_TABLE]), self._labels(c, n))
        features = concat(
            [
                x,
                Value(self._time_features(t, n), op="embed_t"),
                Value(self._time_features(s, n), op="embed_s"),
                embed,
            ],
            axis=1,
        )
        return self.trunk(features, weights)

    def evaluate(
        self, x: np.ndarray, t: TimeLike, s: TimeLike, c: Labels = None, weights: Optional[Weights] = None
    ) -> np.ndarray:
        """Gradient-free forward pass returning a plain array."""
        with no_grad():
            return self(np.asarray(x, dtype=np.float64), t, s, c, weights).data
