from typing import Dict, Mapping, Union

import numpy as np

from core.params import ParamStore
from core.value import Value, silu

Weights = Mapping[str, Union[Value, np.ndarray]]


def as_value(weight: Union[Value, np.ndarray]) -> Value:
    """Plain arrays (e.g. an EMA shadow) enter the graph as constants."""
    return weight if isinstance(weight, Value) else Value(weight, op="const")


class Dense:
    """Affine layer whose parameters live in a ParamStore under `<prefix>.weight/.bias`."""

    def __init__(self, prefix: str, in_features: int, out_features: int):
        self.prefix = prefix
        self.in_features = in_features
        self.out_features = out_features

    @property
    def weight_name(self) -> str:
        return f"{self.prefix}.weight"

    @property
    def bias_name(self) -> str:
        return f"{self.prefix}.bias"

    def register(self, store: ParamStore, rng: np.random.Generator, zero: bool = False) -> None:
        if zero:
            weight = np.zeros((self.in_features, self.out_features))
        else:
            # Glorot normal
            scale = np.sqrt(2.0 / (self.in_features + self.out_features))
            weight = rng.normal(0.0, scale, size=(self.in_features, self.out_features))
        store.add(self.weight_name, weight)
        store.add(self.bias_name, np.zeros((1, self.out_features)))

    def __call__(self, x: Value, weights: Weights) -> Value:
        return x @ as_value(weights[self.weight_name]) + as_value(weights[self.bias_name])


class MLP:
    """Stack of Dense layers with SiLU between them and a linear head."""

    def __init__(self, prefix: str, in_features: int, hidden_width: int, depth: int, out_features: int):
        widths = [in_features] + [hidden_width] * depth
        self.hidden = [
            Dense(f"{prefix}.hidden{i}", widths[i], widths[i + 1]) for i in range(depth)
        ]
        self.head = Dense(f"{prefix}.head", widths[-1], out_features)

    def register(self, store: ParamStore, rng: np.random.Generator, zero_head: bool = False) -> None:
        for layer in self.hidden:
            layer.register(store, rng)
        self.head.register(store, rng, zero=zero_head)

    def __call__(self, x: Value, weights: Weights) -> Value:
        for layer in self.hidden:
            x = silu(layer(x, weights))
        return self.head(x, weights)


def freeze_weights(weights: Weights) -> Dict[str, np.ndarray]:
    """Snapshot of current values for the stop-gradient branches."""
    return {
        name: (w.data.copy() if isinstance(w, Value) else np.array(w, dtype=np.float64))
        for name, w in weights.items()
    }
