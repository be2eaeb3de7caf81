import logging
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np

from core.value import Value
from utils.exceptions import ConfigError, KeyMismatchError

logger = logging.getLogger(__name__)


class ParamStore:
    """
    Named collection of trainable parameters.

    Names are unique, every parameter requires grad and iteration is in
    sorted name order so optimizer and checkpoint passes are deterministic.
    """

    def __init__(self, step_count: int = 0):
        self._params: Dict[str, Value] = {}
        self.step_count = step_count

    def add(self, name: str, data: np.ndarray) -> Value:
        if name in self._params:
            raise ConfigError(f"Duplicate parameter name: {name}")
        param = Value(np.array(data, dtype=np.float64), requires_grad=True, op=f"param:{name}")
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Value:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return sorted(self._params)

    def items(self) -> List[Tuple[str, Value]]:
        return [(name, self._params[name]) for name in self.names()]

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def arrays(self) -> Dict[str, np.ndarray]:
        """Copies of the current parameter values, keyed by name."""
        return {name: param.data.copy() for name, param in self.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        """Overwrite parameter values in place from a name → array map."""
        require_same_keys(self._params, arrays, "load_arrays")
        for name, param in self._params.items():
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != param.data.shape:
                raise KeyMismatchError(
                    f"Shape mismatch for '{name}': {value.shape} vs {param.data.shape}"
                )
            param.data = value.copy()

    def num_parameters(self) -> int:
        return int(sum(param.data.size for param in self._params.values()))

    def copy(self) -> "ParamStore":
        clone = ParamStore(step_count=self.step_count)
        for name, param in self.items():
            clone.add(name, param.data)
        return clone


def require_same_keys(left: Mapping, right: Mapping, context: str) -> None:
    if set(left) != set(right):
        missing = sorted(set(left) ^ set(right))
        raise KeyMismatchError(f"{context}: parameter names differ ({missing})")
