"""
Checkpoint container.

A checkpoint is an uncompressed `.npz` archive: one little-endian float64
entry per array (`param/<name>`, `adam_m/<name>`, `adam_v/<name>`,
`ema/<name>`) plus `__header__`, a UTF-8 JSON blob carrying the format tag,
the network architecture and optimizer/EMA scalars.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from core.optim import AdamState, EmaState
from core.params import ParamStore
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)

FORMAT_TAG = "fsflab-ckpt/1"
_LE_F64 = np.dtype("<f8")


@dataclass
class Checkpoint:
    """Everything needed to resume or evaluate a network."""
    params: Dict[str, np.ndarray]
    architecture: Dict[str, Any]
    step_count: int = 0
    adam: Optional[AdamState] = None
    ema: Optional[EmaState] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def param_store(self) -> ParamStore:
        store = ParamStore(step_count=self.step_count)
        for name in sorted(self.params):
            store.add(name, self.params[name])
        return store


def save_checkpoint(
    path: Union[str, Path],
    params: ParamStore,
    architecture: Dict[str, Any],
    adam: Optional[AdamState] = None,
    ema: Optional[EmaState] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write a checkpoint atomically (temp file then rename).

    Returns:
        Path: the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": FORMAT_TAG,
        "architecture": architecture,
        "step_count": params.step_count,
        "metadata": metadata or {},
        "adam": None,
        "ema": None,
    }
    entries: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        entries[f"param/{name}"] = param.data.astype(_LE_F64)
    if adam is not None:
        header["adam"] = {
            "learning_rate": adam.learning_rate,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
        }
        for name in sorted(adam.first_moment):
            entries[f"adam_m/{name}"] = adam.first_moment[name].astype(_LE_F64)
            entries[f"adam_v/{name}"] = adam.second_moment[name].astype(_LE_F64)
    if ema is not None:
        header["ema"] = {"decay": ema.decay, "warmup": ema.warmup, "updates": ema.updates}
        for name in sorted(ema.shadow):
            entries[f"ema/{name}"] = ema.shadow[name].astype(_LE_F64)
    entries["__header__"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)

    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "wb") as handle:
        np.savez(handle, **entries)
    os.replace(tmp_path, path)
    logger.debug(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint written by `save_checkpoint`.

    Raises:
        ConfigError: if the file is missing or carries another format tag
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            header = json.loads(archive["__header__"].tobytes().decode("utf-8"))
            if header.get("format") != FORMAT_TAG:
                raise ConfigError(f"Unsupported checkpoint format '{header.get('format')}' in {path}")
            groups: Dict[str, Dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}, "ema": {}}
            for key in archive.files:
                if key == "__header__":
                    continue
                group, name = key.split("/", 1)
                groups[group][name] = np.array(archive[key], dtype=_LE_F64)
    except ConfigError:
        raise
    except Exception as e:
        logger.error(f"Failed to read checkpoint {path}: {str(e)}")
        raise ConfigError(f"Unreadable checkpoint {path}: {str(e)}") from e

    adam = None
    if header["adam"] is not None:
        adam = AdamState(**header["adam"])
        adam.first_moment = groups["adam_m"]
        adam.second_moment = groups["adam_v"]
    ema = None
    if header["ema"] is not None:
        ema = EmaState(
            shadow=groups["ema"],
            decay=header["ema"]["decay"],
            warmup=header["ema"]["warmup"],
            updates=header["ema"]["updates"],
        )
    return Checkpoint(
        params=groups["param"],
        architecture=header["architecture"],
        step_count=header["step_count"],
        adam=adam,
        ema=ema,
        metadata=header["metadata"],
    )
