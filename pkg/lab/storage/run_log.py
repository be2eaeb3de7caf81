"""
Run artifacts: the per-interval training log (CSV) and the run manifest (JSON).
"""
import csv
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from config.experiment_config import ExperimentConfig
from utils.exceptions import DivergenceError

logger = logging.getLogger(__name__)

LOG_COLUMNS = [
    "step",
    "loss_cd",
    "loss_fsf",
    "loss_fake",
    "loss_gen",
    "loss_total",
    "lambda_eff",
    "sec_per_step",
    "metric_sw2",
    "metric_mmd",
    "metric_energy",
    "metric_coverage",
]


class TrainingLog:
    """
    Append-only CSV log. Steps must increase strictly and every value must be
    finite; columns a method does not produce stay empty.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.records: List[Dict[str, Any]] = []
        with open(self.path, "w", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerow(LOG_COLUMNS)

    @property
    def last_step(self) -> Optional[int]:
        return self.records[-1]["step"] if self.records else None

    def append(self, record: Dict[str, Any]) -> None:
        unknown = set(record) - set(LOG_COLUMNS)
        if unknown:
            raise KeyError(f"Unknown log columns: {sorted(unknown)}")
        step = int(record["step"])
        if self.last_step is not None and step <= self.last_step:
            raise ValueError(f"Log steps must increase: {step} after {self.last_step}")
        for key, value in record.items():
            if value is not None and key != "step" and not math.isfinite(float(value)):
                raise DivergenceError(f"Non-finite '{key}' at step {step}")
        self.records.append(dict(record))
        with open(self.path, "a", newline="", encoding="utf-8") as handle:
            csv.writer(handle).writerow(["" if record.get(col) is None else repr_value(record[col]) for col in LOG_COLUMNS])

    def column(self, name: str) -> List[Optional[float]]:
        return [record.get(name) for record in self.records]


def repr_value(value: Any) -> str:
    """Shortest round-tripping text for floats, plain text otherwise."""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_training_log(path: Union[str, Path]) -> List[Dict[str, Optional[float]]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            rows.append({key: (float(value) if value != "" else None) for key, value in row.items()})
    return rows


def write_manifest(
    path: Union[str, Path],
    config: ExperimentConfig,
    seed: int,
    extra: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Config echo, seed and the config's content hash, written as UTF-8 JSON."""
    manifest = {
        "config": config.model_dump(mode="json"),
        "config_hash": config.content_hash(),
        "seed": seed,
        "method": config.method.value,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    manifest.update(extra or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return manifest
