import json

import numpy as np
import pytest

from config.experiment_config import ExperimentConfig
from core.optim import AdamState, EmaState, adam_step
from core.params import ParamStore
from storage.checkpoint import FORMAT_TAG, load_checkpoint, save_checkpoint
from storage.run_log import LOG_COLUMNS, TrainingLog, read_training_log, write_manifest
from utils.exceptions import ConfigError, DivergenceError


def test_checkpoint_round_trip(tmp_path, small_net):
    params = small_net.params
    adam = AdamState.for_params(params, learning_rate=0.01)
    adam_step(params, {name: np.ones_like(p.data) for name, p in params.items()}, adam)
    ema = EmaState.from_params(params, decay=0.99, warmup=True)
    path = save_checkpoint(tmp_path / "ckpt.npz", params, small_net.architecture(), adam, ema, {"method": "cd"})

    loaded = load_checkpoint(path)
    assert loaded.step_count == 1
    assert loaded.architecture == small_net.architecture()
    assert loaded.metadata == {"method": "cd"}
    for name, param in params.items():
        np.testing.assert_array_equal(loaded.params[name], param.data)
        np.testing.assert_array_equal(loaded.adam.first_moment[name], adam.first_moment[name])
        np.testing.assert_array_equal(loaded.ema.shadow[name], ema.shadow[name])
    assert loaded.adam.learning_rate == 0.01
    assert loaded.ema.warmup is True
    assert loaded.param_store().names() == params.names()
    assert not (tmp_path / "ckpt.npz.tmp").exists()


def test_checkpoint_without_optimizer_state(tmp_path):
    store = ParamStore()
    store.add("w", np.array([1.5]))
    loaded = load_checkpoint(save_checkpoint(tmp_path / "plain.npz", store, {}))
    assert loaded.adam is None and loaded.ema is None


def test_foreign_or_missing_checkpoint_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.npz")

    header = json.dumps({"format": "other/1"}).encode("utf-8")
    with open(tmp_path / "foreign.npz", "wb") as handle:
        np.savez(handle, __header__=np.frombuffer(header, dtype=np.uint8))
    with pytest.raises(ConfigError, match="Unsupported"):
        load_checkpoint(tmp_path / "foreign.npz")

    (tmp_path / "garbage.npz").write_bytes(b"not a zip")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "garbage.npz")
    assert FORMAT_TAG.startswith("fsflab")


def test_training_log_writes_header_and_rows(tmp_path):
    log = TrainingLog(tmp_path / "log.csv")
    log.append({"step": 1, "loss_cd": 0.5, "loss_total": 0.5})
    log.append({"step": 3, "loss_cd": 0.25, "loss_total": 0.25, "metric_sw2": 0.1})

    header = (tmp_path / "log.csv").read_text(encoding="utf-8").splitlines()[0]
    assert header.split(",") == LOG_COLUMNS
    rows = read_training_log(tmp_path / "log.csv")
    assert [row["step"] for row in rows] == [1.0, 3.0]
    assert rows[0]["loss_fsf"] is None
    assert rows[1]["metric_sw2"] == 0.1
    assert log.column("loss_cd") == [0.5, 0.25]


def test_training_log_rejects_bad_records(tmp_path):
    log = TrainingLog(tmp_path / "log.csv")
    log.append({"step": 2, "loss_total": 1.0})
    with pytest.raises(ValueError):
        log.append({"step": 2, "loss_total": 1.0})
    with pytest.raises(KeyError):
        log.append({"step": 3, "loss_unknown": 1.0})
    with pytest.raises(DivergenceError):
        log.append({"step": 4, "loss_total": float("inf")})


def test_manifest_echoes_config_and_hash(tmp_path):
    cfg = ExperimentConfig(seed=7)
    manifest = write_manifest(tmp_path / "manifest.json", cfg, 7, {"sec_per_step": 0.01})
    stored = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert stored["config_hash"] == cfg.content_hash() == manifest["config_hash"]
    assert stored["seed"] == 7
    assert stored["sec_per_step"] == 0.01
    assert ExperimentConfig.model_validate(stored["config"]) == cfg
