import json
from typing import Any, Dict, Sequence

import numpy as np
import pytest

from config.experiment_config import ExperimentConfig, build_config
from config.lab_settings import get_lab_settings
from config.presets import gm8_ring
from models.pseudo_velocity_net import PseudoVelocityNet
from services.training_service import run_training

TINY_RUN: Dict[str, Any] = {
    "dataset": {"preset": "gm8-ring"},
    "steps": 4,
    "batch_size": 16,
    "learning_rate": 1e-3,
    "net": {"hidden_width": 16, "depth": 2, "time_frequencies": 3, "class_embed_dim": 4},
    "log_every": 2,
    "fsf": {"sim_steps": 2},
    "dmd2": {"ttur_ratio": 2},
    "eval": {"every": 0, "n_eval": 64, "snapshot_samples": 32, "projections": 16, "teacher_euler_steps": 4},
}


@pytest.fixture(autouse=True)
def clean_settings(monkeypatch):
    """Environment-derived settings must not leak between tests."""
    for name in ("FSF_SEED", "FSF_OUT_DIR", "FSF_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    get_lab_settings.cache_clear()
    yield
    get_lab_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def ring_spec():
    return gm8_ring()


@pytest.fixture
def small_net(ring_spec, rng) -> PseudoVelocityNet:
    return PseudoVelocityNet.create(
        ring_spec.dimension,
        ring_spec.num_components,
        rng,
        zero_init_output=False,
        hidden_width=16,
        depth=2,
        time_frequencies=3,
        class_embed_dim=4,
    )


def tiny_config(out_dir, method: str, overrides: Sequence[str] = ()) -> ExperimentConfig:
    return build_config(TINY_RUN, [f"method={method}", f"output_dir={out_dir}", *overrides])


@pytest.fixture
def make_config(tmp_path):
    def factory(method: str, *overrides: str, name: str = "run") -> ExperimentConfig:
        return tiny_config(tmp_path / name, method, overrides)

    return factory


@pytest.fixture(scope="session")
def teacher_run(tmp_path_factory):
    """A tiny flow-matching teacher shared by the sampling, evaluation and distillation tests."""
    out_dir = tmp_path_factory.mktemp("teacher")
    return run_training(tiny_config(out_dir, "teacher-cfm"))


@pytest.fixture(scope="session")
def fsf_run(tmp_path_factory, teacher_run):
    out_dir = tmp_path_factory.mktemp("fsf")
    cfg = tiny_config(out_dir, "fsf-dmd")
    return run_training(cfg, teacher_source=str(teacher_run.checkpoint_path), init_source="teacher")


@pytest.fixture
def tiny_base() -> Dict[str, Any]:
    """Raw config of a tiny run, for code paths that build configs themselves."""
    return json.loads(json.dumps(TINY_RUN))
