"""
Experiment configuration: every knob of a training run, loadable from a JSON
file with dotted-key overrides and serializable back without loss.
"""
import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from config.presets import DatasetPreset, g1, gm2_sym, gm8_ring
from oracle.gaussian_mixture import GaussianMixtureSpec
from utils.exceptions import ConfigError

logger = logging.getLogger(__name__)


class Method(str, Enum):
    """Training method of a run"""
    TEACHER_CFM = "teacher-cfm"
    CT = "ct"
    CD = "cd"
    FSF_DMD = "fsf-dmd"
    DMD2 = "dmd2"
    FSF_SCRATCH = "fsf-scratch"


class WeightMode(str, Enum):
    """Per-sample weight w_t of the distribution-matching term"""
    CONSTANT = "constant"
    ADAPTIVE = "adaptive"
    COSINE = "cosine"
    ADAPTIVE_COSINE = "adaptive-cosine"


class ConsistencyWeight(str, Enum):
    """Weight w_{t,s} of the consistency terms"""
    COSINE = "cosine"
    CONSTANT = "constant"


class LossMetric(str, Enum):
    SQUARED = "squared"
    PSEUDO_HUBER_COSINE = "pseudo-huber-cosine"


class SimulationMode(str, Enum):
    """How the generator sample fed to distribution matching is produced"""
    FLOWMAP = "flowmap"
    DMD2 = "dmd2"
    NONE = "none"


class CfgRangeMode(str, Enum):
    """BLEND_INSIDE: guided blend for t in [t_lo, t_hi), conditional-only elsewhere"""
    BLEND_INSIDE = "blend-inside"
    ALWAYS = "always"


class FakeSideLabel(str, Enum):
    CLASS = "class"
    NULL = "null"


class _Strict(BaseModel):
    class Config:
        extra = "forbid"


class DatasetConfig(_Strict):
    """Preset data distribution plus the overrides that preset accepts"""
    preset: DatasetPreset = DatasetPreset.GM8_RING
    mean: Optional[List[float]] = None
    stdev: Optional[float] = Field(default=None, gt=0)
    radius: Optional[float] = Field(default=None, gt=0)
    offset: Optional[float] = None
    spec: Optional[GaussianMixtureSpec] = None

    @model_validator(mode="after")
    def _custom_needs_spec(self) -> "DatasetConfig":
        if self.preset == DatasetPreset.CUSTOM and self.spec is None:
            raise ValueError("preset 'custom' requires an explicit spec")
        return self

    def build_spec(self) -> GaussianMixtureSpec:
        if self.preset == DatasetPreset.CUSTOM:
            return self.spec
        if self.preset == DatasetPreset.GM8_RING:
            return gm8_ring(radius=self.radius or 1.0, stdev=self.stdev or 0.05)
        if self.preset == DatasetPreset.GM2_SYM:
            return gm2_sym(offset=self.offset if self.offset is not None else 1.0, stdev=self.stdev or 0.3)
        return g1(mean=self.mean, stdev=self.stdev or 1.0)


class NetConfig(_Strict):
    """Architecture of a pseudo-velocity network"""
    hidden_width: int = Field(default=128, ge=1)
    depth: int = Field(default=3, ge=1)
    time_frequencies: int = Field(default=8, ge=1)
    max_frequency: float = Field(default=8.0, gt=0)
    class_embed_dim: int = Field(default=16, ge=1)
    zero_init_output: bool = True


class TimeSamplerConfig(_Strict):
    beta_alpha: float = Field(default=0.8, gt=0)
    beta_beta: float = Field(default=1.0, gt=0)
    mask_prob: float = Field(default=0.5, ge=0, le=1)
    uniform: bool = False


class ConsistencyConfig(_Strict):
    jvp_eps: float = Field(default=0.005, gt=0)
    weight: ConsistencyWeight = ConsistencyWeight.COSINE
    loss_metric: LossMetric = LossMetric.SQUARED
    huber_c: float = Field(default=0.03, gt=0)
    cosine_weight: float = Field(default=1.0, ge=0)
    label_dropout: float = Field(default=0.1, ge=0, le=1)


class FsfConfig(_Strict):
    """Distribution-matching knobs of FSF-DMD"""
    lambda_dmd: float = Field(default=0.05, ge=0)
    cd_weight: float = Field(default=1.0, ge=0)
    weight_mode: WeightMode = WeightMode.ADAPTIVE
    weight_constant: float = Field(default=1.0, ge=0)
    gamma_shift: float = Field(default=10.0, ge=1)
    cfg_scale: float = 6.0
    cfg_range: Tuple[float, float] = (0.0, 0.9)
    cfg_range_mode: CfgRangeMode = CfgRangeMode.BLEND_INSIDE
    sim_steps: int = Field(default=2, ge=1)
    simulation: SimulationMode = SimulationMode.FLOWMAP
    use_ema_fake_side: bool = True
    fake_side_label: FakeSideLabel = FakeSideLabel.CLASS
    lambda_warmup_steps: int = Field(default=0, ge=0)
    allow_without_cd: bool = False

    @model_validator(mode="after")
    def _check_range(self) -> "FsfConfig":
        lo, hi = self.cfg_range
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"cfg_range must satisfy 0 <= lo < hi <= 1, got {self.cfg_range}")
        return self


class DmdBaselineConfig(_Strict):
    """DMD2 baseline: explicit fake network trained under TTUR"""
    ttur_ratio: int = Field(default=5, ge=1, le=5)
    ida_lambda: Optional[float] = Field(default=None, ge=0, le=1)
    sim_steps: int = Field(default=2, ge=1)
    simulation: SimulationMode = SimulationMode.DMD2
    with_cd: bool = False
    fake_learning_rate: Optional[float] = Field(default=None, ge=0)


class EvalConfig(_Strict):
    every: int = Field(default=1000, ge=0)
    snapshot_samples: int = Field(default=1024, ge=1)
    n_eval: int = Field(default=8192, ge=1)
    projections: int = Field(default=256, ge=1)
    sample_steps: int = Field(default=2, ge=1)
    teacher_euler_steps: int = Field(default=64, ge=1)
    radius_multiple: float = Field(default=3.0, gt=0)
    bandwidth: Optional[float] = Field(default=None, gt=0)
    seed: int = 20240917


# From-scratch runs without a pretrained teacher:
# λ=0.01, w_t = cos(t), no shift, single-step simulation.
SCRATCH_FSF_DEFAULTS: Dict[str, Any] = {
    "lambda_dmd": 0.01,
    "weight_mode": WeightMode.COSINE.value,
    "gamma_shift": 1.0,
    "sim_steps": 1,
    "simulation": SimulationMode.NONE.value,
}


class ExperimentConfig(_Strict):
    """
    Complete description of one run.

    Example:
        {"method": "fsf-dmd", "dataset": {"preset": "gm8-ring"}, "steps": 4000,
         "fsf": {"lambda_dmd": 0.05, "sim_steps": 2}}
    """
    method: Method = Method.TEACHER_CFM
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    steps: int = Field(default=1000, ge=1)
    batch_size: int = Field(default=128, ge=1)
    seed: int = 0
    learning_rate: float = Field(default=1e-3, ge=0)
    adam_beta1: float = Field(default=0.9, gt=0, lt=1)
    adam_beta2: float = Field(default=0.95, gt=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    net: NetConfig = Field(default_factory=NetConfig)
    time_sampler: TimeSamplerConfig = Field(default_factory=TimeSamplerConfig)
    consistency: ConsistencyConfig = Field(default_factory=ConsistencyConfig)
    fsf: FsfConfig = Field(default_factory=FsfConfig)
    dmd2: DmdBaselineConfig = Field(default_factory=DmdBaselineConfig)
    ema_decay: float = Field(default=0.99995, ge=0, le=1)
    ema_warmup: bool = True
    log_every: int = Field(default=10, ge=1)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    output_dir: str = "runs/default"
    teacher_checkpoint: Optional[str] = None
    init_checkpoint: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _method_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("method") in (Method.FSF_SCRATCH, Method.FSF_SCRATCH.value):
            fsf = data.get("fsf") or {}
            if isinstance(fsf, BaseModel):
                fsf = fsf.model_dump(mode="json")
            data = {**data, "fsf": {**SCRATCH_FSF_DEFAULTS, **fsf}}
        return data

    @model_validator(mode="after")
    def _check_objective(self) -> "ExperimentConfig":
        needs_cd = self.method in (Method.FSF_DMD, Method.FSF_SCRATCH)
        if (
            needs_cd
            and self.fsf.lambda_dmd > 0
            and self.fsf.cd_weight == 0
            and not self.fsf.allow_without_cd
        ):
            raise ValueError(
                "distribution matching without the consistency term is unstable; "
                "set fsf.allow_without_cd=true to run it anyway"
            )
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    def content_hash(self) -> str:
        """Git blob hash of the canonical JSON form."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode("utf-8")
        header = f"blob {len(payload)}\0".encode("utf-8")
        return hashlib.sha1(header + payload).hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path


def _parse_literal(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _check_path(keys: Sequence[str]) -> None:
    model = ExperimentConfig
    for depth, key in enumerate(keys):
        fields = model.model_fields
        if key not in fields:
            raise ConfigError(f"Unknown config key: {'.'.join(keys[:depth + 1])}")
        annotation = fields[key].annotation
        nested = getattr(annotation, "model_fields", None)
        if nested is None:
            if depth != len(keys) - 1 and key != "spec":
                raise ConfigError(f"Config key {'.'.join(keys[:depth + 1])} has no sub-keys")
            return
        model = annotation


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply `dotted.key=value` overrides to a raw config dict.
    Values are parsed as JSON literals, falling back to plain strings.

    Raises:
        ConfigError: for malformed overrides or unknown keys
    """
    merged = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override must look like key=value, got '{item}'")
        key, text = item.split("=", 1)
        keys = key.strip().split(".")
        _check_path(keys)
        node = merged
        for part in keys[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Cannot override inside non-object key '{part}'")
        node[keys[-1]] = _parse_literal(text)
    return merged


def build_config(raw: Dict[str, Any], overrides: Sequence[str] = ()) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(apply_overrides(raw, overrides))
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e


def load_config(path: Optional[Union[str, Path]], overrides: Sequence[str] = ()) -> ExperimentConfig:
    """
    Load an ExperimentConfig from JSON (or defaults when path is None).

    Raises:
        ConfigError: missing file, malformed JSON, unknown keys or invalid values
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {path} is not valid JSON: {str(e)}") from e
    config = build_config(raw, overrides)
    logger.debug(f"Loaded config {config.content_hash()[:12]} (method={config.method.value})")
    return config
