from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, Field

from config.experiment_config import Method


class Subcommand(str, Enum):
    VERIFY = "verify"
    TRAIN_TEACHER = "train-teacher"
    DISTILL = "distill"
    TRAIN_SCRATCH = "train-scratch"
    SAMPLE = "sample"
    EVAL = "eval"
    BENCH = "bench"


class DistillMethod(str, Enum):
    """Names accepted by `distill --method`"""
    CD = "cd"
    DMD2 = "dmd2"
    FSF = "fsf"

    def to_method(self) -> Method:
        return {
            DistillMethod.CD: Method.CD,
            DistillMethod.DMD2: Method.DMD2,
            DistillMethod.FSF: Method.FSF_DMD,
        }[self]


class CliCommand(BaseModel):
    """
    Parsed command line. Overrides are validated against the experiment
    config schema when the config is built, not here.
    """
    subcommand: Subcommand
    config_path: Optional[str] = None
    overrides: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    out_dir: Optional[str] = None

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "subcommand": "distill",
                "config_path": "configs/fsf.json",
                "overrides": ["fsf.lambda_dmd=0.1"],
                "seed": 0,
                "out_dir": "runs/fsf",
            }
        }


class DistillRequest(CliCommand):
    method: DistillMethod
    teacher: Optional[str] = None
    init: Optional[str] = None


class SampleRequest(CliCommand):
    ckpt: str
    n: int = Field(default=1024, ge=0)
    steps: int = Field(default=2, ge=1)
    class_filter: Optional[int] = Field(default=None, ge=0)


class EvalRequest(CliCommand):
    ckpt: str
    ref_preset: Optional[str] = None
    n: int = Field(default=8192, ge=1)
    steps: int = Field(default=2, ge=1)


class VerifyRequest(CliCommand):
    json_output: bool = False
    canary: Optional[str] = None


class BenchRequest(CliCommand):
    matrix: str
