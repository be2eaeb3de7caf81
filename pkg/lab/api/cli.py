"""
Command-line surface: argument parsing, request validation and one handler
per subcommand. Handlers return the process exit status; typed errors are
turned into exit codes by `main.py`.
"""
import argparse
import json
import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from api.schemas import (
    BenchRequest,
    CliCommand,
    DistillMethod,
    DistillRequest,
    EvalRequest,
    SampleRequest,
    Subcommand,
    VerifyRequest,
)
from config.experiment_config import ExperimentConfig, Method, load_config
from config.lab_settings import get_lab_settings
from services.bench_service import load_matrix, run_bench
from services.evaluation_service import run_eval
from services.sampling_service import run_sample
from services.training_service import RunResult, run_training
from services.verify_service import Canary, format_table, raise_on_failure, run_verify
from utils.exceptions import ConfigError
from utils.seeding import resolve_seed

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_DIR = ExperimentConfig.model_fields["output_dir"].default


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", dest="config_path", help="experiment config (JSON)")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="dotted-key override, e.g. fsf.lambda_dmd=0.1 (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="overrides FSF_SEED and the config seed")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsflab", description="Flow-map distillation lab")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    verify = sub.add_parser(Subcommand.VERIFY.value, help="run the identity suite")
    _add_common(verify)
    verify.add_argument("--json", dest="json_output", action="store_true", help="machine-readable report")
    verify.add_argument("--canary", choices=[c.value for c in Canary], help="inject a known mutation")

    teacher = sub.add_parser(Subcommand.TRAIN_TEACHER.value, help="train a flow-matching teacher")
    _add_common(teacher)

    distill = sub.add_parser(Subcommand.DISTILL.value, help="distill a teacher into a flow map")
    _add_common(distill)
    distill.add_argument("--method", required=True, choices=[m.value for m in DistillMethod])
    distill.add_argument("--teacher", help="teacher checkpoint, or 'analytic' for the exact mixture velocity")
    distill.add_argument("--init", help="generator init checkpoint, or 'teacher'")

    scratch = sub.add_parser(Subcommand.TRAIN_SCRATCH.value, help="consistency training plus self-teacher FSF-DMD")
    _add_common(scratch)

    sample = sub.add_parser(Subcommand.SAMPLE.value, help="draw samples from a checkpoint")
    _add_common(sample)
    sample.add_argument("--ckpt", required=True)
    sample.add_argument("--n", type=int, default=1024)
    sample.add_argument("--steps", type=int, default=2)
    sample.add_argument("--class", dest="class_filter", type=int, help="fixed class label (K means unconditional)")

    evaluate = sub.add_parser(Subcommand.EVAL.value, help="metrics of a checkpoint against reference data")
    _add_common(evaluate)
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--ref-preset", dest="ref_preset")
    evaluate.add_argument("--n", type=int, default=8192)
    evaluate.add_argument("--steps", type=int, default=2)

    bench = sub.add_parser(Subcommand.BENCH.value, help="run a method comparison matrix")
    _add_common(bench)
    bench.add_argument("--matrix", required=True)
    return parser


_REQUESTS = {
    Subcommand.VERIFY: VerifyRequest,
    Subcommand.TRAIN_TEACHER: CliCommand,
    Subcommand.DISTILL: DistillRequest,
    Subcommand.TRAIN_SCRATCH: CliCommand,
    Subcommand.SAMPLE: SampleRequest,
    Subcommand.EVAL: EvalRequest,
    Subcommand.BENCH: BenchRequest,
}


def parse_command(argv: Optional[Sequence[str]] = None) -> CliCommand:
    """
    Raises:
        ConfigError: arguments that parse but fail validation
    """
    args = vars(build_parser().parse_args(argv))
    subcommand = Subcommand(args["subcommand"])
    try:
        return _REQUESTS[subcommand].model_validate({k: v for k, v in args.items() if v is not None})
    except ValidationError as e:
        raise ConfigError(f"Invalid arguments for {subcommand.value}: {e}") from e


def experiment_config(request: CliCommand, method: Method) -> ExperimentConfig:
    """Config file plus overrides, with the subcommand's method, the resolved seed and output directory."""
    cfg = load_config(request.config_path, list(request.overrides) + [f"method={method.value}"])
    settings = get_lab_settings()
    seed = resolve_seed(request.seed, settings.FSF_SEED, cfg.seed)
    out_dir = request.out_dir
    if out_dir is None:
        out_dir = cfg.output_dir if cfg.output_dir != DEFAULT_OUTPUT_DIR else str(Path(settings.FSF_OUT_DIR) / method.value)
    return cfg.model_copy(update={"seed": seed, "output_dir": out_dir})


def _print_run(result: RunResult) -> None:
    report = result.report
    print(f"method:      {result.method.value}")
    print(f"checkpoint:  {result.checkpoint_path}")
    print(f"sec/step:    {result.sec_per_step:.5f}")
    print(f"parameters:  {result.trainable_parameters}")
    if report is not None:
        print(f"sliced W2:   {report.sw2:.5f}")
        print(f"coverage:    {report.mode_coverage:.3f}")


def handle_verify(request: VerifyRequest) -> int:
    report = run_verify(Canary(request.canary) if request.canary else None)
    print(report.model_dump_json(indent=2) if request.json_output else format_table(report))
    raise_on_failure(report)
    return 0


def handle_train_teacher(request: CliCommand) -> int:
    _print_run(run_training(experiment_config(request, Method.TEACHER_CFM)))
    return 0


def handle_distill(request: DistillRequest) -> int:
    cfg = experiment_config(request, request.method.to_method())
    _print_run(run_training(cfg, teacher_source=request.teacher, init_source=request.init))
    return 0


def handle_train_scratch(request: CliCommand) -> int:
    _print_run(run_training(experiment_config(request, Method.FSF_SCRATCH)))
    return 0


def handle_sample(request: SampleRequest) -> int:
    settings = get_lab_settings()
    seed = resolve_seed(request.seed, settings.FSF_SEED, 0)
    out_dir = request.out_dir or str(Path(settings.FSF_OUT_DIR) / "samples")
    result = run_sample(request.ckpt, request.n, request.steps, request.class_filter, seed, out_dir)
    print(f"samples: {result.csv_path}")
    print(f"scatter: {result.svg_path}")
    return 0


def handle_eval(request: EvalRequest) -> int:
    settings = get_lab_settings()
    eval_cfg = load_config(request.config_path, request.overrides).eval
    report = run_eval(
        request.ckpt,
        ref_preset=request.ref_preset,
        n=request.n,
        steps=request.steps,
        seed=resolve_seed(request.seed, settings.FSF_SEED, eval_cfg.seed),
        projections=eval_cfg.projections,
        radius_multiple=eval_cfg.radius_multiple,
        bandwidth=eval_cfg.bandwidth,
        out_dir=request.out_dir or str(Path(settings.FSF_OUT_DIR) / "eval"),
    )
    print(report.model_dump_json(indent=2))
    return 0


def handle_bench(request: BenchRequest) -> int:
    matrix = load_matrix(request.matrix)
    if request.out_dir is not None:
        matrix = matrix.model_copy(update={"out_dir": request.out_dir})
    result = run_bench(matrix)
    print(result.summary)
    print(f"rows: {result.csv_path}")
    return 0


HANDLERS: Dict[Subcommand, Callable[..., int]] = {
    Subcommand.VERIFY: handle_verify,
    Subcommand.TRAIN_TEACHER: handle_train_teacher,
    Subcommand.DISTILL: handle_distill,
    Subcommand.TRAIN_SCRATCH: handle_train_scratch,
    Subcommand.SAMPLE: handle_sample,
    Subcommand.EVAL: handle_eval,
    Subcommand.BENCH: handle_bench,
}


def dispatch(request: CliCommand) -> int:
    logger.debug(f"Dispatching {request.subcommand.value}: {json.dumps(request.model_dump(mode='json'))}")
    return HANDLERS[request.subcommand](request)


def run_cli(argv: Optional[List[str]] = None) -> int:
    return dispatch(parse_command(argv))
