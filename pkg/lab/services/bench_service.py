"""
Method comparison sweeps: every cell of a matrix is trained over a list of
seeds, one worker process per seed, and summarized as mean ± sd.

Cells may depend on earlier cells of the same seed (`teacher_from`,
`init_from`), which lets a teacher → cd → fsf-dmd chain run inside a sweep.
"""
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from config.experiment_config import Method, build_config
from services.training_service import ANALYTIC_TEACHER, run_training
from utils.exceptions import ConfigError, LabException

logger = logging.getLogger(__name__)

BENCH_COLUMNS = [
    "cell",
    "method",
    "seed",
    "status",
    "sw2",
    "mmd",
    "energy_distance",
    "mode_coverage",
    "sec_per_step",
    "trainable_parameters",
    "updates",
    "out_dir",
    "error",
]


class BenchCell(BaseModel):
    """
    One configuration of the comparison.

    Attributes:
        name (str): row label, unique within the matrix
        method (Method): training method
        overrides (List[str]): dotted-key overrides applied on top of the matrix base config
        teacher_from (Optional[str]): earlier cell whose checkpoint is the teacher, or "analytic"
        init_from (Optional[str]): earlier cell whose checkpoint initializes the generator
        report (bool): include the cell in the summary table
    """
    name: str = Field(..., min_length=1)
    method: Method
    overrides: List[str] = Field(default_factory=list)
    teacher_from: Optional[str] = None
    init_from: Optional[str] = None
    report: bool = True

    class Config:
        extra = "forbid"

    def dependencies(self) -> List[str]:
        return [dep for dep in (self.teacher_from, self.init_from) if dep not in (None, ANALYTIC_TEACHER)]


class BenchMatrix(BaseModel):
    """A sweep description, loaded from JSON."""
    cells: List[BenchCell] = Field(..., min_length=2)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    base: Dict[str, Any] = Field(default_factory=dict)
    out_dir: str = "runs/bench"
    workers: Optional[int] = Field(default=None, ge=1)

    class Config:
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "seeds": [0, 1, 2],
                "base": {"dataset": {"preset": "gm8-ring"}, "steps": 2000},
                "cells": [
                    {"name": "teacher", "method": "teacher-cfm", "report": False},
                    {"name": "cd", "method": "cd", "teacher_from": "teacher", "init_from": "teacher"},
                    {"name": "fsf", "method": "fsf-dmd", "teacher_from": "teacher", "init_from": "teacher"},
                ],
            }
        }

    @model_validator(mode="after")
    def _check_cells(self) -> "BenchMatrix":
        names = [cell.name for cell in self.cells]
        if len(set(names)) != len(names):
            raise ValueError("cell names must be unique")
        if len({cell.method for cell in self.cells}) < 2:
            raise ValueError("a benchmark needs at least two methods")
        seen = set()
        for cell in self.cells:
            for dep in cell.dependencies():
                if dep not in seen:
                    raise ValueError(f"cell '{cell.name}' depends on '{dep}', which is not an earlier cell")
            seen.add(cell.name)
        return self


class BenchRow(BaseModel):
    cell: str
    method: Method
    seed: int
    status: str
    sw2: Optional[float] = None
    mmd: Optional[float] = None
    energy_distance: Optional[float] = None
    mode_coverage: Optional[float] = None
    sec_per_step: Optional[float] = None
    trainable_parameters: Optional[int] = None
    updates: Optional[int] = None
    out_dir: str
    error: str = ""


class BenchResult(BaseModel):
    rows: List[BenchRow]
    csv_path: str
    summary_path: str
    summary: str


def load_matrix(path: Union[str, Path]) -> BenchMatrix:
    """
    Raises:
        ConfigError: missing file, malformed JSON or an invalid matrix
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Matrix file not found: {path}")
    try:
        return BenchMatrix.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Matrix file {path} is not valid JSON: {str(e)}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid benchmark matrix: {e}") from e


def _cell_dir(matrix: BenchMatrix, seed: int, cell: BenchCell) -> Path:
    return Path(matrix.out_dir) / f"seed{seed}" / cell.name


def run_seed(matrix_data: Dict[str, Any], seed: int) -> List[Dict[str, Any]]:
    """Every cell of the matrix for one seed, in order. Runs in a worker process."""
    matrix = BenchMatrix.model_validate(matrix_data)
    checkpoints: Dict[str, str] = {}
    failed: Dict[str, str] = {}
    rows = []
    for cell in matrix.cells:
        out_dir = _cell_dir(matrix, seed, cell)
        row = BenchRow(cell=cell.name, method=cell.method, seed=seed, status="failed", out_dir=str(out_dir))
        blocked = [dep for dep in cell.dependencies() if dep in failed]
        if blocked:
            failed[cell.name] = f"dependency {blocked[0]} failed"
            row.error = failed[cell.name]
            rows.append(row.model_dump(mode="json"))
            continue
        try:
            overrides = list(cell.overrides) + [
                f"method={cell.method.value}",
                f"seed={seed}",
                f"output_dir={out_dir}",
            ]
            cfg = build_config(matrix.base, overrides)
            teacher = checkpoints.get(cell.teacher_from, cell.teacher_from)
            init = checkpoints.get(cell.init_from, cell.init_from)
            result = run_training(cfg, teacher_source=teacher, init_source=init)
            checkpoints[cell.name] = str(result.checkpoint_path)
            report = result.report
            row.status = "ok"
            row.sw2 = report.sw2
            row.mmd = report.mmd
            row.energy_distance = report.energy_distance
            row.mode_coverage = report.mode_coverage
            row.sec_per_step = result.sec_per_step
            row.trainable_parameters = sum(result.trainable_parameters.values())
            row.updates = sum(result.updates.values())
        except LabException as e:
            logger.warning(f"Bench cell {cell.name} (seed {seed}) failed: {e.detail}")
            failed[cell.name] = e.detail
            row.error = e.detail
        rows.append(row.model_dump(mode="json"))
    return rows


def _mean_sd(values: List[float]) -> str:
    if not values:
        return "-"
    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return f"{np.mean(values):.4f} ± {sd:.4f}"


def summarize(matrix: BenchMatrix, rows: List[BenchRow]) -> str:
    """Markdown table of mean ± sd per reported cell over the successful seeds."""
    lines = [
        "| cell | method | ok/runs | sliced W2 | mode coverage | sec/step | trainable params |",
        "|---|---|---|---|---|---|---|",
    ]
    for cell in matrix.cells:
        if not cell.report:
            continue
        cell_rows = [row for row in rows if row.cell == cell.name]
        ok = [row for row in cell_rows if row.status == "ok"]
        params = sorted({row.trainable_parameters for row in ok})
        lines.append(
            f"| {cell.name} | {cell.method.value} | {len(ok)}/{len(cell_rows)} "
            f"| {_mean_sd([r.sw2 for r in ok])} | {_mean_sd([r.mode_coverage for r in ok])} "
            f"| {_mean_sd([r.sec_per_step for r in ok])} | {', '.join(str(p) for p in params) or '-'} |"
        )
    return "\n".join(lines) + "\n"


def write_bench_csv(path: Path, rows: List[BenchRow]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            record = row.model_dump(mode="json")
            writer.writerow({key: "" if record[key] is None else record[key] for key in BENCH_COLUMNS})
    return path


def run_bench(matrix: BenchMatrix) -> BenchResult:
    """
    Run every cell over every seed. A failing run marks its row (and the rows
    depending on it) failed without stopping the sweep.
    """
    matrix_data = matrix.model_dump(mode="json")
    workers = matrix.workers or min(len(matrix.seeds), 4)
    logger.info(f"Benchmark: {len(matrix.cells)} cells x {len(matrix.seeds)} seeds on {workers} workers")
    collected: Dict[int, List[Dict[str, Any]]] = {}
    if workers == 1:
        for seed in matrix.seeds:
            collected[seed] = run_seed(matrix_data, seed)
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = {executor.submit(run_seed, matrix_data, seed): seed for seed in matrix.seeds}
            for future in as_completed(futures):
                seed = futures[future]
                try:
                    collected[seed] = future.result()
                except Exception as e:
                    logger.error(f"Bench worker for seed {seed} crashed: {str(e)}", exc_info=True)
                    collected[seed] = [
                        BenchRow(cell=cell.name, method=cell.method, seed=seed, status="failed",
                                 out_dir=str(_cell_dir(matrix, seed, cell)), error=str(e)).model_dump(mode="json")
                        for cell in matrix.cells
                    ]

    # seed order, then matrix order, whatever order the workers finished in
    rows = [BenchRow.model_validate(row) for seed in matrix.seeds for row in collected[seed]]
    out_dir = Path(matrix.out_dir)
    csv_path = write_bench_csv(out_dir / "bench.csv", rows)
    summary = summarize(matrix, rows)
    summary_path = out_dir / "bench.md"
    summary_path.write_text(summary, encoding="utf-8")
    failures = sum(row.status != "ok" for row in rows)
    logger.info(f"Benchmark finished: {len(rows) - failures}/{len(rows)} runs ok, table in {summary_path}")
    return BenchResult(rows=rows, csv_path=str(csv_path), summary_path=str(summary_path), summary=summary)
