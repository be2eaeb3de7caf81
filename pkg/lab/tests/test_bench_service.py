import csv
import json

import numpy as np
import pytest

from services.bench_service import BENCH_COLUMNS, BenchMatrix, load_matrix, run_bench, run_seed
from utils.exceptions import ConfigError


@pytest.fixture
def make_matrix(tmp_path, tiny_base):
    def factory(cells, **extra):
        return BenchMatrix.model_validate(
            {"cells": cells, "seeds": [0], "base": tiny_base, "out_dir": str(tmp_path / "bench"), "workers": 1, **extra}
        )

    return factory


@pytest.mark.parametrize(
    "cells",
    [
        [{"name": "a", "method": "ct"}, {"name": "b", "method": "ct"}],
        [{"name": "a", "method": "ct"}, {"name": "a", "method": "teacher-cfm"}],
        [{"name": "cd", "method": "cd", "teacher_from": "teacher"}, {"name": "teacher", "method": "teacher-cfm"}],
    ],
)
def test_invalid_matrices(tmp_path, cells):
    path = tmp_path / "matrix.json"
    path.write_text(json.dumps({"cells": cells}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_matrix(path)


def test_load_matrix_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_matrix(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("[", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_matrix(tmp_path / "bad.json")


def test_bench_chains_cells_and_writes_tables(make_matrix):
    bench = make_matrix(
        [
            {"name": "teacher", "method": "teacher-cfm", "report": False},
            {"name": "cd", "method": "cd", "teacher_from": "teacher", "init_from": "teacher"},
            {"name": "fsf", "method": "fsf-dmd", "teacher_from": "teacher", "init_from": "teacher"},
            {"name": "dmd2", "method": "dmd2", "teacher_from": "analytic"},
        ],
        seeds=[0, 1],
    )
    result = run_bench(bench)
    assert [(row.seed, row.cell) for row in result.rows] == [
        (seed, cell) for seed in (0, 1) for cell in ("teacher", "cd", "fsf", "dmd2")
    ]
    assert all(row.status == "ok" for row in result.rows)
    dmd2 = [row for row in result.rows if row.cell == "dmd2"]
    fsf = [row for row in result.rows if row.cell == "fsf"]
    assert dmd2[0].trainable_parameters == 2 * fsf[0].trainable_parameters

    with open(result.csv_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        assert reader.fieldnames == BENCH_COLUMNS
        assert len(list(reader)) == 8
    assert "| fsf | fsf-dmd | 2/2 |" in result.summary
    assert "| teacher |" not in result.summary


def test_failed_dependency_marks_dependents(make_matrix):
    bench = make_matrix(
        [
            {"name": "cd", "method": "cd"},
            {"name": "fsf", "method": "fsf-dmd", "teacher_from": "analytic", "init_from": "cd"},
            {"name": "ct", "method": "ct"},
        ]
    )
    rows = {row["cell"]: row for row in run_seed(bench.model_dump(mode="json"), 0)}
    assert rows["cd"]["status"] == "failed" and "teacher" in rows["cd"]["error"]
    assert rows["fsf"]["status"] == "failed" and rows["fsf"]["error"] == "dependency cd failed"
    assert rows["ct"]["status"] == "ok"


def test_seed_directories_are_separate(make_matrix):
    bench = make_matrix([{"name": "ct", "method": "ct"}, {"name": "teacher", "method": "teacher-cfm"}], seeds=[3])
    result = run_bench(bench)
    assert all(f"seed3/{row.cell}" in row.out_dir.replace("\\", "/") for row in result.rows)


def _cell_rows(result, name):
    rows = [row for row in result.rows if row.cell == name]
    assert rows and all(row.status == "ok" for row in rows), name
    return rows


def _mean_sw2(result, name) -> float:
    return float(np.mean([row.sw2 for row in _cell_rows(result, name)]))


@pytest.fixture(scope="module")
def ring_bench(tmp_path_factory):
    """Full-size comparison on the ring over three seeds; long, shared by the slow tests below."""
    distill = {"teacher_from": "teacher", "init_from": "teacher"}
    matrix = BenchMatrix.model_validate(
        {
            "seeds": [0, 1, 2],
            "base": {"dataset": {"preset": "gm8-ring"}, "steps": 2000, "log_every": 500, "eval": {"every": 0}},
            "out_dir": str(tmp_path_factory.mktemp("ring-bench")),
            "cells": [
                {"name": "teacher", "method": "teacher-cfm", "overrides": ["steps=20000"], "report": False},
                {"name": "cd", "method": "cd", **distill},
                {"name": "fsf-dmd", "method": "fsf-dmd", **distill},
                {"name": "fsf-one-step", "method": "fsf-dmd", "overrides": ["fsf.sim_steps=1"], **distill},
                {"name": "fsf-dmd2-sim", "method": "fsf-dmd", "overrides": ["fsf.simulation=dmd2"], **distill},
                {"name": "fsf-no-sim", "method": "fsf-dmd", "overrides": ["fsf.simulation=none"], **distill},
                {"name": "scratch", "method": "fsf-scratch", "overrides": ["steps=20000"]},
                {"name": "scratch-lambda-0", "method": "fsf-scratch",
                 "overrides": ["steps=20000", "fsf.lambda_dmd=0"]},
            ],
        }
    )
    return run_bench(matrix)


@pytest.mark.slow
def test_fsf_dmd_improves_on_consistency_distillation(ring_bench):
    assert _mean_sw2(ring_bench, "fsf-dmd") < _mean_sw2(ring_bench, "cd")
    for name in ("cd", "fsf-dmd"):
        assert all(row.mode_coverage == 1.0 for row in _cell_rows(ring_bench, name))


@pytest.mark.slow
def test_scratch_distribution_matching_beats_consistency_training_alone(ring_bench):
    assert _mean_sw2(ring_bench, "scratch") < _mean_sw2(ring_bench, "scratch-lambda-0")


@pytest.mark.slow
def test_simulation_ablation_is_reported(ring_bench, record_property):
    means = {name: _mean_sw2(ring_bench, name) for name in ("fsf-dmd", "fsf-dmd2-sim", "fsf-no-sim", "fsf-one-step")}
    # the ordering is reported, not enforced
    record_property("sw2_by_simulation", means)
    record_property("ordering_holds", means["fsf-dmd"] <= means["fsf-dmd2-sim"] <= means["fsf-no-sim"])
    record_property("one_step_gap", means["fsf-one-step"] - means["fsf-dmd"])
    for name in means:
        assert f"| {name} | fsf-dmd | 3/3 |" in ring_bench.summary
