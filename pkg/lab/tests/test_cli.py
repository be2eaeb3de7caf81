import json
import logging
from pathlib import Path

import pytest

from api.cli import experiment_config, parse_command
from api.schemas import DistillMethod, DistillRequest, SampleRequest, Subcommand, VerifyRequest
from config.experiment_config import Method
from main import StepChatterFilter, main
from utils.exceptions import ConfigError


@pytest.fixture
def config_file(tmp_path, tiny_base):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_base), encoding="utf-8")
    return path


def test_parse_distill():
    request = parse_command(["distill", "--method", "fsf", "--teacher", "analytic", "--set", "fsf.lambda_dmd=0.1",
                             "--set", "steps=10", "--seed", "7"])
    assert isinstance(request, DistillRequest)
    assert request.method == DistillMethod.FSF
    assert request.method.to_method() == Method.FSF_DMD
    assert request.overrides == ["fsf.lambda_dmd=0.1", "steps=10"]
    assert request.seed == 7
    assert request.init is None


def test_parse_sample_and_verify():
    sample = parse_command(["sample", "--ckpt", "x.npz", "--class", "3"])
    assert isinstance(sample, SampleRequest)
    assert (sample.n, sample.steps, sample.class_filter) == (1024, 2, 3)
    verify = parse_command(["verify", "--json", "--canary", "drop-sg"])
    assert isinstance(verify, VerifyRequest)
    assert verify.subcommand == Subcommand.VERIFY
    assert verify.json_output and verify.canary == "drop-sg"


def test_parse_rejects_bad_arguments():
    with pytest.raises(SystemExit):
        parse_command(["distill", "--method", "ct"])
    with pytest.raises(SystemExit):
        parse_command(["sample"])
    with pytest.raises(ConfigError):
        parse_command(["sample", "--ckpt", "x.npz", "--steps", "0"])


def test_output_dir_falls_back_to_environment(monkeypatch, tmp_path, config_file):
    monkeypatch.setenv("FSF_OUT_DIR", str(tmp_path / "env-runs"))
    monkeypatch.setenv("FSF_SEED", "11")
    request = parse_command(["train-teacher", "--config", str(config_file)])
    cfg = experiment_config(request, Method.TEACHER_CFM)
    assert Path(cfg.output_dir) == tmp_path / "env-runs" / "teacher-cfm"
    assert cfg.seed == 11

    request = parse_command(["train-teacher", "--config", str(config_file), "--seed", "3", "--out-dir", "elsewhere"])
    cfg = experiment_config(request, Method.TEACHER_CFM)
    assert (cfg.seed, cfg.output_dir) == (3, "elsewhere")


def test_verify_canary_exit_code(capsys):
    assert main(["verify", "--canary", "score-sign"]) == 3
    assert "score-velocity" in capsys.readouterr().out


def test_missing_config_exit_code(tmp_path, capsys):
    code = main(["train-teacher", "--config", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path / "t")])
    assert code == 2
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_override_exit_code(tmp_path, config_file):
    assert main(["train-teacher", "--config", str(config_file), "--set", "no.such=1",
                 "--out-dir", str(tmp_path / "t")]) == 2


def test_train_distill_sample_eval(tmp_path, config_file, capsys):
    teacher_dir = tmp_path / "teacher"
    assert main(["train-teacher", "--config", str(config_file), "--out-dir", str(teacher_dir)]) == 0
    checkpoint = teacher_dir / "checkpoint.npz"
    assert checkpoint.exists()

    fsf_dir = tmp_path / "fsf"
    assert main(["distill", "--method", "fsf", "--config", str(config_file), "--teacher", str(checkpoint),
                 "--init", "teacher", "--out-dir", str(fsf_dir)]) == 0
    assert main(["distill", "--method", "cd", "--config", str(config_file), "--teacher", "analytic",
                 "--out-dir", str(tmp_path / "cd")]) == 0
    capsys.readouterr()

    assert main(["sample", "--ckpt", str(fsf_dir / "checkpoint.npz"), "--n", "50",
                 "--out-dir", str(tmp_path / "samples")]) == 0
    assert (tmp_path / "samples" / "samples.csv").exists()
    assert (tmp_path / "samples" / "samples.svg").exists()
    capsys.readouterr()

    assert main(["eval", "--ckpt", str(fsf_dir / "checkpoint.npz"), "--n", "64", "--config", str(config_file),
                 "--out-dir", str(tmp_path / "eval")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["sw2"] >= 0
    assert 0 <= report["mode_coverage"] <= 1


def test_distill_without_teacher_fails(tmp_path, config_file):
    assert main(["distill", "--method", "dmd2", "--config", str(config_file), "--out-dir", str(tmp_path / "d")]) == 2


def test_step_chatter_hidden_above_debug():
    chatter = logging.LogRecord("lab", logging.INFO, __file__, 1, "step 1", None, None)
    chatter.step_chatter = True
    plain = logging.LogRecord("lab", logging.INFO, __file__, 1, "done", None, None)
    root = logging.getLogger()
    previous = root.level
    try:
        root.setLevel(logging.INFO)
        assert not StepChatterFilter().filter(chatter)
        assert StepChatterFilter().filter(plain)
        root.setLevel(logging.DEBUG)
        assert StepChatterFilter().filter(chatter)
    finally:
        root.setLevel(previous)
