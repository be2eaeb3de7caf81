"""
Training loops for every method: teacher flow matching, consistency
training and distillation, FSF-DMD distillation, the DMD2 baseline and the
from-scratch joint objective.

All trainers share `TrainingLoop`, which owns the optimizer, the EMA shadow,
the CSV log, metric snapshots, checkpoints and the divergence abort.
"""
import json
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Union

import numpy as np

from config.experiment_config import ExperimentConfig, FakeSideLabel, Method
from core.optim import AdamState, EmaState, adam_step, ema_update, ida_blend
from core.params import ParamStore
from core.value import Value, backward, no_grad
from models.consistency_losses import (
    apply_label_dropout,
    cd_loss,
    cfm_loss,
    ct_loss,
)
from models.pseudo_velocity_net import PseudoVelocityNet
from models.rollout import simulate
from objectives.dmd2 import dmd2_fake_loss, dmd2_generator_loss
from objectives.fsf_dmd import dmd_weight, fsf_delta_terms, fsf_dmd_loss, perturb, scratch_delta
from objectives.guidance import AnalyticTeacher, Guidance, NetworkTeacher, Teacher
from oracle.gaussian_mixture import GaussianMixtureSpec, sample_gaussian_mixture
from services.sampling_service import draw_generation_inputs, generate_samples
from storage.checkpoint import load_checkpoint, save_checkpoint
from storage.run_log import TrainingLog, write_manifest
from utils.exceptions import ConfigError, DivergenceError, KeyMismatchError, LabException
from utils.metrics import MetricReport, evaluate_samples
from utils.seeding import RunStreams, spawn_streams

logger = logging.getLogger(__name__)

ANALYTIC_TEACHER = "analytic"
INIT_FROM_TEACHER = "teacher"

StepLosses = Dict[str, Optional[float]]


class ParamRegistry:
    """Trainable ParamStores and EMA shadows allocated by one run, by role."""

    def __init__(self):
        self.trainable: Dict[str, ParamStore] = {}
        self.shadows: Dict[str, EmaState] = {}

    def register(self, role: str, params: ParamStore) -> ParamStore:
        if role in self.trainable:
            raise ConfigError(f"Role '{role}' registered twice")
        self.trainable[role] = params
        return params

    def register_shadow(self, role: str, ema: EmaState) -> EmaState:
        self.shadows[role] = ema
        return ema

    def counts(self) -> Dict[str, int]:
        return {role: params.num_parameters() for role, params in sorted(self.trainable.items())}

    def trainable_parameter_count(self) -> int:
        return sum(self.counts().values())

    def updates(self) -> Dict[str, int]:
        return {role: params.step_count for role, params in sorted(self.trainable.items())}


@dataclass
class RunResult:
    """What a finished run leaves behind."""
    method: Method
    out_dir: Path
    checkpoint_path: Path
    log_path: Path
    manifest_path: Path
    steps: int
    sec_per_step: float
    trainable_parameters: Dict[str, int]
    updates: Dict[str, int]
    report: Optional[MetricReport] = None
    final_losses: StepLosses = field(default_factory=dict)


def load_teacher(source: Optional[str], spec: GaussianMixtureSpec) -> Teacher:
    """
    Frozen teacher from a checkpoint (EMA weights when present) or the exact
    mixture velocity when `source` is "analytic".

    Raises:
        ConfigError: when no teacher is given or the checkpoint is unusable
    """
    if source is None:
        raise ConfigError("This method needs a teacher checkpoint (--teacher)")
    if source == ANALYTIC_TEACHER:
        return AnalyticTeacher(spec)
    checkpoint = load_checkpoint(source)
    net = PseudoVelocityNet.from_architecture(checkpoint.architecture, checkpoint.params)
    weights = checkpoint.ema.shadow if checkpoint.ema is not None else checkpoint.params
    if net.num_classes != spec.num_components or net.dimension != spec.dimension:
        raise ConfigError(
            f"Teacher {source} was trained for d={net.dimension}, K={net.num_classes}; "
            f"dataset has d={spec.dimension}, K={spec.num_components}"
        )
    return NetworkTeacher(net, {name: array.copy() for name, array in weights.items()})


def build_generator(
    cfg: ExperimentConfig, spec: GaussianMixtureSpec, rng: np.random.Generator, init_source: Optional[str] = None
) -> PseudoVelocityNet:
    """Fresh network from the config, or one initialized from a checkpoint's (EMA) weights."""
    if init_source is None:
        return PseudoVelocityNet.create(
            spec.dimension,
            spec.num_components,
            rng,
            zero_init_output=cfg.net.zero_init_output,
            hidden_width=cfg.net.hidden_width,
            depth=cfg.net.depth,
            time_frequencies=cfg.net.time_frequencies,
            max_frequency=cfg.net.max_frequency,
            class_embed_dim=cfg.net.class_embed_dim,
        )
    checkpoint = load_checkpoint(init_source)
    arrays = checkpoint.ema.shadow if checkpoint.ema is not None else checkpoint.params
    net = PseudoVelocityNet.from_architecture(checkpoint.architecture, arrays)
    if net.num_classes != spec.num_components or net.dimension != spec.dimension:
        raise ConfigError(f"Init checkpoint {init_source} does not match the dataset dimensions")
    logger.info(f"Generator initialized from {init_source}")
    return net


def lambda_schedule(lambda_dmd: float, warmup_steps: int, step: int) -> float:
    """Linear warm-up of λ over `warmup_steps`; constant afterwards."""
    if warmup_steps <= 0:
        return lambda_dmd
    return lambda_dmd * min(1.0, step / warmup_steps)


class TrainingLoop:
    """
    Shared loop: one call of `step_fn` per step, EMA after every step,
    interval logging, metric snapshots and a last-good checkpoint on divergence.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        spec: GaussianMixtureSpec,
        net: PseudoVelocityNet,
        registry: ParamRegistry,
        metadata: Optional[Dict] = None,
    ):
        self.cfg = cfg
        self.spec = spec
        self.net = net
        self.registry = registry
        self.metadata = metadata or {}
        self.out_dir = Path(cfg.output_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.adam = AdamState.for_params(
            net.params, cfg.learning_rate, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, epsilon=cfg.adam_eps
        )
        self.ema = registry.register_shadow(
            "generator", EmaState.from_params(net.params, cfg.ema_decay, warmup=cfg.ema_warmup)
        )
        self.log = TrainingLog(self.out_dir / "train_log.csv")
        self.manifest_path = self.out_dir / "manifest.json"
        self.checkpoint_path = self.out_dir / "checkpoint.npz"

    def update(self, loss: Value) -> None:
        """Back-propagate `loss` into the generator and take one Adam step."""
        grads = backward(loss, self.net.params)
        adam_step(self.net.params, grads, self.adam)

    def _checkpoint_metadata(self, step: int) -> Dict:
        return {
            "method": self.cfg.method.value,
            "dataset_spec": self.spec.model_dump(mode="json"),
            "seed": self.cfg.seed,
            "config_hash": self.cfg.content_hash(),
            "step": step,
            **self.metadata,
        }

    def save(self, path: Path, step: int) -> Path:
        return save_checkpoint(
            path,
            self.net.params,
            self.net.architecture(),
            adam=self.adam,
            ema=self.ema,
            metadata=self._checkpoint_metadata(step),
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        steps = (
            self.cfg.eval.teacher_euler_steps if self.cfg.method == Method.TEACHER_CFM else self.cfg.eval.sample_steps
        )
        z, labels = draw_generation_inputs(self.spec.dimension, np.asarray(self.spec.weights), n, rng)
        return generate_samples(self.net, self.ema.shadow, z, labels, steps, self.cfg.method)

    def evaluate(self, n: int) -> MetricReport:
        """Metrics of EMA samples against fresh data; its own fixed streams, independent of training."""
        eval_rng = np.random.default_rng(self.cfg.eval.seed)
        reference, _ = sample_gaussian_mixture(self.spec, n, np.random.default_rng(self.cfg.eval.seed + 1))
        samples = self.sample(n, eval_rng)
        return evaluate_samples(
            samples,
            reference,
            self.spec,
            projections=self.cfg.eval.projections,
            radius_multiple=self.cfg.eval.radius_multiple,
            bandwidth=self.cfg.eval.bandwidth,
            rng=np.random.default_rng(self.cfg.eval.seed + 2),
        )

    def _abort(self, step: int, error: Exception, last_losses: StepLosses) -> None:
        last_good = self.save(self.out_dir / "last_good.npz", step - 1)
        record = {"aborted_at_step": step, "error": str(error), "last_losses": last_losses,
                  "last_good_checkpoint": str(last_good)}
        (self.out_dir / "divergence.json").write_text(json.dumps(record, indent=2), encoding="utf-8")
        logger.error(f"Run diverged at step {step}: {error}; last good state kept in {last_good}")
        raise DivergenceError(f"Divergence at step {step}: {error}") from error

    def run(self, step_fn: Callable[[int], StepLosses]) -> RunResult:
        cfg = self.cfg
        write_manifest(
            self.manifest_path,
            cfg,
            cfg.seed,
            {"trainable_parameters": self.registry.counts(), **self.metadata},
        )
        logger.info(
            f"Starting {cfg.method.value} for {cfg.steps} steps "
            f"({self.registry.trainable_parameter_count()} trainable parameters) in {self.out_dir}"
        )
        losses: StepLosses = {}
        step_seconds = 0.0
        interval_steps = 0
        total_seconds = 0.0
        for step in range(1, cfg.steps + 1):
            started = time.perf_counter()
            try:
                losses = step_fn(step)
                for key, value in losses.items():
                    if value is not None and not np.isfinite(value):
                        raise DivergenceError(f"{key} is {value}")
            except DivergenceError as e:
                self._abort(step, e, losses)
            ema_update(self.ema, self.net.params)
            elapsed = time.perf_counter() - started
            step_seconds += elapsed
            total_seconds += elapsed
            interval_steps += 1

            snapshot = cfg.eval.every > 0 and step % cfg.eval.every == 0
            if step % cfg.log_every == 0 or step == cfg.steps or snapshot:
                record = {"step": step, "sec_per_step": step_seconds / interval_steps, **losses}
                if snapshot:
                    report = self.evaluate(cfg.eval.snapshot_samples)
                    record.update(
                        metric_sw2=report.sw2,
                        metric_mmd=report.mmd,
                        metric_energy=report.energy_distance,
                        metric_coverage=report.mode_coverage,
                    )
                    logger.info(f"step {step}: sw2={report.sw2:.4f} coverage={report.mode_coverage:.3f}")
                self.log.append(record)
                logger.info(f"step {step}: {losses}", extra={"step_chatter": True})
                step_seconds, interval_steps = 0.0, 0

        self.save(self.checkpoint_path, cfg.steps)
        report = self.evaluate(cfg.eval.n_eval)
        (self.out_dir / "report.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
        sec_per_step = total_seconds / cfg.steps
        write_manifest(
            self.manifest_path,
            cfg,
            cfg.seed,
            {
                "trainable_parameters": self.registry.counts(),
                "updates": self.registry.updates(),
                "sec_per_step": sec_per_step,
                "final_report": report.model_dump(mode="json"),
                **self.metadata,
            },
        )
        logger.info(f"Finished {cfg.method.value}: sw2={report.sw2:.4f}, {sec_per_step * 1e3:.2f} ms/step")
        return RunResult(
            method=cfg.method,
            out_dir=self.out_dir,
            checkpoint_path=self.checkpoint_path,
            log_path=self.log.path,
            manifest_path=self.manifest_path,
            steps=cfg.steps,
            sec_per_step=sec_per_step,
            trainable_parameters=self.registry.counts(),
            updates=self.registry.updates(),
            report=report,
            final_losses=losses,
        )


class BaseTrainer(ABC):
    """Builds the networks of one method and defines its training step."""

    # teacher and distillation training drop labels to the null class
    label_dropout: bool = True

    def __init__(self, cfg: ExperimentConfig, teacher_source: Optional[str] = None, init_source: Optional[str] = None):
        self.cfg = cfg
        self.spec = cfg.dataset.build_spec()
        self.streams: RunStreams = spawn_streams(cfg.seed)
        self.registry = ParamRegistry()
        self.teacher_source = teacher_source if teacher_source is not None else cfg.teacher_checkpoint
        self.init_source = init_source if init_source is not None else cfg.init_checkpoint
        self.net = build_generator(cfg, self.spec, self.streams.init, self._resolve_init())
        self.registry.register("generator", self.net.params)
        self.loop = TrainingLoop(cfg, self.spec, self.net, self.registry, self.metadata())

    def _resolve_init(self) -> Optional[str]:
        """An explicit checkpoint wins; "teacher" copies the teacher checkpoint; otherwise random."""
        if self.init_source != INIT_FROM_TEACHER:
            return self.init_source
        if self.teacher_source in (None, ANALYTIC_TEACHER):
            raise ConfigError("--init teacher needs a teacher checkpoint, not the analytic teacher")
        return self.teacher_source

    def metadata(self) -> Dict:
        return {"teacher": self.teacher_source, "init": self.init_source}

    def draw_data(self):
        """Labelled data batch, with label dropout where the method uses it, all from the data stream."""
        x, c = sample_gaussian_mixture(self.spec, self.cfg.batch_size, self.streams.data)
        if not self.label_dropout:
            return x, c
        c = apply_label_dropout(c, self.spec.null_label, self.cfg.consistency.label_dropout, self.streams.data)
        return x, c

    def draw_generator_inputs(self, rng: np.random.Generator):
        labels = rng.choice(self.spec.num_components, size=self.cfg.batch_size, p=np.asarray(self.spec.weights))
        z = rng.standard_normal((self.cfg.batch_size, self.spec.dimension))
        return z, labels

    @abstractmethod
    def train_step(self, step: int) -> StepLosses:
        pass

    def train(self) -> RunResult:
        return self.loop.run(self.train_step)


class TeacherTrainer(BaseTrainer):
    """Conditional flow matching with s tied to t."""

    def metadata(self) -> Dict:
        return {}

    def train_step(self, step: int) -> StepLosses:
        x, c = self.draw_data()
        loss = cfm_loss(self.net, x, c, self.streams.data)
        self.loop.update(loss)
        return {"loss_total": float(loss.data)}


class ConsistencyTrainer(BaseTrainer):
    """Consistency training from data alone."""
    label_dropout = False

    def metadata(self) -> Dict:
        return {}

    def train_step(self, step: int) -> StepLosses:
        x, c = self.draw_data()
        loss = ct_loss(self.net, x, c, self.cfg.consistency, self.cfg.time_sampler, self.streams.data)
        self.loop.update(loss)
        value = float(loss.data)
        return {"loss_cd": value, "loss_total": value}


class DistillTrainer(BaseTrainer):
    """
    Consistency distillation, optionally joined by the FSF-DMD term
    (L = w_cd·L_CD + λ·L_FSF-DMD), one parameter update per step.
    """

    def __init__(self, cfg: ExperimentConfig, teacher_source=None, init_source=None):
        super().__init__(cfg, teacher_source, init_source)
        self.teacher = load_teacher(self.teacher_source, self.spec)
        self.guidance = Guidance.from_config(cfg.fsf)
        self.with_dmd = cfg.method == Method.FSF_DMD

    def consistency_loss(self) -> Value:
        x, c = self.draw_data()
        return cd_loss(
            self.net, self.teacher, x, c, self.cfg.consistency, self.cfg.time_sampler, self.streams.data, self.guidance
        )

    def fsf_loss(self) -> Value:
        fsf = self.cfg.fsf
        rng = self.streams.dmd
        z, labels = self.draw_generator_inputs(rng)
        trace = simulate(self.net, z, labels, fsf.simulation, fsf.sim_steps, rng)
        sample = perturb(trace.endpoint, rng, fsf.gamma_shift)
        fake_weights = self.loop.ema.shadow if fsf.use_ema_fake_side else None
        fake_labels = (
            np.full(labels.shape, self.spec.null_label) if fsf.fake_side_label == FakeSideLabel.NULL else None
        )
        delta, v_real = fsf_delta_terms(
            self.net, self.teacher, sample.x_hat_t, sample.t, labels, self.guidance, fake_weights, fake_labels
        )
        w = dmd_weight(fsf.weight_mode, sample.t, trace.tilde_f.data, v_real, fsf.weight_constant)
        return fsf_dmd_loss(trace, delta, w)

    def train_step(self, step: int) -> StepLosses:
        loss_cd = self.consistency_loss()
        total = loss_cd * self.cfg.fsf.cd_weight
        losses: StepLosses = {"loss_cd": float(loss_cd.data)}
        if self.with_dmd:
            lam = lambda_schedule(self.cfg.fsf.lambda_dmd, self.cfg.fsf.lambda_warmup_steps, step)
            loss_fsf = self.fsf_loss()
            if lam > 0.0:
                total = total + loss_fsf * lam
            losses.update(loss_fsf=float(loss_fsf.data), lambda_eff=lam)
        self.loop.update(total)
        losses["loss_total"] = float(total.data)
        return losses


class ScratchTrainer(BaseTrainer):
    """Consistency training plus FSF-DMD against the network's own instantaneous velocity."""
    label_dropout = False

    def metadata(self) -> Dict:
        return {}

    def train_step(self, step: int) -> StepLosses:
        fsf = self.cfg.fsf
        x, c = self.draw_data()
        loss_ct = ct_loss(self.net, x, c, self.cfg.consistency, self.cfg.time_sampler, self.streams.data)
        total = loss_ct * fsf.cd_weight
        lam = lambda_schedule(fsf.lambda_dmd, fsf.lambda_warmup_steps, step)

        rng = self.streams.dmd
        z, labels = self.draw_generator_inputs(rng)
        trace = simulate(self.net, z, labels, fsf.simulation, fsf.sim_steps, rng)
        sample = perturb(trace.endpoint, rng, fsf.gamma_shift)
        fake_weights = self.loop.ema.shadow if fsf.use_ema_fake_side else None
        delta = scratch_delta(self.net, sample.x_hat_t, sample.t, labels, fake_weights)
        instant = self.net.evaluate(sample.x_hat_t, sample.t, sample.t, labels, fake_weights)
        w = dmd_weight(fsf.weight_mode, sample.t, trace.tilde_f.data, instant, fsf.weight_constant)
        loss_fsf = fsf_dmd_loss(trace, delta, w)
        if lam > 0.0:
            total = total + loss_fsf * lam
        self.loop.update(total)
        return {
            "loss_cd": float(loss_ct.data),
            "loss_fsf": float(loss_fsf.data),
            "lambda_eff": lam,
            "loss_total": float(total.data),
        }


class Dmd2Trainer(BaseTrainer):
    """
    DMD2 baseline: `ttur_ratio` flow-matching updates of the fake network per
    generator update, optional IDA blending and optional consistency term.
    """

    def __init__(self, cfg: ExperimentConfig, teacher_source=None, init_source=None):
        super().__init__(cfg, teacher_source, init_source)
        self.teacher = load_teacher(self.teacher_source, self.spec)
        self.guidance = Guidance.from_config(cfg.fsf)
        self.fake = self.net.with_params(self._initial_fake_params())
        self.registry.register("fake", self.fake.params)
        self.fake_adam = AdamState.for_params(
            self.fake.params,
            cfg.dmd2.fake_learning_rate if cfg.dmd2.fake_learning_rate is not None else cfg.learning_rate,
            beta1=cfg.adam_beta1,
            beta2=cfg.adam_beta2,
            epsilon=cfg.adam_eps,
        )

    def metadata(self) -> Dict:
        return {**super().metadata(), "ttur_ratio": self.cfg.dmd2.ttur_ratio}

    def _initial_fake_params(self) -> ParamStore:
        fake = ParamStore()
        source = self.net.params.arrays()
        if isinstance(self.teacher, NetworkTeacher):
            teacher_arrays = self.teacher.weights
            if set(teacher_arrays) == set(source) and all(
                teacher_arrays[k].shape == source[k].shape for k in source
            ):
                source = teacher_arrays
            else:
                logger.warning("Teacher architecture differs from the generator; fake network starts from the generator")
        else:
            logger.info("Analytic teacher: fake network starts from the generator")
        for name in sorted(source):
            fake.add(name, source[name])
        return fake

    def fake_update(self) -> float:
        rng = self.streams.fake
        z, labels = self.draw_generator_inputs(rng)
        with no_grad():
            trace = simulate(self.net, z, labels, self.cfg.dmd2.simulation, self.cfg.dmd2.sim_steps, rng)
        loss = dmd2_fake_loss(self.fake, trace.endpoint, labels, rng)
        grads = backward(loss, self.fake.params)
        adam_step(self.fake.params, grads, self.fake_adam)
        return float(loss.data)

    def train_step(self, step: int) -> StepLosses:
        dmd2 = self.cfg.dmd2
        fake_losses = [self.fake_update() for _ in range(dmd2.ttur_ratio)]

        rng = self.streams.dmd
        z, labels = self.draw_generator_inputs(rng)
        trace = simulate(self.net, z, labels, dmd2.simulation, dmd2.sim_steps, rng)
        loss_gen = dmd2_generator_loss(
            trace, self.fake, self.teacher, labels, self.guidance, rng, self.fake.params.arrays()
        )
        losses: StepLosses = {"loss_fake": float(np.mean(fake_losses)), "loss_gen": float(loss_gen.data)}
        total = loss_gen
        if dmd2.with_cd:
            x, c = self.draw_data()
            loss_cd = cd_loss(
                self.net, self.teacher, x, c, self.cfg.consistency, self.cfg.time_sampler, self.streams.data,
                self.guidance,
            )
            lam = lambda_schedule(self.cfg.fsf.lambda_dmd, self.cfg.fsf.lambda_warmup_steps, step)
            total = loss_cd + loss_gen * lam
            losses.update(loss_cd=float(loss_cd.data), lambda_eff=lam)
        self.loop.update(total)
        if dmd2.ida_lambda is not None:
            try:
                ida_blend(self.fake.params, self.net.params, dmd2.ida_lambda)
            except KeyMismatchError as e:
                raise ConfigError(f"IDA needs identical generator and fake architectures: {e}") from e
        losses["loss_total"] = float(total.data)
        return losses


class TrainerFactory:
    """Factory for creating trainers by method"""

    @staticmethod
    def get_trainer(
        cfg: ExperimentConfig, teacher_source: Optional[str] = None, init_source: Optional[str] = None
    ) -> BaseTrainer:
        if cfg.method == Method.TEACHER_CFM:
            return TeacherTrainer(cfg)
        if cfg.method == Method.CT:
            return ConsistencyTrainer(cfg)
        if cfg.method in (Method.CD, Method.FSF_DMD):
            return DistillTrainer(cfg, teacher_source, init_source)
        if cfg.method == Method.DMD2:
            return Dmd2Trainer(cfg, teacher_source, init_source)
        if cfg.method == Method.FSF_SCRATCH:
            return ScratchTrainer(cfg)
        raise ConfigError(f"Unsupported method: {cfg.method}")


def with_method(cfg: ExperimentConfig, method: Method, seed: Optional[int]) -> ExperimentConfig:
    """Same config under another method. Only explicitly set knobs carry over, so method defaults apply."""
    merged = cfg.model_dump(mode="json", exclude_unset=True)
    merged["method"] = method.value
    if seed is not None:
        merged["seed"] = seed
    return ExperimentConfig.model_validate(merged)


def run_training(
    cfg: ExperimentConfig,
    teacher_source: Optional[str] = None,
    init_source: Optional[str] = None,
) -> RunResult:
    """
    Run the configured method end to end.

    Raises:
        ConfigError: invalid configuration or checkpoints
        DivergenceError: non-finite loss; the last good state is kept on disk
    """
    try:
        trainer = TrainerFactory.get_trainer(cfg, teacher_source, init_source)
        return trainer.train()
    except LabException:
        raise
    except Exception as e:
        logger.error(f"Training run failed: {str(e)}", exc_info=True)
        raise LabException(f"Training failed: {str(e)}") from e


def train_teacher(cfg: ExperimentConfig, seed: Optional[int] = None) -> RunResult:
    return run_training(with_method(cfg, Method.TEACHER_CFM, seed))


def train_ct(cfg: ExperimentConfig, seed: Optional[int] = None) -> RunResult:
    return run_training(with_method(cfg, Method.CT, seed))


def distill_cd(
    cfg: ExperimentConfig, teacher: Optional[str] = None, init: Optional[str] = None, seed: Optional[int] = None
) -> RunResult:
    return run_training(with_method(cfg, Method.CD, seed), teacher, init)


def distill_fsf(
    cfg: ExperimentConfig, teacher: Optional[str] = None, init: Optional[str] = None, seed: Optional[int] = None
) -> RunResult:
    """FSF-DMD distillation: consistency distillation plus λ·FSF-DMD on backward-simulated samples."""
    return run_training(with_method(cfg, Method.FSF_DMD, seed), teacher, init)


def distill_dmd2(
    cfg: ExperimentConfig, teacher: Optional[str] = None, init: Optional[str] = None, seed: Optional[int] = None
) -> RunResult:
    return run_training(with_method(cfg, Method.DMD2, seed), teacher, init)


def train_scratch(cfg: ExperimentConfig, seed: Optional[int] = None) -> RunResult:
    return run_training(with_method(cfg, Method.FSF_SCRATCH, seed))


def load_result_paths(out_dir: Union[str, Path]) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "checkpoint": out_dir / "checkpoint.npz",
        "log": out_dir / "train_log.csv",
        "manifest": out_dir / "manifest.json",
        "report": out_dir / "report.json",
    }
