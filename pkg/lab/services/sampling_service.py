"""
Sampling from trained checkpoints: flow-map rollouts for few-step
generators, Euler integration for velocity teachers, plus CSV/SVG output.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from config.experiment_config import Method
from core.layers import Weights
from models.pseudo_velocity_net import PseudoVelocityNet
from models.rollout import rollout
from oracle.gaussian_flow import euler_pf_ode
from oracle.gaussian_mixture import GaussianMixtureSpec
from storage.checkpoint import Checkpoint, load_checkpoint
from utils.exceptions import DomainError, LabException
from utils.metrics import SampleSet
from utils.svg_writer import write_scatter_svg

logger = logging.getLogger(__name__)


@dataclass
class LoadedModel:
    """A network rebuilt from a checkpoint, with the weights used for sampling."""
    net: PseudoVelocityNet
    weights: Dict[str, np.ndarray]
    checkpoint: Checkpoint
    spec: Optional[GaussianMixtureSpec]
    method: Method


def load_model(path: Union[str, Path], use_ema: bool = True) -> LoadedModel:
    """
    Rebuild a network from a checkpoint; EMA weights are preferred when present.

    Raises:
        ConfigError: missing or unreadable checkpoint
    """
    checkpoint = load_checkpoint(path)
    net = PseudoVelocityNet.from_architecture(checkpoint.architecture, checkpoint.params)
    net.params.step_count = checkpoint.step_count
    weights = checkpoint.ema.shadow if (use_ema and checkpoint.ema is not None) else checkpoint.params
    raw_spec = checkpoint.metadata.get("dataset_spec")
    spec = GaussianMixtureSpec.model_validate(raw_spec) if raw_spec else None
    method = Method(checkpoint.metadata.get("method", Method.FSF_DMD.value))
    return LoadedModel(net=net, weights=weights, checkpoint=checkpoint, spec=spec, method=method)


def draw_generation_inputs(
    dimension: int,
    class_weights: np.ndarray,
    n: int,
    rng: np.random.Generator,
    class_filter: Optional[int] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Labels first (mixture weights or a fixed class), then N(0, I) noise."""
    if class_filter is None:
        labels = rng.choice(len(class_weights), size=n, p=class_weights)
    else:
        if not 0 <= class_filter <= len(class_weights):
            raise DomainError(f"class filter {class_filter} outside 0..{len(class_weights)}")
        labels = np.full(n, class_filter, dtype=np.int64)
    z = rng.standard_normal((n, dimension))
    return z, labels


def generate_samples(
    net: PseudoVelocityNet,
    weights: Optional[Weights],
    z: np.ndarray,
    labels: np.ndarray,
    steps: int,
    method: Method,
) -> np.ndarray:
    """Teachers integrate their velocity with Euler; every other method rolls out its flow map."""
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    if z.shape[0] == 0:
        return z.copy()
    if method == Method.TEACHER_CFM:
        def field(x, t):
            return net.evaluate(x, t, t, labels, weights)

        return euler_pf_ode(field, z, 1.0, 0.0, steps)
    samples, _ = rollout(net, z, labels, steps, weights)
    return samples


def write_samples_csv(path: Union[str, Path], samples: SampleSet) -> Path:
    """RFC-4180 style CSV with header x1..xd,label."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dimension = samples.dimension
    labels = samples.labels if samples.labels is not None else np.full(len(samples), -1)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(dimension)] + ["label"])
        for point, label in zip(samples.points, labels):
            writer.writerow([repr(float(v)) for v in point] + [int(label)])
    return path


@dataclass
class SampleResult:
    samples: SampleSet
    csv_path: Path
    svg_path: Path


def run_sample(
    checkpoint: Union[str, Path],
    n: int,
    steps: int = 2,
    class_filter: Optional[int] = None,
    seed: int = 0,
    out_dir: Union[str, Path] = "runs/samples",
) -> SampleResult:
    """
    Draw n samples from a checkpoint and write samples.csv and samples.svg under out_dir.

    Raises:
        ConfigError: missing checkpoint
        DomainError: steps < 1 or n < 0
    """
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    try:
        model = load_model(checkpoint)
        net = model.net
        class_weights = (
            np.asarray(model.spec.weights) if model.spec is not None else np.full(net.num_classes, 1.0 / net.num_classes)
        )
        rng = np.random.default_rng(seed)
        z, labels = draw_generation_inputs(net.dimension, class_weights, n, rng, class_filter)
        points = generate_samples(net, model.weights, z, labels, steps, model.method)
        samples = SampleSet(points=points.reshape(n, net.dimension), labels=labels)

        out_dir = Path(out_dir)
        csv_path = write_samples_csv(out_dir / "samples.csv", samples)
        svg_path = write_scatter_svg(
            out_dir / "samples.svg",
            samples.points,
            labels=samples.labels,
            spec=model.spec,
            title=f"{model.method.value}: {n} samples, {steps} steps",
        )
        logger.info(f"Wrote {n} samples to {csv_path}")
        return SampleResult(samples=samples, csv_path=csv_path, svg_path=svg_path)
    except LabException:
        raise
    except Exception as e:
        logger.error(f"Sampling from {checkpoint} failed: {str(e)}", exc_info=True)
        raise LabException(f"Sampling failed: {str(e)}") from e
