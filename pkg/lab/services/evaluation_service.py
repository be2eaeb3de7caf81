import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from config.experiment_config import DatasetConfig
from config.presets import DatasetPreset
from oracle.gaussian_mixture import GaussianMixtureSpec, sample_gaussian_mixture
from services.sampling_service import draw_generation_inputs, generate_samples, load_model
from utils.exceptions import ConfigError, DomainError, LabException
from utils.metrics import MetricReport, evaluate_samples

logger = logging.getLogger(__name__)


def resolve_reference_spec(ref_preset: Optional[str], checkpoint_spec: Optional[GaussianMixtureSpec]) -> GaussianMixtureSpec:
    """The named preset wins; otherwise the dataset the checkpoint was trained on."""
    if ref_preset is not None:
        try:
            preset = DatasetPreset(ref_preset)
        except ValueError as e:
            raise ConfigError(f"Unknown reference preset: {ref_preset}") from e
        if preset == DatasetPreset.CUSTOM:
            raise ConfigError("A custom reference needs a config file, not --ref-preset")
        return DatasetConfig(preset=preset).build_spec()
    if checkpoint_spec is None:
        raise ConfigError("Checkpoint carries no dataset spec; pass --ref-preset")
    return checkpoint_spec


def run_eval(
    checkpoint: Union[str, Path],
    ref_preset: Optional[str] = None,
    n: int = 8192,
    steps: int = 2,
    seed: int = 20240917,
    projections: int = 256,
    radius_multiple: float = 3.0,
    bandwidth: Optional[float] = None,
    out_dir: Union[str, Path] = "runs/eval",
) -> MetricReport:
    """
    Sample a checkpoint (EMA weights) and compare against fresh reference data.

    Generation, reference data and metric projections each use their own
    stream derived from `seed`, so the report is reproducible.

    Raises:
        ConfigError: missing checkpoint or unknown preset
        DomainError: n < 1 or steps < 1
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    try:
        model = load_model(checkpoint)
        spec = resolve_reference_spec(ref_preset, model.spec)
        if spec.dimension != model.net.dimension:
            raise ConfigError(
                f"Reference dimension {spec.dimension} does not match the checkpoint ({model.net.dimension})"
            )
        class_weights = np.asarray((model.spec or spec).weights)
        z, labels = draw_generation_inputs(model.net.dimension, class_weights, n, np.random.default_rng(seed))
        samples = generate_samples(model.net, model.weights, z, labels, steps, model.method)
        reference, _ = sample_gaussian_mixture(spec, n, np.random.default_rng(seed + 1))
        report = evaluate_samples(
            samples,
            reference,
            spec,
            projections=projections,
            radius_multiple=radius_multiple,
            bandwidth=bandwidth,
            rng=np.random.default_rng(seed + 2),
        )

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_path = out_dir / "report.json"
        report_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        logger.info(
            f"Evaluated {checkpoint}: sw2={report.sw2:.4f} mmd={report.mmd:.5f} "
            f"coverage={report.mode_coverage:.3f} -> {report_path}"
        )
        return report
    except LabException:
        raise
    except Exception as e:
        logger.error(f"Evaluation of {checkpoint} failed: {str(e)}", exc_info=True)
        raise LabException(f"Evaluation failed: {str(e)}") from e
