from enum import Enum
from typing import List, Optional

import numpy as np

from oracle.gaussian_mixture import GaussianMixtureSpec


class DatasetPreset(str, Enum):
    """Built-in analytic data distributions"""
    GM8_RING = "gm8-ring"
    GM2_SYM = "gm2-sym"
    G1 = "g1"
    CUSTOM = "custom"


def gm8_ring(radius: float = 1.0, stdev: float = 0.05) -> GaussianMixtureSpec:
    """Eight equally weighted components on a ring."""
    angles = 2.0 * np.pi * np.arange(8) / 8
    means = np.stack([np.cos(angles), np.sin(angles)], axis=1) * radius
    return GaussianMixtureSpec(
        weights=[1.0 / 8] * 8,
        means=means.tolist(),
        stdevs=[stdev] * 8,
    )


def gm2_sym(offset: float = 1.0, stdev: float = 0.3, dimension: int = 2) -> GaussianMixtureSpec:
    """Equal-weight pair at ±offset along the first axis."""
    mu = np.zeros(dimension)
    mu[0] = offset
    return GaussianMixtureSpec(
        weights=[0.5, 0.5],
        means=[(-mu).tolist(), mu.tolist()],
        stdevs=[stdev, stdev],
    )


def g1(mean: Optional[List[float]] = None, stdev: float = 1.0) -> GaussianMixtureSpec:
    """Single Gaussian N(mean, stdev² I); the only case with a closed-form flow map."""
    return GaussianMixtureSpec(
        weights=[1.0],
        means=[list(mean) if mean is not None else [2.0]],
        stdevs=[stdev],
    )
