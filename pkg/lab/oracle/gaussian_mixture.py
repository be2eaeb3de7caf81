"""
Isotropic Gaussian-mixture data distributions and their exact perturbed
quantities under the linear interpolant: log-density, posterior mean,
marginal velocity and marginal score.

At time t a component N(μ_k, σ_k² I) becomes N((1−t)μ_k, ((1−t)²σ_k² + t²) I).
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import logsumexp

from oracle.interpolant import TimeLike, check_positive_time, check_unit_interval, time_column
from utils.exceptions import NonFiniteError

logger = logging.getLogger(__name__)


class GaussianMixtureSpec(BaseModel):
    """
    Data distribution Σ_k π_k N(μ_k, σ_k² I). The component index doubles as
    the class label; label K (== number of components) is the null class ∅.

    Attributes:
        weights (List[float]): mixture weights π_k, positive, summing to 1
        means (List[List[float]]): component means μ_k, all of dimension d
        stdevs (List[float]): isotropic standard deviations σ_k > 0
    """
    weights: List[float] = Field(..., min_length=1)
    means: List[List[float]] = Field(..., min_length=1)
    stdevs: List[float] = Field(..., min_length=1)

    class Config:
        frozen = True
        extra = "forbid"
        json_schema_extra = {
            "example": {
                "weights": [0.5, 0.5],
                "means": [[-1.0, 0.0], [1.0, 0.0]],
                "stdevs": [0.1, 0.1],
            }
        }

    @model_validator(mode="after")
    def _check_invariants(self) -> "GaussianMixtureSpec":
        k = len(self.weights)
        if len(self.means) != k or len(self.stdevs) != k:
            raise ValueError("weights, means and stdevs must have the same length")
        if any(w <= 0.0 for w in self.weights):
            raise ValueError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {sum(self.weights)!r}")
        if any(s <= 0.0 for s in self.stdevs):
            raise ValueError("component stdevs must be positive")
        dims = {len(m) for m in self.means}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("all component means must share one non-zero dimension")
        return self

    @property
    def dimension(self) -> int:
        return len(self.means[0])

    @property
    def num_components(self) -> int:
        return len(self.weights)

    @property
    def null_label(self) -> int:
        return self.num_components

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.asarray(self.weights, dtype=np.float64),
            np.asarray(self.means, dtype=np.float64),
            np.asarray(self.stdevs, dtype=np.float64),
        )


def sample_gaussian_mixture(
    spec: GaussianMixtureSpec, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw n labelled data points; returns (x of shape (n, d), labels of shape (n,))."""
    weights, means, stdevs = spec.arrays()
    labels = rng.choice(spec.num_components, size=n, p=weights)
    noise = rng.standard_normal((n, spec.dimension))
    return means[labels] + stdevs[labels, None] * noise, labels


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _component_terms(
    spec: GaussianMixtureSpec,
    x_t: np.ndarray,
    t: TimeLike,
    labels: Optional[np.ndarray] = None,
):
    """Per-component diffs, variances and log-responsibilities at time t."""
    weights, means, stdevs = spec.arrays()
    d = spec.dimension
    tt = np.asarray(t, dtype=np.float64)
    t_col = tt.reshape(-1, 1) if tt.ndim else np.full((1, 1), float(tt))
    a_col = 1.0 - t_col

    var = a_col ** 2 * stdevs[None, :] ** 2 + t_col ** 2  # (n|1, K)
    diff = x_t[:, None, :] - a_col[:, :, None] * means[None, :, :]  # (n, K, d)
    sq = np.sum(diff ** 2, axis=-1)
    log_comp = np.log(weights)[None, :] - 0.5 * sq / var - 0.5 * d * np.log(2.0 * np.pi * var)
    if labels is not None:
        labels = np.broadcast_to(np.asarray(labels), (x_t.shape[0],))
        conditioned = labels < spec.num_components
        allowed = np.arange(spec.num_components)[None, :] == labels[:, None]
        log_comp = np.where(conditioned[:, None] & ~allowed, -np.inf, log_comp)
    log_norm = logsumexp(log_comp, axis=1, keepdims=True)
    log_resp = log_comp - log_norm
    resp = np.exp(log_resp)
    if not np.all(np.isfinite(resp)):
        raise NonFiniteError("Non-finite mixture responsibilities")
    return diff, var, a_col, resp, log_norm[:, 0]


def gm_log_density(spec: GaussianMixtureSpec, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """log p_t(x_t) of the perturbed mixture; valid on all of [0, 1]."""
    check_unit_interval(t)
    x_b, single = _as_batch(x_t)
    *_, log_norm = _component_terms(spec, x_b, t)
    return log_norm[0] if single else log_norm


def gm_posterior_mean(
    spec: GaussianMixtureSpec, x_t: np.ndarray, t: TimeLike, labels: Optional[np.ndarray] = None
) -> np.ndarray:
    """E[x | x_t]: responsibility-weighted Gaussian posterior means."""
    check_unit_interval(t)
    x_b, single = _as_batch(x_t)
    _, means, stdevs = spec.arrays()
    diff, var, a_col, resp, _ = _component_terms(spec, x_b, t, labels)
    gain = a_col * stdevs[None, :] ** 2 / var  # (n|1, K)
    post = means[None, :, :] + gain[:, :, None] * diff  # (n, K, d)
    mean = np.sum(resp[:, :, None] * post, axis=1)
    return mean[0] if single else mean


def gm_class_velocity(
    spec: GaussianMixtureSpec, x_t: np.ndarray, t: TimeLike, labels: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Exact velocity (x_t − E[x | x_t, c]) / t. Rows labelled with a component
    index condition on that component; the null label uses the whole mixture.
    """
    check_positive_time(t)
    x_b, single = _as_batch(x_t)
    mean = gm_posterior_mean(spec, x_b, t, labels)
    v = (x_b - mean) / time_column(t, x_b)
    return v[0] if single else v


def gm_marginal_velocity(spec: GaussianMixtureSpec, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    return gm_class_velocity(spec, x_t, t, labels=None)


def gm_marginal_score(spec: GaussianMixtureSpec, x_t: np.ndarray, t: TimeLike) -> np.ndarray:
    """∇ log p_t(x_t) = Σ_k r_k · (−(x_t − (1−t)μ_k) / ρ_k²)."""
    check_positive_time(t)
    x_b, single = _as_batch(x_t)
    diff, var, _, resp, _ = _component_terms(spec, x_b, t)
    score = -np.sum(resp[:, :, None] * diff / var[:, :, None], axis=1)
    return score[0] if single else score
