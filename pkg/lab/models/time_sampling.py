from typing import Optional, Tuple

import numpy as np

from config.experiment_config import TimeSamplerConfig
from oracle.interpolant import T_MIN, TimePair


def order_time_pair(
    first: np.ndarray, second: np.ndarray, mask: np.ndarray, reorder: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reorder raw draws so t ≥ s, then collapse masked rows to s = t.

    Args:
        first, second: raw time draws
        mask: rows where s is overwritten with t
        reorder: sort the pair before masking

    Returns:
        Tuple[np.ndarray, np.ndarray]: (t, s)
    """
    first = np.asarray(first, dtype=np.float64)
    second = np.asarray(second, dtype=np.float64)
    if reorder:
        t, s = np.maximum(first, second), np.minimum(first, second)
    else:
        t, s = first, second
    s = np.where(mask, t, s)
    return t, s


def _draw_times(cfg: TimeSamplerConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform or Beta draws, redrawing anything below T_MIN."""
    def draw(k: int) -> np.ndarray:
        return rng.random(k) if cfg.uniform else rng.beta(cfg.beta_alpha, cfg.beta_beta, size=k)

    u = draw(n)
    low = u < T_MIN
    while np.any(low):
        u[low] = draw(int(low.sum()))
        low = u < T_MIN
    return u


def draw_raw_times(cfg: TimeSamplerConfig, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two independent time draws plus the s→t mask, in that rng order."""
    first = _draw_times(cfg, rng, n)
    second = _draw_times(cfg, rng, n)
    mask = rng.random(n) < cfg.mask_prob
    return first, second, mask


def sample_time_pair(
    cfg: TimeSamplerConfig, rng: np.random.Generator, n: Optional[int] = None, reorder: bool = True
) -> TimePair:
    """
    Draw (t, s) per row: Beta(α, β) twice (or uniform), ordered so t ≥ s,
    with s forced to t with probability `mask_prob`.

    Raises:
        DomainError: when reordering is skipped and a draw violates s ≤ t
    """
    size = 1 if n is None else n
    t, s = order_time_pair(*draw_raw_times(cfg, rng, size), reorder=reorder)
    if n is None:
        return TimePair(t=float(t[0]), s=float(s[0]))
    return TimePair(t=t, s=s)
