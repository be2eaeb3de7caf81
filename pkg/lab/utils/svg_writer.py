"""Hand-written SVG 1.1 scatter plots with mixture contour overlays."""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np

from oracle.gaussian_mixture import GaussianMixtureSpec

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _as_plane(points) -> np.ndarray:
    """First two coordinates; 1-D data is drawn on the horizontal axis."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points.reshape(-1, 1)
    if points.shape[1] >= 2:
        return points[:, :2]
    return np.concatenate([points, np.zeros_like(points)], axis=1)


class _Frame:
    """Maps data coordinates onto a square canvas with a margin."""

    def __init__(self, bounds: Tuple[float, float, float, float], size: int, margin: int):
        self.x_min, self.x_max, self.y_min, self.y_max = bounds
        self.size = size
        self.margin = margin
        span = max(self.x_max - self.x_min, self.y_max - self.y_min, 1e-9)
        self.scale = (size - 2 * margin) / span

    def project(self, x: float, y: float) -> Tuple[float, float]:
        return (
            self.margin + (x - self.x_min) * self.scale,
            self.size - self.margin - (y - self.y_min) * self.scale,
        )


def _bounds(points: np.ndarray, spec: Optional[GaussianMixtureSpec]) -> Tuple[float, float, float, float]:
    chunks = [points] if points.shape[0] else []
    if spec is not None:
        _, means, stdevs = spec.arrays()
        reach = 2.5 * stdevs[:, None]
        chunks += [_as_plane(means) - reach, _as_plane(means) + reach]
    if not chunks:
        return (-1.0, 1.0, -1.0, 1.0)
    stacked = np.concatenate(chunks, axis=0)
    low, high = stacked.min(axis=0), stacked.max(axis=0)
    pad = 0.05 * max(float(np.max(high - low)), 1e-6)
    return (low[0] - pad, high[0] + pad, low[1] - pad, high[1] + pad)


def contour_polylines(
    spec: GaussianMixtureSpec, levels: Sequence[float] = (1.0, 2.0), segments: int = 64
) -> List[np.ndarray]:
    """Closed circles at `level`·σ_k around every component mean (first two coordinates)."""
    _, means, stdevs = spec.arrays()
    angles = np.linspace(0.0, 2.0 * np.pi, segments + 1)
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    plane = _as_plane(means)
    return [plane[k] + level * stdevs[k] * ring for k in range(spec.num_components) for level in levels]


def scatter_svg(
    points: np.ndarray,
    labels: Optional[np.ndarray] = None,
    spec: Optional[GaussianMixtureSpec] = None,
    title: str = "",
    size: int = 480,
    margin: int = 24,
) -> str:
    """Render points (first two coordinates) and optional contours as an SVG document."""
    points = _as_plane(points)
    frame = _Frame(_bounds(points, spec), size, margin)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        parts.append(f'<title>{escape(title)}</title>')
    if spec is not None:
        for line in contour_polylines(spec):
            coords = " ".join("{:.2f},{:.2f}".format(*frame.project(x, y)) for x, y in line)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="#444444" stroke-width="1" opacity="0.6"/>')
    for i, (x, y) in enumerate(points):
        px, py = frame.project(x, y)
        color = PALETTE[int(labels[i]) % len(PALETTE)] if labels is not None else PALETTE[0]
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.5" fill="{color}" fill-opacity="0.6"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_scatter_svg(path: Union[str, Path], points: np.ndarray, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scatter_svg(points, **kwargs), encoding="utf-8")
    return path
