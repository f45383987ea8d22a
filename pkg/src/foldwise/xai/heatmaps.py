"""Grad-CAM compositing, heatmap resampling/averaging, and overlay rendering.

Grad-CAM here is model-agnostic: it consumes exported activation and
gradient tensors of shape [channels, height, width] and never touches a
network. Channel weights are the spatial means of the gradient channels;
the weighted sum is rectified and min-max normalized into [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ArgumentError
from ..numeric import canonical_mean
from .images import RgbImage
from .tensorfile import Tensor32


@dataclass(frozen=True)
class Heatmap:
    """values: float array (height, width) with every entry in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ArgumentError(f"heatmap must be 2-d, got shape {values.shape}")
        if ((values < 0.0) | (values > 1.0)).any():
            raise ArgumentError("heatmap values must lie in [0, 1]")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def grad_cam(activations: Tensor32, gradients: Tensor32) -> Heatmap:
    """Composite a class heatmap from exported activations and gradients.

    Per channel k the weight is the mean of gradients[k]; the raw map is the
    weighted sum of activation channels, negatives clipped to 0, then min-max
    normalized. A constant raw map normalizes to all zeros.
    """
    a = activations.data.astype(np.float64)
    g = gradients.data.astype(np.float64)
    if a.ndim != 3 or g.ndim != 3:
        raise ArgumentError("activations and gradients must have rank 3 [K, H, W]")
    if a.shape != g.shape:
        raise ArgumentError(f"shape mismatch: activations {a.shape} vs gradients {g.shape}")
    alpha = g.mean(axis=(1, 2))
    raw = np.einsum("k,khw->hw", alpha, a)
    raw = np.maximum(raw, 0.0)
    lo = raw.min()
    hi = raw.max()
    if hi == lo:
        return Heatmap(np.zeros_like(raw))
    return Heatmap(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))


def upsample_bilinear(h: Heatmap, out_w: int, out_h: int) -> Heatmap:
    """Corner-aligned bilinear resampling (corner pixels map exactly)."""
    if out_w < 1 or out_h < 1:
        raise ArgumentError("target dimensions must be positive")
    src = h.values
    in_h, in_w = src.shape
    ys = np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = src[y0][:, x0] * (1.0 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1.0 - wx) + src[y1][:, x1] * wx
    out = top * (1.0 - wy) + bottom * wy
    return Heatmap(np.clip(out, 0.0, 1.0))


def average_heatmaps(maps: Sequence[Heatmap]) -> Heatmap:
    """Pixelwise arithmetic mean; no renormalization.

    Averaging k copies of one map returns that map exactly, and the result
    does not depend on the order of the list.
    """
    if not maps:
        raise ArgumentError("need at least one heatmap")
    shape = maps[0].values.shape
    for i, m in enumerate(maps[1:], start=2):
        if m.values.shape != shape:
            raise ArgumentError(f"heatmap {i} has shape {m.values.shape}, expected {shape}")
    mean = canonical_mean(np.stack([m.values for m in maps]))
    return Heatmap(np.clip(mean, 0.0, 1.0))


def colorize(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values through the blue -> green -> red ramp (float RGB)."""
    v = np.asarray(values, dtype=np.float64)
    t_low = np.clip(v / 0.5, 0.0, 1.0)
    t_high = np.clip((v - 0.5) / 0.5, 0.0, 1.0)
    r = 255.0 * t_high
    b = 255.0 * (1.0 - t_low)
    g = np.where(v <= 0.5, 255.0 * t_low, 255.0 * (1.0 - t_high))
    return np.stack([r, g, b], axis=-1)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def overlay(image: RgbImage, heatmap: Heatmap, alpha: float) -> RgbImage:
    """Blend the colorized heatmap over the image: (1-alpha)*image + alpha*color."""
    if not 0.0 <= alpha <= 1.0:
        raise ArgumentError(f"alpha must lie in [0, 1], got {alpha!r}")
    if (heatmap.height, heatmap.width) != (image.height, image.width):
        raise ArgumentError(
            f"heatmap {heatmap.values.shape} does not match image "
            f"{(image.height, image.width)}; upsample first"
        )
    color = colorize(heatmap.values)
    blended = (1.0 - alpha) * image.pixels.astype(np.float64) + alpha * color
    return RgbImage(np.clip(_round_half_up(blended), 0, 255).astype(np.uint8))
