"""Explainability layer: TNSR tensor files, Grad-CAM compositing, cross-fold
heatmap averaging, overlay rendering, grid superpixels, and LIME."""

from .tensorfile import Tensor32, read_tensor, write_tensor
from .images import RgbImage, load_png, save_png
from .heatmaps import Heatmap, average_heatmaps, grad_cam, overlay, upsample_bilinear
from .lime import (
    CommandPredictor,
    LimeExplanation,
    LimeParams,
    StubPredictor,
    SuperpixelMap,
    lime_explain,
    lime_render,
    segment_grid,
)

__all__ = [
    "Tensor32",
    "read_tensor",
    "write_tensor",
    "RgbImage",
    "load_png",
    "save_png",
    "Heatmap",
    "grad_cam",
    "upsample_bilinear",
    "average_heatmaps",
    "overlay",
    "SuperpixelMap",
    "segment_grid",
    "LimeParams",
    "LimeExplanation",
    "StubPredictor",
    "CommandPredictor",
    "lime_explain",
    "lime_render",
]
