"""LIME over a black-box predictor: grid superpixels, seeded mask sampling,
perturbed-image rendering, kernel-weighted ridge surrogate, and rendering
of the most influential superpixels.

Predictors are queried through a small handle interface with two built-in
implementations: an in-process stub (linear in per-superpixel mean
intensity) and an external command following the manifest protocol
(``<command> --manifest <csv> --out <csv>``).
"""

from __future__ import annotations

import csv
import subprocess
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ..dataset import ClassVocabulary
from ..errors import ArgumentError, FoldwiseError, ProtocolError
from ..predictions import load_predictions
from .images import RgbImage, save_png

_QUERY_BATCH = 64


@dataclass(frozen=True)
class SuperpixelMap:
    """Per-pixel superpixel ids covering 0..n_superpixels-1."""

    labels: np.ndarray
    n_superpixels: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            raise ArgumentError("superpixel labels must be 2-d")
        present = np.unique(labels)
        expected = np.arange(self.n_superpixels)
        if present.size != self.n_superpixels or (present != expected).any():
            raise ArgumentError(
                f"superpixel ids must be exactly 0..{self.n_superpixels - 1}, each occurring at least once"
            )
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class LimeParams:
    n_samples: int = 1000
    kernel_sigma: float = 0.25
    ridge_lambda: float = 1.0
    top_m: int = 5
    grid_size: int = 8
    fill_rule: str = "mean-color"

    def __post_init__(self):
        if self.n_samples < 10:
            raise ArgumentError("n_samples must be >= 10")
        if self.kernel_sigma <= 0:
            raise ArgumentError("kernel_sigma must be > 0")
        if self.ridge_lambda < 0:
            raise ArgumentError("ridge_lambda must be >= 0")
        if self.top_m < 0:
            raise ArgumentError("top_m must be >= 0")
        if self.grid_size < 1:
            raise ArgumentError("grid_size must be >= 1")
        if self.fill_rule != "mean-color":
            raise ArgumentError(f"unknown fill rule {self.fill_rule!r}")


@dataclass(frozen=True)
class LimeExplanation:
    """Per-superpixel surrogate coefficients and the most influential ids."""

    weights: np.ndarray
    intercept: float
    top: tuple[int, ...]
    params: LimeParams

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).copy()
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)


class PredictorHandle(Protocol):
    """Anything that can score a batch of images into class-probability rows."""

    def predict_proba(self, images: Sequence[RgbImage]) -> np.ndarray: ...


class StubPredictor:
    """In-process predictor, linear in per-superpixel mean intensity.

    The probability of `hot_class` is ``clip01(bias + sum_j w_j * mu_j)``
    where mu_j is the mean pixel intensity of region j scaled to [0, 1];
    the remaining mass is spread evenly over the other classes. With no
    segmentation map the whole image is one region with weight 1.
    """

    def __init__(
        self,
        vocab: ClassVocabulary,
        segmap: SuperpixelMap | None = None,
        weights: Sequence[float] | None = None,
        bias: float = 0.0,
        hot_class: int = 1,
    ):
        self.vocab = vocab
        self.segmap = segmap
        if segmap is not None:
            self.weights = (
                np.full(segmap.n_superpixels, 1.0 / segmap.n_superpixels)
                if weights is None
                else np.asarray(weights, dtype=np.float64)
            )
            if self.weights.shape != (segmap.n_superpixels,):
                raise ArgumentError("need one weight per superpixel")
        else:
            self.weights = np.array([1.0]) if weights is None else np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        if not 0 <= hot_class < len(vocab):
            raise ArgumentError(f"hot_class {hot_class} outside vocabulary")
        self.hot_class = hot_class

    def predict_proba(self, images: Sequence[RgbImage]) -> np.ndarray:
        c = len(self.vocab)
        out = np.empty((len(images), c), dtype=np.float64)
        for i, image in enumerate(images):
            intensity = image.pixels.astype(np.float64).mean(axis=2) / 255.0
            if self.segmap is not None:
                mu = np.array(
                    [
                        intensity[self.segmap.labels == j].mean()
                        for j in range(self.segmap.n_superpixels)
                    ]
                )
            else:
                mu = np.array([intensity.mean()])
            p = float(np.clip(self.bias + float(self.weights @ mu), 0.0, 1.0))
            row = np.full(c, (1.0 - p) / (c - 1))
            row[self.hot_class] = p
            out[i] = row
        return out


class CommandPredictor:
    """External predictor following the manifest protocol.

    For each query batch the images are written as PNGs next to a manifest
    CSV (``row_id,image_path``), then ``<command> --manifest M --out O`` is
    invoked; the command must write a prediction file whose sample ids are
    the manifest row ids and exit 0.
    """

    def __init__(self, command: Sequence[str], vocab: ClassVocabulary):
        if not command:
            raise ArgumentError("predictor command must be non-empty")
        self.command = list(command)
        self.vocab = vocab

    def predict_proba(self, images: Sequence[RgbImage]) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="foldwise-predict-") as tmp:
            tmpdir = Path(tmp)
            manifest = tmpdir / "manifest.csv"
            out_path = tmpdir / "predictions.csv"
            row_ids = [f"row{i}" for i in range(len(images))]
            with manifest.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["row_id", "image_path"])
                for rid, image in zip(row_ids, images):
                    png = tmpdir / f"{rid}.png"
                    save_png(image, png)
                    writer.writerow([rid, str(png)])
            argv = [*self.command, "--manifest", str(manifest), "--out", str(out_path)]
            try:
                proc = subprocess.run(argv, capture_output=True, text=True)
            except OSError as exc:
                raise ProtocolError(f"cannot invoke predictor {self.command!r}: {exc}") from exc
            if proc.returncode != 0:
                raise ProtocolError(
                    f"predictor exited {proc.returncode}: {proc.stderr.strip()[:500]}"
                )
            try:
                matrix = load_predictions(out_path, self.vocab)
            except FileNotFoundError:
                raise ProtocolError("predictor wrote no output file") from None
            except FoldwiseError as exc:
                raise ProtocolError(f"malformed predictor reply: {exc}") from exc
            by_id = {sid: i for i, sid in enumerate(matrix.sample_ids)}
            missing = [rid for rid in row_ids if rid not in by_id]
            if missing:
                raise ProtocolError(f"predictor reply lacks rows {missing[:5]!r}")
            return matrix.rows[[by_id[rid] for rid in row_ids]]


def segment_grid(image: RgbImage, s: int) -> SuperpixelMap:
    """Split the image into an s-by-s grid of rectangular superpixels.

    Remainder rows/columns are absorbed by the last cell row/column; ids are
    assigned row-major. An s larger than an image dimension is clamped (with
    a warning).
    """
    if s < 1:
        raise ArgumentError("grid size must be >= 1")
    h, w = image.height, image.width
    clamped = min(s, h, w)
    if clamped != s:
        warnings.warn(
            f"grid size {s} exceeds image dimensions {h}x{w}; clamped to {clamped}",
            UserWarning,
            stacklevel=2,
        )
        s = clamped
    cell_h = h // s
    cell_w = w // s
    rows = np.minimum(np.arange(h) // cell_h, s - 1)
    cols = np.minimum(np.arange(w) // cell_w, s - 1)
    labels = rows[:, None] * s + cols[None, :]
    return SuperpixelMap(labels, s * s)


def _mean_color(image: RgbImage) -> np.ndarray:
    mean = image.pixels.reshape(-1, 3).astype(np.float64).mean(axis=0)
    return np.floor(mean + 0.5).astype(np.uint8)


def _draw_masks(n_samples: int, n_superpixels: int, seed: int) -> np.ndarray:
    """Row 0 is all ones; row i >= 1 draws its bits from sub-seed (seed, i)."""
    masks = np.empty((n_samples, n_superpixels), dtype=np.float64)
    masks[0] = 1.0
    for i in range(1, n_samples):
        rng = np.random.default_rng([seed, i])
        masks[i] = (rng.random(n_superpixels) < 0.5).astype(np.float64)
    return masks


def _render_masked(
    image: RgbImage, segmap: SuperpixelMap, mask: np.ndarray, fill: np.ndarray
) -> RgbImage:
    off = mask[segmap.labels] == 0.0
    pixels = image.pixels.copy()
    pixels[off] = fill
    return RgbImage(pixels)


def _kernel_weights(masks: np.ndarray, sigma: float) -> np.ndarray:
    """exp(-d^2 / sigma^2) with d the cosine distance from the all-ones mask."""
    s = masks.shape[1]
    on = masks.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(on > 0, np.sqrt(on / s), 0.0)
    d = 1.0 - cos
    return np.exp(-(d**2) / sigma**2)


def solve_weighted_ridge(
    design: np.ndarray, response: np.ndarray, sample_weights: np.ndarray, lam: float
) -> np.ndarray:
    """Solve the weighted ridge normal equations with an unpenalized intercept.

    design has the intercept column first; returns [intercept, coef...].
    """
    xw = design * sample_weights[:, None]
    a = design.T @ xw
    penalty = np.eye(design.shape[1])
    penalty[0, 0] = 0.0
    a += lam * penalty
    b = xw.T @ response
    return np.linalg.solve(a, b)


def lime_explain(
    image: RgbImage,
    segmap: SuperpixelMap,
    predictor: PredictorHandle,
    target_class: int,
    params: LimeParams,
    seed: int,
) -> LimeExplanation:
    """Fit the local surrogate and rank superpixels by influence.

    Masks are Bernoulli(0.5) per bit (sample 0 forced to all ones), off
    superpixels are filled with the image's mean color, the predictor is
    queried in batches, and a kernel-weighted ridge regression of the
    target-class probability on the mask bits yields the coefficients.
    """
    if (segmap.height, segmap.width) != (image.height, image.width):
        raise ArgumentError("segmentation map does not match image dimensions")
    s = segmap.n_superpixels
    if s > params.n_samples:
        warnings.warn(
            f"{s} superpixels but only {params.n_samples} samples: the surrogate fit is underdetermined",
            UserWarning,
            stacklevel=2,
        )
    masks = _draw_masks(params.n_samples, s, seed)
    fill = _mean_color(image)
    probs = np.empty(params.n_samples, dtype=np.float64)
    for start in range(0, params.n_samples, _QUERY_BATCH):
        batch = [
            _render_masked(image, segmap, masks[i], fill)
            for i in range(start, min(start + _QUERY_BATCH, params.n_samples))
        ]
        rows = np.asarray(predictor.predict_proba(batch), dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(batch) or target_class >= rows.shape[1]:
            raise ProtocolError(
                f"predictor returned shape {rows.shape} for a batch of {len(batch)}"
            )
        probs[start : start + len(batch)] = rows[:, target_class]
    sample_weights = _kernel_weights(masks, params.kernel_sigma)
    design = np.hstack([np.ones((params.n_samples, 1)), masks])
    beta = solve_weighted_ridge(design, probs, sample_weights, params.ridge_lambda)
    weights = beta[1:]
    order = sorted(range(s), key=lambda j: (-abs(weights[j]), j))
    top = tuple(order[: min(params.top_m, s)])
    return LimeExplanation(weights, float(beta[0]), top, params)


def lime_render(image: RgbImage, segmap: SuperpixelMap, expl: LimeExplanation) -> RgbImage:
    """Keep the top superpixels at full intensity (with a 1-pixel outline);
    darken everything else by 60%."""
    if (segmap.height, segmap.width) != (image.height, image.width):
        raise ArgumentError("segmentation map does not match image dimensions")
    pixels = np.floor(image.pixels.astype(np.float64) * 0.4 + 0.5).astype(np.uint8)
    top = np.asarray(sorted(expl.top), dtype=np.int64)
    if top.size:
        keep = np.isin(segmap.labels, top)
        pixels[keep] = image.pixels[keep]
        boundary = keep & _inner_boundary(segmap.labels)
        pixels[boundary] = (255, 255, 0)
    return RgbImage(pixels)


def _inner_boundary(labels: np.ndarray) -> np.ndarray:
    """Pixels with a 4-neighbor carrying a different superpixel id."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    b[1:, :] |= labels[1:, :] != labels[:-1, :]
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return b
