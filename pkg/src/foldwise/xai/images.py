"""8-bit RGB image carrier plus PNG read/write (Pillow-backed)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ArgumentError


@dataclass(frozen=True)
class RgbImage:
    """pixels: uint8 array of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ArgumentError(f"pixels must be (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ArgumentError("image dimensions must be positive")
        if px.dtype != np.uint8:
            raise ArgumentError(f"pixels must be uint8, got {px.dtype}")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_png(path: str | Path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_png(image: RgbImage, path: str | Path) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")
