"""File exchange with the toolkit: index/split/folds readers, the prediction
CSV writer, the TNSR v1 tensor writer, and image loading.

These mirror the toolkit's external formats; the adapter deliberately has no
code dependency on the toolkit itself.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
from PIL import Image

TNSR_MAGIC = b"TNSR"
TNSR_VERSION = 1
TNSR_FLOAT32 = 1


def read_index(path: str | Path) -> list[dict]:
    """Rows of the sample index: sample_id, label, image_path."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_id", "label", "image_path"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def read_split(path: str | Path) -> dict[str, str]:
    """sample_id -> set name (train / test_models / test_ensemble)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_id", "set"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return {row["sample_id"]: row["set"] for row in reader}


def read_folds(path: str | Path) -> dict[str, int]:
    """sample_id -> validation fold number (1-based)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["sample_id", "fold"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return {row["sample_id"]: int(row["fold"]) for row in reader}


def read_manifest(path: str | Path) -> list[tuple[str, str]]:
    """Predictor-protocol manifest rows: (row_id, image_path)."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["row_id", "image_path"]:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [(row["row_id"], row["image_path"]) for row in reader]


def write_predictions(
    path: str | Path, sample_ids, rows: np.ndarray, classes: tuple[str, ...]
) -> None:
    """Prediction CSV: 9 significant digits, rows renormalized to sum to 1."""
    rows = np.asarray(rows, dtype=np.float64)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *classes])
        for sid, row in zip(sample_ids, rows):
            total = row.sum()
            if total > 0:
                row = row / total
            writer.writerow([sid, *(f"{v:.9g}" for v in row)])
    tmp.replace(path)


def write_tnsr(path: str | Path, array: np.ndarray) -> None:
    """TNSR v1: magic, version, dtype tag, rank, u32 dims, then the payload."""
    data = np.ascontiguousarray(array, dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(struct.pack("<4sBBB", TNSR_MAGIC, TNSR_VERSION, TNSR_FLOAT32, data.ndim))
        fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
        fh.write(data.tobytes(order="C"))


def load_image(path: str | Path, size: int) -> np.ndarray:
    """PNG -> float32 (size, size, 3) in [0, 1]."""
    with Image.open(path) as im:
        resized = im.convert("RGB").resize((size, size), Image.BILINEAR)
    return np.asarray(resized, dtype=np.float32) / 255.0


def load_batch(paths, size: int) -> np.ndarray:
    return np.stack([load_image(p, size) for p in paths])
