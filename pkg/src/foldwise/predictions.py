"""Per-fold class-probability tables: the interchange format between any
trained model and the toolkit.

File format: UTF-8 CSV, header ``sample_id,<class_0>,...,<class_{C-1}>``
(class columns must match the vocabulary order exactly), one row per sample.
Values are written with 9 significant digits, enough to round-trip
single-precision model outputs losslessly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ClassVocabulary
from .errors import AlignmentError, SchemaError, ValidationError

ROW_SUM_TOL = 1e-6


def _format_value(x: float) -> str:
    return f"{x:.9g}"


@dataclass(frozen=True)
class PredictionMatrix:
    """Rows of per-class probabilities, one row per sample id."""

    sample_ids: tuple[str, ...]
    vocab: ClassVocabulary
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValidationError(f"rows must be 2-dimensional, got shape {rows.shape}")
        if rows.shape[0] != len(self.sample_ids):
            raise ValidationError(
                f"{rows.shape[0]} rows for {len(self.sample_ids)} sample ids"
            )
        if rows.shape[1] != len(self.vocab):
            raise ValidationError(
                f"{rows.shape[1]} columns for {len(self.vocab)} classes"
            )
        for i, row in enumerate(rows):
            bad = np.flatnonzero((row < 0.0) | (row > 1.0))
            if bad.size:
                raise ValidationError(
                    f"row {i} ({self.sample_ids[i]!r}): entry {row[bad[0]]!r} outside [0, 1]"
                )
            s = float(row.sum())
            if abs(s - 1.0) > ROW_SUM_TOL:
                raise ValidationError(
                    f"row {i} ({self.sample_ids[i]!r}): probabilities sum to {s!r}, not 1"
                )
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return len(self.sample_ids)


def hard_labels(m: PredictionMatrix) -> np.ndarray:
    """Per-row argmax class id; ties go to the lowest class id."""
    return np.argmax(m.rows, axis=1)


def load_predictions(path: str | Path, vocab: ClassVocabulary) -> PredictionMatrix:
    """Read and validate a prediction CSV against a vocabulary."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        expected = ["sample_id", *vocab.names]
        if header != expected:
            raise SchemaError(f"{path}: header {header!r} does not match {expected!r}")
        sample_ids: list[str] = []
        values: list[list[float]] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise SchemaError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            sid = row[0]
            if not sid:
                raise SchemaError(f"{path}:{lineno}: empty sample_id")
            if sid in seen:
                raise SchemaError(f"{path}:{lineno}: duplicate sample_id {sid!r}")
            seen.add(sid)
            try:
                probs = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
            for v in probs:
                if v < 0.0 or v > 1.0:
                    raise ValidationError(f"{path}:{lineno}: entry {v!r} outside [0, 1]")
            s = sum(probs)
            if abs(s - 1.0) > ROW_SUM_TOL:
                raise ValidationError(f"{path}:{lineno}: probabilities sum to {s!r}, not 1")
            sample_ids.append(sid)
            values.append(probs)
    return PredictionMatrix(tuple(sample_ids), vocab, np.array(values, dtype=np.float64).reshape(len(values), len(vocab)))


def save_predictions(m: PredictionMatrix, path: str | Path) -> None:
    """Write a prediction CSV (9 significant digits per value)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", *m.vocab.names])
        for sid, row in zip(m.sample_ids, m.rows):
            writer.writerow([sid, *(_format_value(v) for v in row)])


def align_check(matrices: Sequence[PredictionMatrix]) -> None:
    """Raise AlignmentError unless all matrices share ids (same order) and vocab."""
    if not matrices:
        raise AlignmentError("no prediction matrices given")
    first = matrices[0]
    for i, m in enumerate(matrices[1:], start=2):
        if m.vocab.names != first.vocab.names:
            raise AlignmentError(f"matrix {i} has vocabulary {m.vocab.names}, expected {first.vocab.names}")
        if m.sample_ids != first.sample_ids:
            raise AlignmentError(f"matrix {i} sample ids differ from matrix 1 (count or order)")
