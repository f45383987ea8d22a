"""Labeled sample index, stratified holdout split, and stratified k-fold plan.

All operations are pure functions of their inputs plus an explicit 64-bit
seed; the only random generator used anywhere in the package is numpy's
``default_rng`` (PCG64). Same seed, same result.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, SchemaError, VocabularyError

SET_NAMES = ("train", "test_models", "test_ensemble")

INDEX_HEADER = ["sample_id", "label", "image_path"]


@dataclass(frozen=True)
class ClassVocabulary:
    """Ordered class names; a name's position is its class id."""

    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise ArgumentError("class vocabulary needs at least 2 classes")
        if any(not n for n in names):
            raise ArgumentError("class names must be non-empty")
        if len(set(names)) != len(names):
            raise ArgumentError("class names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise VocabularyError(f"label {name!r} is not in the class vocabulary {self.names}") from None


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    label: str
    image_path: str | None = None


@dataclass(frozen=True)
class DatasetIndex:
    """All labeled samples of one run, in file order."""

    records: tuple[SampleRecord, ...]
    vocab: ClassVocabulary

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if not rec.sample_id:
                raise SchemaError("sample_id must be non-empty")
            if rec.sample_id in seen:
                raise SchemaError(f"duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            if rec.label not in self.vocab.names:
                raise VocabularyError(
                    f"label {rec.label!r} of sample {rec.sample_id!r} is not in the vocabulary"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def sample_ids(self) -> tuple[str, ...]:
        return tuple(rec.sample_id for rec in self.records)

    def class_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.vocab.names}
        for rec in self.records:
            counts[rec.label] += 1
        return counts

    def labels_by_id(self) -> dict[str, str]:
        return {rec.sample_id: rec.label for rec in self.records}


@dataclass(frozen=True)
class SplitAssignment:
    """sample_id -> one of train / test_models / test_ensemble."""

    assignment: Mapping[str, str]
    fractions: tuple[float, float, float]
    seed: int

    def set_ids(self, set_name: str) -> tuple[str, ...]:
        if set_name not in SET_NAMES:
            raise ArgumentError(f"unknown set name {set_name!r}")
        return tuple(sid for sid, s in self.assignment.items() if s == set_name)

    def set_sizes(self) -> dict[str, int]:
        sizes = {name: 0 for name in SET_NAMES}
        for s in self.assignment.values():
            sizes[s] += 1
        return sizes


@dataclass(frozen=True)
class FoldPlan:
    """k pairs of (train_ids, validation_ids) over one id universe."""

    k: int
    folds: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]
    seed: int

    def validation_fold_of(self) -> dict[str, int]:
        """sample_id -> index of the fold whose validation set holds it (0-based)."""
        out: dict[str, int] = {}
        for i, (_, val_ids) in enumerate(self.folds):
            for sid in val_ids:
                out[sid] = i
        return out


def load_index(path: str | Path, vocab: ClassVocabulary) -> DatasetIndex:
    """Read a sample index CSV (``sample_id,label,image_path``) into a DatasetIndex.

    Raises SchemaError for a bad header, malformed row, empty or duplicate id
    (citing the offending line number) and VocabularyError for unknown labels.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(INDEX_HEADER)}") from None
        if header != INDEX_HEADER:
            raise SchemaError(f"{path}: bad header {header!r}, expected {INDEX_HEADER!r}")
        records = []
        seen: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            sample_id, label, image_path = row
            if not sample_id:
                raise SchemaError(f"{path}:{lineno}: empty sample_id")
            if sample_id in seen:
                raise SchemaError(
                    f"{path}:{lineno}: duplicate sample_id {sample_id!r} (first seen on line {seen[sample_id]})"
                )
            seen[sample_id] = lineno
            if label not in vocab.names:
                raise VocabularyError(f"{path}:{lineno}: label {label!r} is not in the vocabulary")
            records.append(SampleRecord(sample_id, label, image_path or None))
    return DatasetIndex(tuple(records), vocab)


def _allocate(count: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of `count` items over `fractions`.

    Ties on the fractional part are broken in set order (train first).
    """
    exact = [f * count for f in fractions]
    base = [math.floor(x) for x in exact]
    leftover = count - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_holdout_split(
    index: DatasetIndex,
    fractions: tuple[float, float, float],
    seed: int,
) -> SplitAssignment:
    """Assign every sample to train / test_models / test_ensemble, per class.

    Per class the set sizes are fixed by largest-remainder rounding of
    ``fraction * class_count``; which samples land where is a seeded shuffle.
    Set sizes therefore do not depend on the seed.
    """
    if len(fractions) != 3:
        raise ArgumentError("fractions must have exactly 3 entries")
    if any(f < 0 for f in fractions):
        raise ArgumentError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ArgumentError(f"fractions must sum to 1, got {sum(fractions)!r}")
    if len(index) == 0:
        raise ArgumentError("cannot split an empty index")
    counts = index.class_counts()
    for name, n in counts.items():
        if n == 0:
            raise ArgumentError(f"class {name!r} has no samples")

    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for name in index.vocab.names:
        class_ids = [rec.sample_id for rec in index.records if rec.label == name]
        sizes = _allocate(len(class_ids), fractions)
        perm = rng.permutation(len(class_ids))
        shuffled = [class_ids[i] for i in perm]
        pos = 0
        for set_name, size in zip(SET_NAMES, sizes):
            for sid in shuffled[pos : pos + size]:
                assignment[sid] = set_name
            pos += size
    # rebuild in index order so iteration over the mapping is stable
    ordered = {rec.sample_id: assignment[rec.sample_id] for rec in index.records}
    return SplitAssignment(ordered, tuple(float(f) for f in fractions), int(seed))


def stratified_kfold(
    labeled_ids: Mapping[str, str] | Iterable[tuple[str, str]],
    k: int,
    seed: int,
) -> FoldPlan:
    """Partition ids into k folds, label-stratified.

    Per class, a seeded shuffle is dealt round-robin into the k validation
    buckets, so per-class validation sizes differ by at most 1 across folds.
    A class with fewer than k samples leaves some folds without it; that is
    reported as a warning, not an error.
    """
    if k < 2:
        raise ArgumentError(f"k must be >= 2, got {k}")
    items = list(labeled_ids.items()) if isinstance(labeled_ids, Mapping) else list(labeled_ids)
    if not items:
        raise ArgumentError("cannot build folds from an empty id set")
    ids = [sid for sid, _ in items]
    if len(set(ids)) != len(ids):
        raise ArgumentError("sample ids must be unique")
    input_pos = {sid: i for i, sid in enumerate(ids)}

    by_class: dict[str, list[str]] = {}
    for sid, label in items:
        by_class.setdefault(label, []).append(sid)

    rng = np.random.default_rng(seed)
    buckets: list[list[str]] = [[] for _ in range(k)]
    for label, class_ids in by_class.items():
        if len(class_ids) < k:
            warnings.warn(
                f"class {label!r} has only {len(class_ids)} samples for k={k}: "
                "some validation folds will lack this class",
                UserWarning,
                stacklevel=2,
            )
        perm = rng.permutation(len(class_ids))
        for j, i in enumerate(perm):
            buckets[j % k].append(class_ids[i])

    folds = []
    for bucket in buckets:
        val_ids = tuple(sorted(bucket, key=input_pos.__getitem__))
        val_set = set(val_ids)
        train_ids = tuple(sid for sid in ids if sid not in val_set)
        folds.append((train_ids, val_ids))
    return FoldPlan(int(k), tuple(folds), int(seed))
