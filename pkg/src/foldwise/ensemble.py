"""Fold-ensemble construction: soft majority vote over fold probability
matrices, and a from-scratch random forest trained on the concatenated
fold probabilities (fold-major feature columns).

Determinism contract: each tree derives its own generator from
``(master seed, tree index)``, so sequential and parallel training produce
bit-identical forests.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import ClassVocabulary
from .errors import AlignmentError, ArgumentError, DegenerateDataError
from .numeric import canonical_sum
from .predictions import PredictionMatrix, align_check


@dataclass(frozen=True)
class FeatureTable:
    """Per-sample feature rows (k folds x C class probabilities, fold-major)."""

    sample_ids: tuple[str, ...]
    columns: np.ndarray
    vocab: ClassVocabulary
    labels: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        cols = np.asarray(self.columns, dtype=np.float64)
        if cols.ndim != 2 or cols.shape[0] != len(self.sample_ids):
            raise ArgumentError(f"columns must be (n_samples, n_features), got {cols.shape}")
        cols = cols.copy()
        cols.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (cols.shape[0],):
                raise ArgumentError("labels must be one class id per sample")
            if labels.size and (labels.min() < 0 or labels.max() >= len(self.vocab)):
                raise ArgumentError("labels contain class ids outside the vocabulary")
            labels = labels.copy()
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n_features(self) -> int:
        return self.columns.shape[1]


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    counts: tuple[int, ...]


@dataclass(frozen=True)
class DecisionTree:
    """Nodes stored in a flat list; node 0 is the root."""

    nodes: tuple[SplitNode | LeafNode, ...]


@dataclass(frozen=True)
class RfParams:
    n_trees: int = 100
    mtry: int | None = None  # None means ceil(sqrt(n_features))
    max_depth: int | None = None
    min_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ArgumentError("mtry must be >= 1")
        if self.min_leaf < 1:
            raise ArgumentError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError("max_depth must be >= 0")


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[DecisionTree, ...]
    params: RfParams
    vocab: ClassVocabulary
    seed: int


def build_ensemble_features(
    fold_matrices: Sequence[PredictionMatrix],
    labels: Sequence[int] | None = None,
) -> FeatureTable:
    """Concatenate aligned fold probability rows fold-major into one table."""
    align_check(fold_matrices)
    columns = np.hstack([m.rows for m in fold_matrices])
    first = fold_matrices[0]
    lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    return FeatureTable(first.sample_ids, columns, first.vocab, lab)


def gini(class_counts: Sequence[int]) -> float:
    """Gini impurity 1 - sum((n_c / n)^2) of a class-count vector."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or (counts < 0).any():
        raise ArgumentError("class counts must be a non-negative vector")
    n = counts.sum()
    if n == 0:
        raise ArgumentError("class counts must not be all zero")
    p = counts / n
    return float(1.0 - np.dot(p, p))


def _best_split(
    x: np.ndarray, y: np.ndarray, features: np.ndarray, n_classes: int, min_leaf: int
) -> tuple[int, float] | None:
    """Pick the (feature, threshold) minimizing weighted child Gini impurity.

    Thresholds are the midpoints of consecutive sorted distinct values.
    Ties resolve to the lowest feature index, then the lowest threshold,
    which the ascending scan order guarantees.
    """
    n = y.size
    best = None
    best_impurity = np.inf
    for f in features:
        vals = x[:, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y[order]
        boundaries = np.flatnonzero(np.diff(sv) != 0)  # split after position b
        if boundaries.size == 0:
            continue
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), sy] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[boundaries]
        total = cum[-1]
        right_counts = total - left_counts
        ln = left_counts.sum(axis=1)
        rn = right_counts.sum(axis=1)
        ok = (ln >= min_leaf) & (rn >= min_leaf)
        if not ok.any():
            continue
        gl = 1.0 - np.sum((left_counts / ln[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((right_counts / rn[:, None]) ** 2, axis=1)
        weighted = (ln * gl + rn * gr) / n
        weighted[~ok] = np.inf
        i = int(np.argmin(weighted))  # first minimum: lowest threshold wins ties
        if weighted[i] < best_impurity:
            best_impurity = float(weighted[i])
            thr = (sv[boundaries[i]] + sv[boundaries[i] + 1]) / 2.0
            best = (int(f), float(thr))
    return best


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    mtry: int,
    params: RfParams,
    rng: np.random.Generator,
) -> DecisionTree:
    nodes: list[SplitNode | LeafNode] = []

    def grow(sample_idx: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        nodes.append(LeafNode(()))  # placeholder
        ys = y[sample_idx]
        counts = np.bincount(ys, minlength=n_classes)
        pure = np.count_nonzero(counts) <= 1
        depth_stop = params.max_depth is not None and depth >= params.max_depth
        too_small = sample_idx.size < 2 * params.min_leaf
        split = None
        if not (pure or depth_stop or too_small):
            features = np.sort(rng.choice(x.shape[1], size=mtry, replace=False))
            split = _best_split(x[sample_idx], ys, features, n_classes, params.min_leaf)
        if split is None:
            nodes[node_id] = LeafNode(tuple(int(c) for c in counts))
            return node_id
        feature, threshold = split
        mask = x[sample_idx, feature] <= threshold
        left = grow(sample_idx[mask], depth + 1)
        right = grow(sample_idx[~mask], depth + 1)
        nodes[node_id] = SplitNode(feature, threshold, left, right)
        return node_id

    grow(np.arange(y.size), 0)
    return DecisionTree(tuple(nodes))


def _train_one_tree(args) -> DecisionTree:
    x, y, n_classes, mtry, params, seed, tree_index = args
    rng = np.random.default_rng([seed, tree_index])
    bootstrap = rng.integers(0, y.size, size=y.size)  # exactly n draws, with replacement
    return _grow_tree(x[bootstrap], y[bootstrap], n_classes, mtry, params, rng)


def rf_train(
    features: FeatureTable, params: RfParams, seed: int, n_jobs: int = 1
) -> RandomForestModel:
    """Train a random forest on a labeled feature table.

    Each tree sees a bootstrap sample of size n (drawn with replacement) and
    considers `mtry` features, drawn without replacement, at every node.
    """
    if features.labels is None:
        raise ArgumentError("feature table has no labels to train on")
    y = features.labels
    if np.unique(y).size < 2:
        raise DegenerateDataError("training labels contain a single class")
    x = features.columns
    n_features = features.n_features
    mtry = params.mtry if params.mtry is not None else math.ceil(math.sqrt(n_features))
    if mtry > n_features:
        raise ArgumentError(f"mtry {mtry} exceeds the {n_features} available features")
    n_classes = len(features.vocab)
    jobs = [(x, y, n_classes, mtry, params, int(seed), i) for i in range(params.n_trees)]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = tuple(pool.map(_train_one_tree, jobs))
    else:
        trees = tuple(_train_one_tree(j) for j in jobs)
    return RandomForestModel(trees, params, features.vocab, int(seed))


def _tree_votes(tree: DecisionTree, x: np.ndarray, n_classes: int) -> np.ndarray:
    """Class voted by the tree for every row (leaf-majority, lowest id on ties)."""
    out = np.empty(x.shape[0], dtype=np.int64)

    def walk(node_id: int, sample_idx: np.ndarray) -> None:
        node = tree.nodes[node_id]
        if isinstance(node, LeafNode):
            counts = np.asarray(node.counts)
            out[sample_idx] = int(np.argmax(counts))
            return
        mask = x[sample_idx, node.feature] <= node.threshold
        walk(node.left, sample_idx[mask])
        walk(node.right, sample_idx[~mask])

    walk(0, np.arange(x.shape[0]))
    return out


def rf_predict(
    model: RandomForestModel, features: FeatureTable
) -> tuple[np.ndarray, PredictionMatrix]:
    """Plurality vote over the trees; ties go to the lowest class id.

    Returns the predicted class ids and the tree-vote fractions as a
    PredictionMatrix (rows sum to 1).
    """
    x = features.columns
    arity = _model_arity(model)
    if arity is not None and x.shape[1] < arity:
        raise ArgumentError(
            f"feature table has {x.shape[1]} columns but the model references feature {arity - 1}"
        )
    n_classes = len(model.vocab)
    votes = np.zeros((x.shape[0], n_classes), dtype=np.int64)
    for tree in model.trees:
        voted = _tree_votes(tree, x, n_classes)
        votes[np.arange(x.shape[0]), voted] += 1
    labels = np.argmax(votes, axis=1)
    fractions = votes / len(model.trees)
    matrix = PredictionMatrix(features.sample_ids, model.vocab, fractions)
    return labels, matrix


def _model_arity(model: RandomForestModel) -> int | None:
    """1 + the highest feature index any tree references, or None for leaf-only."""
    top = None
    for tree in model.trees:
        for node in tree.nodes:
            if isinstance(node, SplitNode):
                top = node.feature if top is None else max(top, node.feature)
    return None if top is None else top + 1


def soft_majority_vote(
    fold_matrices: Sequence[PredictionMatrix],
) -> tuple[PredictionMatrix, np.ndarray]:
    """Sum the fold probability matrices elementwise and argmax per row.

    The returned matrix is the sum divided by the fold count so rows stay
    valid probability rows; the argmax is taken on the raw sum (same result).
    Reordering the fold list cannot change a single output bit.
    """
    align_check(fold_matrices)
    total = canonical_sum(np.stack([m.rows for m in fold_matrices]))
    labels = np.argmax(total, axis=1)
    first = fold_matrices[0]
    matrix = PredictionMatrix(first.sample_ids, first.vocab, total / len(fold_matrices))
    return matrix, labels


def save_model(model: RandomForestModel, path: str | Path) -> None:
    """Persist a forest as JSON with explicit node lists."""
    doc = {
        "params": {
            "n_trees": model.params.n_trees,
            "mtry": model.params.mtry,
            "max_depth": model.params.max_depth,
            "min_leaf": model.params.min_leaf,
        },
        "seed": model.seed,
        "vocab": list(model.vocab.names),
        "trees": [
            [
                {"feature": n.feature, "threshold": n.threshold, "left": n.left, "right": n.right}
                if isinstance(n, SplitNode)
                else {"counts": list(n.counts)}
                for n in tree.nodes
            ]
            for tree in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_model(path: str | Path) -> RandomForestModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = RfParams(**doc["params"])
    vocab = ClassVocabulary(tuple(doc["vocab"]))
    trees = []
    for nodes in doc["trees"]:
        parsed: list[SplitNode | LeafNode] = []
        for n in nodes:
            if "counts" in n:
                parsed.append(LeafNode(tuple(int(c) for c in n["counts"])))
            else:
                parsed.append(SplitNode(int(n["feature"]), float(n["threshold"]), int(n["left"]), int(n["right"])))
        trees.append(DecisionTree(tuple(parsed)))
    return RandomForestModel(tuple(trees), params, vocab, int(doc["seed"]))
