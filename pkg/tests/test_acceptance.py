"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -s -v`` to see the lines live.
Every tolerance and runtime budget is pinned here; nothing is calibrated
elsewhere.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from foldwise.dataset import ClassVocabulary, stratified_holdout_split, stratified_kfold
from foldwise.ensemble import (
    FeatureTable,
    RfParams,
    rf_predict,
    rf_train,
    soft_majority_vote,
)
from foldwise.errors import FormatError
from foldwise.metrics import (
    RocCurve,
    auc,
    classification_report,
    confusion_matrix,
    mean_roc,
    roc_curve,
)
from foldwise.predictions import PredictionMatrix
from foldwise.xai import (
    RgbImage,
    StubPredictor,
    LimeParams,
    Tensor32,
    grad_cam,
    lime_explain,
    read_tensor,
    segment_grid,
    write_tensor,
)
from foldwise.xai.lime import _draw_masks, _kernel_weights, _mean_color, _render_masked

from test_dataset import make_index
from test_metrics import arrays_for_counts, pairwise_auc

VOCAB = ClassVocabulary(("normal", "viral pneumonia"))
POS = 1


@contextmanager
def criterion(number: int, description: str, budget: float | None = None):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number:2d} ({description}): FAIL")
        raise
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed >= budget:
        print(f"ACCEPTANCE {number:2d} ({description}): FAIL (runtime {elapsed:.2f}s >= {budget:g}s)")
        raise AssertionError(f"runtime {elapsed:.2f}s exceeds the {budget:g}s budget")
    print(f"ACCEPTANCE {number:2d} ({description}): PASS [{elapsed:.2f}s]")


def test_01_roc_worked_example():
    with criterion(1, "ROC worked example", budget=1.0):
        scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
        truth = [False] * 5 + [True] * 5
        curve = roc_curve(scores, truth, POS)
        by_threshold = {t: (f, tp) for t, f, tp in zip(curve.thresholds, curve.fpr, curve.tpr)}
        fpr, tpr = by_threshold[0.2]
        assert abs(fpr - 0.8) <= 1e-12 and abs(tpr - 1.0) <= 1e-12
        fpr, tpr = by_threshold[0.8]
        assert abs(fpr - 0.0) <= 1e-12 and abs(tpr - 0.6) <= 1e-12
        assert abs(auc(curve) - 1.0) <= 1e-12


def test_02_ensemble_table_arithmetic():
    with criterion(2, "ensemble precision/recall arithmetic", budget=1.0):
        # (counts) -> (normal precision, normal recall, viral precision, viral recall)
        cases = {
            (185, 193, 8, 16): (0.92, 0.96, 0.96, 0.92),  # random forest row
            (188, 193, 8, 14): (0.93, 0.96, 0.96, 0.93),  # soft majority vote row
        }
        for counts, expected in cases.items():
            truth, predicted = arrays_for_counts(*counts)
            report = classification_report(confusion_matrix(truth, predicted, VOCAB))
            got = (
                round(report.per_class[0].precision, 2),
                round(report.per_class[0].recall, 2),
                round(report.per_class[1].precision, 2),
                round(report.per_class[1].recall, 2),
            )
            assert got == expected, f"{counts}: {got} != {expected}"


def test_03_fold1_macro_f1():
    with criterion(3, "fold1 macro-f1 arithmetic"):
        truth, predicted = arrays_for_counts(188, 193, 8, 14)
        report = classification_report(confusion_matrix(truth, predicted, VOCAB))
        assert report.macro_avg.f1 == pytest.approx(0.9455, abs=0.0005)


def test_04_auc_matches_pairwise_oracle():
    with criterion(4, "trapezoidal AUC vs pairwise oracle, 200 instances", budget=5.0):
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 200:
            n = int(rng.integers(2, 51))
            scores = rng.integers(0, 6, size=n) / 5.0  # coarse grid forces ties
            truth = rng.integers(0, 2, size=n).astype(bool)
            if truth.all() or not truth.any():
                continue
            curve = roc_curve(scores, truth, POS)
            assert abs(auc(curve) - pairwise_auc(scores, truth)) <= 1e-9
            checked += 1


def test_05_split_and_fold_invariants():
    with criterion(5, "split/fold invariants, 1000 randomized indices", budget=10.0):
        rng = np.random.default_rng(555)
        for trial in range(1000):
            counts = {"a": int(rng.integers(1, 40)), "b": int(rng.integers(1, 40))}
            raw = rng.dirichlet([2.0, 1.0, 1.0])
            fractions = tuple(float(f) for f in raw / raw.sum())
            seed = int(rng.integers(0, 2**63))
            index = make_index(counts)
            split = stratified_holdout_split(index, fractions, seed)

            assert sorted(split.assignment) == sorted(index.sample_ids)  # disjoint + exhaustive
            labels = index.labels_by_id()
            for label, n in counts.items():
                for set_name, frac in zip(("train", "test_models", "test_ensemble"), fractions):
                    got = sum(1 for sid in split.set_ids(set_name) if labels[sid] == label)
                    assert abs(got - frac * n) < 1.0
            assert split == stratified_holdout_split(index, fractions, seed)

            if trial % 5 == 0:
                k = int(rng.integers(2, 6))
                import warnings

                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    plan = stratified_kfold(labels, k, seed)
                    again = stratified_kfold(labels, k, seed)
                assert plan == again
                all_val = [sid for _, val in plan.folds for sid in val]
                assert sorted(all_val) == sorted(labels)
                for train, val in plan.folds:
                    assert sorted(train + val) == sorted(labels)
                for label in counts:
                    sizes = [sum(1 for sid in val if labels[sid] == label) for _, val in plan.folds]
                    assert max(sizes) - min(sizes) <= 1


def _xor_fixture(data_seed=2021):
    rng = np.random.default_rng(data_seed)
    pts = rng.random((400, 2))
    labels = ((pts[:, 0] > 0.5) ^ (pts[:, 1] > 0.5)).astype(int)
    ids = tuple(f"p{i}" for i in range(400))
    train = FeatureTable(ids[:300], pts[:300], VOCAB, labels[:300])
    hold = FeatureTable(ids[300:], pts[300:], VOCAB)
    return train, hold, pts, labels


def test_06_random_forest():
    with criterion(6, "random forest: separable, XOR, determinism", budget=30.0):
        # separable fixture: wide gap on feature 0
        lo = np.linspace(0.0, 0.2, 50)
        hi = np.linspace(0.8, 1.0, 50)
        noise = np.random.default_rng(0).random(100)
        x = np.column_stack([np.concatenate([lo, hi]), noise])
        y = np.array([0] * 50 + [1] * 50)
        table = FeatureTable(tuple(f"s{i}" for i in range(100)), x, VOCAB, y)
        model = rf_train(table, RfParams(n_trees=25), seed=3)
        pred, _ = rf_predict(model, table)
        assert (pred == y).all()

        # XOR fixture with the committed seeds
        train, hold, pts, labels = _xor_fixture()
        model = rf_train(train, RfParams(n_trees=100), seed=7)
        pred, _ = rf_predict(model, hold)
        accuracy = float(np.mean(pred == labels[300:]))
        assert accuracy >= 0.95, f"holdout accuracy {accuracy}"

        # brute-force nearest-neighbor sanity oracle: the fixture is learnable
        nn_hits = 0
        for i in range(300, 400):
            d = np.sum((pts[:300] - pts[i]) ** 2, axis=1)
            nn_hits += int(labels[np.argmin(d)] == labels[i])
        assert nn_hits / 100 >= 0.95

        sequential = rf_train(train, RfParams(n_trees=24), seed=11, n_jobs=1)
        parallel = rf_train(train, RfParams(n_trees=24), seed=11, n_jobs=4)
        assert sequential == parallel
        assert sequential == rf_train(train, RfParams(n_trees=24), seed=11)


def test_07_soft_majority_vote():
    with criterion(7, "soft majority vote vs brute force, 100 triples"):
        rng = np.random.default_rng(77)
        for _ in range(100):
            n = int(rng.integers(1, 15))
            ids = tuple(f"s{i}" for i in range(n))
            mats = []
            for _ in range(3):
                raw = rng.random((n, 2))
                mats.append(PredictionMatrix(ids, VOCAB, raw / raw.sum(axis=1, keepdims=True)))
            _, labels = soft_majority_vote(mats)
            brute = np.argmax(mats[0].rows + mats[1].rows + mats[2].rows, axis=1)
            assert (labels == brute).all()
            for perm in ([1, 2, 0], [2, 1, 0]):
                _, permuted = soft_majority_vote([mats[i] for i in perm])
                assert (permuted == labels).all()


def test_08_grad_cam():
    with criterion(8, "grad-cam: hand example, zero grads, scaling"):
        a1 = [[1.0, 0.0], [0.0, 1.0]]
        a2 = [[0.0, 4.0], [2.0, 0.0]]
        g1 = [[1.0, 1.0], [1.0, 1.0]]
        g2 = [[1.0, 0.0], [0.0, 1.0]]
        h = grad_cam(
            Tensor32(np.array([a1, a2], dtype=np.float32)),
            Tensor32(np.array([g1, g2], dtype=np.float32)),
        )
        assert h.values.tolist() == [[0.0, 1.0], [0.0, 0.0]]

        rng = np.random.default_rng(88)
        acts = Tensor32(rng.random((4, 6, 6)).astype(np.float32))
        assert (grad_cam(acts, Tensor32(np.zeros((4, 6, 6), dtype=np.float32))).values == 0).all()

        scales = np.array([0.25, 0.5, 2.0, 4.0, 8.0, 1024.0], dtype=np.float32)
        for i in range(100):
            a = Tensor32(rng.standard_normal((3, 5, 5)).astype(np.float32))
            g = Tensor32(rng.standard_normal((3, 5, 5)).astype(np.float32))
            base = grad_cam(a, g).values
            c = scales[i % len(scales)]
            scaled = grad_cam(a, Tensor32(g.data * c)).values
            assert np.max(np.abs(scaled - base)) <= 1e-7


def _planted_setup():
    base = np.full((30, 30, 3), 40, dtype=np.uint8)
    seg = segment_grid(RgbImage(base), 5)
    bright = base.copy()
    bright[seg.labels == 3] = 250
    image = RgbImage(bright)
    weights = np.zeros(seg.n_superpixels)
    weights[3] = 1.0
    stub = StubPredictor(VOCAB, segmap=seg, weights=weights, bias=0.0, hot_class=POS)
    return image, seg, stub


def test_09_lime():
    with criterion(9, "lime: planted recovery, constant predictor, ridge oracle"):
        image, seg, stub = _planted_setup()
        params = LimeParams(n_samples=200, grid_size=5)

        hits = 0
        for seed in range(50):
            expl = lime_explain(image, seg, stub, POS, params, seed=seed)
            hits += int(expl.top[0] == 3 and expl.weights[3] > 0)
        assert hits >= 48, f"planted superpixel recovered in only {hits}/50 trials"

        class Const:
            def predict_proba(self, images):
                return np.tile([0.3, 0.7], (len(images), 1))

        flat = lime_explain(image, seg, Const(), POS, params, seed=1)
        assert np.max(np.abs(flat.weights)) <= 1e-6

        # ridge coefficients vs an independent dense solve (augmented lstsq)
        seed = 13
        expl = lime_explain(image, seg, stub, POS, params, seed=seed)
        masks = _draw_masks(params.n_samples, seg.n_superpixels, seed)
        fill = _mean_color(image)
        y = np.array(
            [stub.predict_proba([_render_masked(image, seg, m, fill)])[0, POS] for m in masks]
        )
        w = _kernel_weights(masks, params.kernel_sigma)
        x = np.hstack([np.ones((len(masks), 1)), masks])
        sw = np.sqrt(w)
        penalty = np.sqrt(params.ridge_lambda) * np.eye(seg.n_superpixels + 1)[1:]
        beta, *_ = np.linalg.lstsq(
            np.vstack([x * sw[:, None], penalty]),
            np.concatenate([y * sw, np.zeros(seg.n_superpixels)]),
            rcond=None,
        )
        assert np.max(np.abs(expl.weights - beta[1:])) <= 1e-6


def test_10_mean_roc():
    with criterion(10, "mean ROC: identity and two-curve hand example"):
        curve = roc_curve(
            [0.95, 0.9, 0.8, 0.7, 0.4, 0.3, 0.2, 0.1],
            [True, True, False, True, False, True, False, False],
            POS,
        )
        mean = mean_roc([curve, curve, curve])
        grid = sorted(set(curve.fpr.tolist()))
        assert mean.fpr.tolist() == grid
        for f, t in zip(mean.fpr, mean.tpr):
            top = max(ct for cf, ct in curve.points() if cf == f)
            assert t == top  # exact

        a = RocCurve(np.array([0.0, 0.0, 1.0]), np.array([0.0, 1.0, 1.0]), None, POS)
        b = RocCurve(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.5, 1.0]), None, POS)
        two = mean_roc([a, b])
        assert two.fpr.tolist() == [0.0, 0.5, 1.0]
        assert two.tpr.tolist() == [0.5, 0.75, 1.0]  # exact


def test_11_tensor_round_trip(tmp_path):
    with criterion(11, "TNSR bit-exact round trip, 100 tensors + corrupt header"):
        rng = np.random.default_rng(111)
        for i in range(100):
            rank = int(rng.integers(1, 5))
            shape = tuple(int(d) for d in rng.integers(1, 6, size=rank))
            t = Tensor32(rng.standard_normal(shape).astype(np.float32))
            p = tmp_path / f"t{i}.tnsr"
            write_tensor(t, p)
            back = read_tensor(p)
            assert back.shape == t.shape
            assert back.data.tobytes() == t.data.tobytes()

        p = tmp_path / "corrupt.tnsr"
        write_tensor(Tensor32(np.ones(3, dtype=np.float32)), p)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            read_tensor(p)
