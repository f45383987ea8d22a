import numpy as np
import pytest

from foldwise.dataset import ClassVocabulary
from foldwise.ensemble import (
    DecisionTree,
    FeatureTable,
    LeafNode,
    RandomForestModel,
    RfParams,
    _train_one_tree,
    build_ensemble_features,
    gini,
    load_model,
    rf_predict,
    rf_train,
    save_model,
    soft_majority_vote,
)
from foldwise.errors import AlignmentError, ArgumentError, DegenerateDataError
from foldwise.predictions import PredictionMatrix, hard_labels

VOCAB = ClassVocabulary(("normal", "viral pneumonia"))


def matrix(ids, rows):
    return PredictionMatrix(tuple(ids), VOCAB, rows)


def separable_table(n_per_class=50, gap=(0.2, 0.8), seed=0):
    """Two clusters on feature 0 with a wide structural gap; feature 1 is noise.

    Any bootstrap sample puts the split threshold inside the gap, so every
    tree classifies the full table perfectly.
    """
    rng = np.random.default_rng(seed)
    lo = np.linspace(0.0, gap[0], n_per_class)
    hi = np.linspace(gap[1], 1.0, n_per_class)
    x = np.column_stack([np.concatenate([lo, hi]), rng.random(2 * n_per_class)])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    ids = tuple(f"s{i}" for i in range(2 * n_per_class))
    return FeatureTable(ids, x, VOCAB, y)


def xor_fixture(data_seed=2021):
    rng = np.random.default_rng(data_seed)
    pts = rng.random((400, 2))
    labels = ((pts[:, 0] > 0.5) ^ (pts[:, 1] > 0.5)).astype(int)
    ids = tuple(f"p{i}" for i in range(400))
    train = FeatureTable(ids[:300], pts[:300], VOCAB, labels[:300])
    hold = FeatureTable(ids[300:], pts[300:], VOCAB)
    return train, hold, labels[300:]


class TestFeatureTable:
    def test_fold_major_concatenation(self):
        m1 = matrix(["a"], [[0.6, 0.4]])
        m2 = matrix(["a"], [[0.3, 0.7]])
        m3 = matrix(["a"], [[0.5, 0.5]])
        table = build_ensemble_features([m1, m2, m3])
        assert table.columns.tolist() == [[0.6, 0.4, 0.3, 0.7, 0.5, 0.5]]

    def test_single_fold_identity(self):
        m = matrix(["a", "b"], [[0.6, 0.4], [0.2, 0.8]])
        table = build_ensemble_features([m])
        assert np.array_equal(table.columns, m.rows)

    def test_misaligned_ids_rejected(self):
        m1 = matrix(["a", "b"], [[0.6, 0.4], [0.2, 0.8]])
        m2 = matrix(["b", "a"], [[0.6, 0.4], [0.2, 0.8]])
        with pytest.raises(AlignmentError):
            build_ensemble_features([m1, m2])


class TestGini:
    def test_pure_node(self):
        assert gini([10, 0]) == 0.0

    def test_balanced_binary(self):
        assert gini([5, 5]) == 0.5

    def test_direct_arithmetic(self):
        assert gini([2, 1]) == pytest.approx(4 / 9, abs=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ArgumentError):
            gini([0, 0])


class TestRfTrain:
    def test_single_class_labels_degenerate(self):
        table = FeatureTable(("a", "b"), [[0.1, 0.9], [0.2, 0.8]], VOCAB, [1, 1])
        with pytest.raises(DegenerateDataError):
            rf_train(table, RfParams(n_trees=3), seed=0)

    def test_missing_labels_rejected(self):
        table = FeatureTable(("a",), [[0.1, 0.9]], VOCAB)
        with pytest.raises(ArgumentError):
            rf_train(table, RfParams(n_trees=3), seed=0)

    def test_separable_every_tree_perfect(self):
        table = separable_table()
        model = rf_train(table, RfParams(n_trees=20), seed=3)
        from foldwise.ensemble import _tree_votes

        for tree in model.trees:
            voted = _tree_votes(tree, table.columns, 2)
            assert (voted == table.labels).all()
        pred, _ = rf_predict(model, table)
        assert (pred == table.labels).all()

    def test_one_split_suffices_with_full_mtry(self):
        table = separable_table()
        params = RfParams(n_trees=10, mtry=2, max_depth=1)
        model = rf_train(table, params, seed=5)
        pred, _ = rf_predict(model, table)
        assert (pred == table.labels).all()

    def test_xor_holdout_accuracy(self):
        train, hold, truth = xor_fixture()
        model = rf_train(train, RfParams(n_trees=100), seed=7)
        pred, _ = rf_predict(model, hold)
        assert np.mean(pred == truth) >= 0.95

    def test_same_seed_bit_identical(self):
        train, _, _ = xor_fixture()
        a = rf_train(train, RfParams(n_trees=10), seed=17)
        b = rf_train(train, RfParams(n_trees=10), seed=17)
        assert a == b

    def test_parallel_matches_sequential(self):
        train, _, _ = xor_fixture()
        a = rf_train(train, RfParams(n_trees=12), seed=17, n_jobs=1)
        b = rf_train(train, RfParams(n_trees=12), seed=17, n_jobs=4)
        assert a == b

    def test_bootstrap_draws_exactly_n(self):
        table = separable_table(n_per_class=10)
        seed, tree_index = 123, 4
        rng = np.random.default_rng([seed, tree_index])
        draws = rng.integers(0, len(table.sample_ids), size=len(table.sample_ids))
        assert draws.shape == (20,)  # n draws, repetition allowed
        # the same derivation drives training, so the tree is reproducible
        args = (table.columns, table.labels, 2, 2, RfParams(n_trees=5), seed, tree_index)
        assert _train_one_tree(args) == _train_one_tree(args)

    def test_mtry_larger_than_features_rejected(self):
        table = separable_table(n_per_class=5)
        with pytest.raises(ArgumentError):
            rf_train(table, RfParams(n_trees=2, mtry=3), seed=0)


class TestRfPredict:
    @staticmethod
    def leaf_model(leaf_counts_list):
        trees = tuple(DecisionTree((LeafNode(tuple(c)),)) for c in leaf_counts_list)
        return RandomForestModel(trees, RfParams(n_trees=len(trees)), VOCAB, 0)

    def test_unanimous_single_leaf_trees(self):
        model = self.leaf_model([(0, 5)] * 4)
        table = FeatureTable(("a", "b"), [[0.5, 0.5], [0.1, 0.9]], VOCAB)
        labels, votes = rf_predict(model, table)
        assert labels.tolist() == [1, 1]
        assert votes.rows.tolist() == [[0.0, 1.0], [0.0, 1.0]]

    def test_tied_votes_go_to_lowest_class(self):
        model = self.leaf_model([(5, 0), (5, 0), (0, 5), (0, 5)])
        table = FeatureTable(("a",), [[0.5, 0.5]], VOCAB)
        labels, votes = rf_predict(model, table)
        assert labels.tolist() == [0]
        assert votes.rows.tolist() == [[0.5, 0.5]]

    def test_vote_fractions_are_valid_rows(self):
        train, hold, _ = xor_fixture()
        model = rf_train(train, RfParams(n_trees=7), seed=2)
        _, votes = rf_predict(model, hold)
        assert np.max(np.abs(votes.rows.sum(axis=1) - 1.0)) <= 1e-12

    def test_arity_mismatch_rejected(self):
        train, _, _ = xor_fixture()
        model = rf_train(train, RfParams(n_trees=3), seed=2)
        narrow = FeatureTable(("a",), [[0.4]], VOCAB)
        with pytest.raises(ArgumentError):
            rf_predict(model, narrow)


class TestSoftMajorityVote:
    def test_direct_arithmetic(self):
        m1 = matrix(["a"], [[0.6, 0.4]])
        m2 = matrix(["a"], [[0.3, 0.7]])
        m3 = matrix(["a"], [[0.4, 0.6]])
        combined, labels = soft_majority_vote([m1, m2, m3])
        assert labels.tolist() == [1]
        assert np.allclose(combined.rows, [[1.3 / 3, 1.7 / 3]])

    def test_identical_matrices_reduce_to_hard_labels(self):
        rng = np.random.default_rng(9)
        raw = rng.random((20, 2))
        m = matrix([f"s{i}" for i in range(20)], raw / raw.sum(axis=1, keepdims=True))
        _, labels = soft_majority_vote([m, m, m])
        assert (labels == hard_labels(m)).all()

    def test_fold_order_invariance(self):
        rng = np.random.default_rng(10)
        mats = []
        for _ in range(3):
            raw = rng.random((15, 2))
            mats.append(matrix([f"s{i}" for i in range(15)], raw / raw.sum(axis=1, keepdims=True)))
        a, la = soft_majority_vote(mats)
        b, lb = soft_majority_vote(mats[::-1])
        assert (la == lb).all()
        assert np.allclose(a.rows, b.rows)

    def test_matches_brute_force_argmax(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            mats = []
            n = int(rng.integers(1, 12))
            for _ in range(3):
                raw = rng.random((n, 2))
                mats.append(matrix([f"s{i}" for i in range(n)], raw / raw.sum(axis=1, keepdims=True)))
            _, labels = soft_majority_vote(mats)
            brute = np.argmax(mats[0].rows + mats[1].rows + mats[2].rows, axis=1)
            assert (labels == brute).all()


class TestPersistence:
    def test_model_round_trip(self, tmp_path):
        train, _, _ = xor_fixture()
        model = rf_train(train, RfParams(n_trees=5, max_depth=4), seed=21)
        path = tmp_path / "rf_model.json"
        save_model(model, path)
        assert load_model(path) == model
