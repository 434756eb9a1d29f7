import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from trafficlab.knn import AnalysisParams, RateKnnClassifier, make_folds, stratified_cv


class TestAnalysisParams:
    def test_defaults_valid(self):
        p = AnalysisParams()
        assert (p.s, p.w, p.k, p.folds) == (10.0, 300.0, 5, 10)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"s": 0.0},
            {"s": 10.0, "w": 25.0},
            {"w": 5.0},
            {"k": 0},
            {"k": 4},
            {"folds": 1},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AnalysisParams(**kwargs)


class TestRateKnnClassifier:
    def test_k1_classifies_training_set_perfectly(self):
        X = np.array([[0.0, 0.0], [10.0, 1.0], [20.0, 5.0]])
        y = np.array(["a", "b", "c"], dtype=object)
        clf = RateKnnClassifier(k=1).fit(X, y)
        assert list(clf.predict(X)) == ["a", "b", "c"]

    def test_confidence_is_majority_fraction(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [1.0, 0.0], [5.0, 5.0]])
        y = np.array(["A", "A", "B", "C"], dtype=object)
        clf = RateKnnClassifier(k=3).fit(X, y)
        labels, conf = clf.predict_with_confidence(np.array([[0.05, 0.0]]))
        assert labels[0] == "A"
        assert conf[0] == pytest.approx(2 / 3)

    def test_distance_ties_break_by_training_index(self):
        # two training points equidistant from the query; earlier index wins
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        y = np.array(["first", "second"], dtype=object)
        clf = RateKnnClassifier(k=1).fit(X, y)
        assert clf.predict(np.array([[1.0, 0.0]]))[0] == "first"

    def test_label_ties_break_lexicographically(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        y = np.array(["zeta", "alpha"], dtype=object)
        clf = RateKnnClassifier(k=2).fit(X, y)
        # one vote each, equal aggregate distance from the midpoint
        assert clf.predict(np.array([[1.0, 0.0]]))[0] == "alpha"

    def test_degenerate_classes_flagged(self):
        X = np.array([[1.0, 2.0], [3.0, 4.0], [1.0, 2.0], [3.0, 4.0]])
        y = np.array(["a", "a", "b", "b"], dtype=object)
        with pytest.warns(UserWarning, match="identical feature sets"):
            clf = RateKnnClassifier(k=1).fit(X, y)
        assert clf.degenerate_classes_ == [("a", "b")]

    def test_constant_dimension_flagged_and_handled(self):
        X = np.array([[5.0, 1.0], [5.0, 2.0]])
        y = np.array(["a", "b"], dtype=object)
        clf = RateKnnClassifier(k=1).fit(X, y)
        assert clf.constant_dims_.tolist() == [True, False]
        assert clf.predict(np.array([[5.0, 1.9]]))[0] == "b"

    def test_k_larger_than_training_rejected(self):
        with pytest.raises(ValueError, match="exceeds training set size"):
            RateKnnClassifier(k=5).fit(np.zeros((3, 2)), np.array(["a", "b", "c"]))

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            RateKnnClassifier(k=1).predict(np.zeros((1, 2)))

    def test_get_params_round_trip(self):
        clf = RateKnnClassifier(k=7)
        assert clf.get_params() == {"k": 7}
        assert clf.set_params(k=3).k == 3

    @settings(max_examples=40)
    @given(
        scale=st.floats(min_value=1e-3, max_value=1e3),
        seed=st.integers(min_value=0, max_value=1000),
    )
    def test_decision_invariant_under_common_scaling(self, scale, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 100, size=(20, 2))
        y = np.array([("a" if m + s > 100 else "b") for m, s in X], dtype=object)
        if len(set(y)) < 2:
            return
        Q = rng.uniform(0, 100, size=(5, 2))
        base = RateKnnClassifier(k=3).fit(X, y).predict(Q)
        scaled = RateKnnClassifier(k=3).fit(X * scale, y).predict(Q * scale)
        assert list(base) == list(scaled)


class TestStratifiedCv:
    def test_fold_balance_25_over_10(self):
        y = np.array(["a"] * 25 + ["b"] * 30, dtype=object)
        folds = make_folds(y, 10, seed=1)
        a_counts = sorted(sum(1 for i in f if y[i] == "a") for f in folds)
        assert a_counts == [2] * 5 + [3] * 5

    def test_folds_partition_data(self):
        y = np.array(["a"] * 25 + ["b"] * 30, dtype=object)
        folds = make_folds(y, 10, seed=1)
        all_idx = sorted(i for f in folds for i in f)
        assert all_idx == list(range(55))

    def test_identical_seed_identical_folds(self):
        y = np.array(["a"] * 25 + ["b"] * 30, dtype=object)
        f1 = make_folds(y, 10, seed=7)
        f2 = make_folds(y, 10, seed=7)
        assert all((a == b).all() for a, b in zip(f1, f2))
        f3 = make_folds(y, 10, seed=8)
        assert any((a != b).any() for a, b in zip(f1, f3))

    def test_class_smaller_than_folds_rejected(self):
        y = np.array(["a"] * 5 + ["b"] * 30, dtype=object)
        with pytest.raises(ValueError, match="fewer than 10 folds"):
            make_folds(y, 10, seed=1)

    def test_separable_clusters_perfect_accuracy(self):
        rng = np.random.default_rng(0)
        Xa = rng.normal([10, 1], 0.1, size=(30, 2))
        Xb = rng.normal([100, 20], 0.1, size=(30, 2))
        X = np.vstack([Xa, Xb])
        y = np.array(["a"] * 30 + ["b"] * 30, dtype=object)
        cv = stratified_cv(X, y, AnalysisParams(k=3), seed=0)
        assert cv.mean_accuracy == 1.0

    def test_confusion_totals_and_weighted_mean(self):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 1, size=(47, 2))
        y = np.array(
            ["a"] * 15 + ["b"] * 15 + ["c"] * 17, dtype=object
        )
        cv = stratified_cv(X, y, AnalysisParams(k=3, folds=5), seed=2)
        assert cv.confusion.sum() == 47
        weighted = sum(a * n for a, n in zip(cv.fold_accuracies, cv.fold_sizes))
        assert cv.mean_accuracy == pytest.approx(weighted / sum(cv.fold_sizes))
