"""k-nearest-neighbors device classifier with deterministic tie-breaking,
plus seeded stratified cross-validation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .synth import subrng

__all__ = ["AnalysisParams", "CvResult", "RateKnnClassifier", "stratified_cv"]


@dataclass(frozen=True)
class AnalysisParams:
    """Rate-analysis parameters: sample period s, window length w,
    neighbor count k, and cross-validation fold count."""

    s: float = 10.0
    w: float = 300.0
    k: int = 5
    folds: int = 10

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("sample period must be positive")
        if self.w < self.s or abs(self.w / self.s - round(self.w / self.s)) > 1e-9:
            raise ValueError("window must be a positive multiple of the sample period")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be an odd positive integer")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


class RateKnnClassifier(BaseEstimator, ClassifierMixin):
    """Euclidean k-NN over min-max scaled (mean, stddev) features.

    Fully deterministic: neighbor ties break by training index, label ties
    by majority count, then smaller aggregate distance, then lexicographic
    label.
    """

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=object)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one label per row")
        if self.k > len(X):
            raise ValueError(f"k={self.k} exceeds training set size {len(X)}")
        self.classes_ = np.array(sorted(set(y)), dtype=object)
        self.min_ = X.min(axis=0)
        self.max_ = X.max(axis=0)
        span = self.max_ - self.min_
        self.constant_dims_ = span == 0
        safe = np.where(self.constant_dims_, 1.0, span)
        self.X_ = (X - self.min_) / safe
        self.X_[:, self.constant_dims_] = 0.0
        self.y_ = y
        # two classes presenting identical feature point sets cannot be
        # separated; surface it instead of silently misclassifying
        point_sets = {
            c: frozenset(map(tuple, self.X_[y == c])) for c in self.classes_
        }
        self.degenerate_classes_ = sorted(
            {
                (str(a), str(b))
                for a in point_sets
                for b in point_sets
                if a < b and point_sets[a] == point_sets[b]
            }
        )
        if self.degenerate_classes_:
            warnings.warn(
                f"classes with identical feature sets: {self.degenerate_classes_}",
                stacklevel=2,
            )
        return self

    def _scale(self, X):
        span = np.where(self.constant_dims_, 1.0, self.max_ - self.min_)
        Xs = (np.asarray(X, dtype=float) - self.min_) / span
        Xs[:, self.constant_dims_] = 0.0
        return Xs

    def _classify_one(self, x):
        d = np.sqrt(((self.X_ - x) ** 2).sum(axis=1))
        order = np.argsort(d, kind="stable")[: self.k]  # stable: index ties
        labels = self.y_[order]
        dists = d[order]
        counts: dict[str, int] = {}
        agg: dict[str, float] = {}
        for lab, dist in zip(labels, dists):
            counts[lab] = counts.get(lab, 0) + 1
            agg[lab] = agg.get(lab, 0.0) + dist
        best = min(counts, key=lambda lab: (-counts[lab], agg[lab], lab))
        return best, counts[best] / self.k

    def predict_with_confidence(self, X):
        """Labels plus majority-fraction confidence for each query row."""
        if not hasattr(self, "X_"):
            raise NotFittedError("classifier not fitted")
        results = [self._classify_one(x) for x in self._scale(X)]
        labels = np.array([r[0] for r in results], dtype=object)
        conf = np.array([r[1] for r in results])
        return labels, conf

    def predict(self, X):
        return self.predict_with_confidence(X)[0]


@dataclass(frozen=True)
class CvResult:
    fold_accuracies: tuple[float, ...]
    fold_sizes: tuple[int, ...]
    mean_accuracy: float
    labels: tuple[str, ...]
    confusion: np.ndarray  # rows true, cols predicted, summed over folds


def make_folds(y, folds: int, seed: int) -> list[np.ndarray]:
    """Stratified fold assignment: seeded shuffle within each class, then
    round-robin.  Per-class counts across folds differ by at most one."""
    y = np.asarray(y, dtype=object)
    assignments: list[list[int]] = [[] for _ in range(folds)]
    for c in sorted(set(y)):
        idx = np.flatnonzero(y == c)
        if len(idx) < folds:
            raise ValueError(
                f"class {c!r} has {len(idx)} vectors, fewer than {folds} folds"
            )
        rng = subrng(seed, "cv", str(c))
        idx = idx.copy()
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            assignments[pos % folds].append(int(i))
    return [np.array(sorted(a), dtype=int) for a in assignments]


def stratified_cv(X, y, params: AnalysisParams, seed: int = 0) -> CvResult:
    """k-fold stratified cross-validation of the rate k-NN classifier."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=object)
    folds = make_folds(y, params.folds, seed)
    labels = tuple(str(c) for c in sorted(set(y)))
    index = {c: i for i, c in enumerate(labels)}
    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    accs: list[float] = []
    sizes: list[int] = []
    for test_idx in folds:
        mask = np.ones(len(y), dtype=bool)
        mask[test_idx] = False
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            clf = RateKnnClassifier(k=params.k).fit(X[mask], y[mask])
            pred = clf.predict(X[test_idx])
        correct = 0
        for true, p in zip(y[test_idx], pred):
            confusion[index[str(true)], index[str(p)]] += 1
            correct += true == p
        accs.append(correct / len(test_idx))
        sizes.append(len(test_idx))
    mean_acc = float(confusion.trace() / confusion.sum())
    return CvResult(
        fold_accuracies=tuple(accs),
        fold_sizes=tuple(sizes),
        mean_accuracy=mean_acc,
        labels=labels,
        confusion=confusion,
    )
