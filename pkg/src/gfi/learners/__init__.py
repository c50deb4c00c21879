"""Built-in learners: a mean-only baseline, ridge regression and a random forest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ContractError, Dataset, NumericError, derive_seed, parallel_map
from . import _tree

__all__ = [
    "NullLearner", "NullModel", "LinearLearner", "LinearModel",
    "ForestLearner", "ForestModel", "bin_features", "make_learner",
    "fit_null", "fit_linear", "fit_forest",
]


# ---------------------------------------------------------------------------
# null


@dataclass(frozen=True)
class NullModel:
    """Predicts a constant for every row of any input width."""

    mean: float
    n_features: int | None = None

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X)
        n = X.shape[0] if X.ndim >= 1 else 1
        return np.full(n, self.mean)


@dataclass(frozen=True)
class NullLearner:
    name: str = "null"

    def fit(self, data: Dataset, seed: int | None = None) -> NullModel:
        return NullModel(float(np.mean(data.target)))


def fit_null(data: Dataset) -> NullModel:
    return NullLearner().fit(data)


# ---------------------------------------------------------------------------
# ridge / OLS


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ContractError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X @ self.coef + self.intercept


@dataclass(frozen=True)
class LinearLearner:
    """Least squares with an optional ridge penalty on the slopes.

    The intercept is never penalized: the problem is solved on centered data
    and the intercept recovered from the means.
    """

    ridge: float = 0.0
    name: str = "linear"

    def __post_init__(self):
        if not self.ridge >= 0:
            raise ContractError(f"ridge penalty must be >= 0, got {self.ridge}")

    def fit(self, data: Dataset, seed: int | None = None) -> LinearModel:
        X, y = data.features, data.target
        xm, ym = X.mean(axis=0), y.mean()
        Xc = X - xm
        A = Xc.T @ Xc
        b = Xc.T @ (y - ym)
        if self.ridge == 0:
            if np.linalg.matrix_rank(Xc) < X.shape[1]:
                raise NumericError(
                    "design matrix is rank deficient; use a ridge penalty > 0")
        else:
            A = A + self.ridge * np.eye(X.shape[1])
        try:
            coef = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"linear system is singular ({exc}); use a ridge penalty > 0") from None
        if not np.all(np.isfinite(coef)):
            raise NumericError("non-finite coefficients; use a ridge penalty > 0")
        return LinearModel(coef, float(ym - xm @ coef), X.shape[1])


def fit_linear(data: Dataset, ridge: float = 0.0) -> LinearModel:
    return LinearLearner(ridge).fit(data)


# ---------------------------------------------------------------------------
# random forest


def bin_features(X: np.ndarray, max_bins: int = 256):
    """Map each column to integer codes with at most ``max_bins`` bins.

    Columns with few distinct values get one bin per value and cut points at
    midpoints between consecutive values, so splits are exactly those of an
    unbinned CART. Wider columns are cut at quantiles. Returns
    ``(codes, n_bins, cuts)`` where ``code <= b`` iff ``x <= cuts[f][b]``.
    """
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int32)
    n_bins = np.empty(p, dtype=np.int64)
    cuts = []
    for f in range(p):
        col = X[:, f]
        u = np.unique(col)
        if len(u) > max_bins:
            q = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
            c = np.unique(q)
            c = c[c < u[-1]]
        else:
            c = (u[:-1] + u[1:]) / 2.0
        codes[:, f] = np.searchsorted(c, col, side="left")
        n_bins[f] = len(c) + 1
        cuts.append(c)
    return codes, n_bins, cuts


@dataclass(frozen=True, eq=False)
class ForestModel:
    """Flat-array forest; prediction is the mean over trees."""

    offsets: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    value: np.ndarray
    n_features: int

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ContractError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        return _tree.predict_forest(X, self.offsets, self.feature, self.threshold,
                                    self.left, self.value)

    def tree_predictions(self, X) -> np.ndarray:
        """Per-tree predictions, shape (n_trees, n)."""
        X = self._check(X)
        return _tree.predict_trees(X, self.offsets, self.feature, self.threshold,
                                   self.left, self.value)


@dataclass(frozen=True)
class ForestLearner:
    """Bagged CART regression trees with per-node feature subsampling.

    Parameters
    ----------
    n_trees : int
        Number of trees.
    max_depth : int or None
        Depth limit; ``None`` grows until leaves are pure or too small.
    min_leaf : int
        Minimum number of training rows in a leaf.
    feature_fraction : float
        Share of features tried at each split (at least one).
    seed : int
        Default seed when ``fit`` is called without one.
    bootstrap : bool
        Fit each tree on a bootstrap sample (``False`` uses all rows).
    max_bins : int
        Columns with more distinct values are quantile-binned.
    n_jobs : int
        Threads used to grow trees; results do not depend on it.
    """

    n_trees: int = 300
    max_depth: int | None = None
    min_leaf: int = 5
    feature_fraction: float = 1.0 / 3.0
    seed: int = 0
    bootstrap: bool = True
    max_bins: int = 256
    n_jobs: int = 1
    name: str = "forest"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ContractError(f"need at least one tree, got {self.n_trees}")
        if self.min_leaf < 1:
            raise ContractError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ContractError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ContractError(f"feature_fraction must be in (0, 1], got {self.feature_fraction}")
        if self.max_bins < 2:
            raise ContractError(f"max_bins must be >= 2, got {self.max_bins}")

    def mtry(self, p: int) -> int:
        return max(1, min(p, int(self.feature_fraction * p + 1e-9)))

    def fit(self, data: Dataset, seed: int | None = None) -> ForestModel:
        seed = self.seed if seed is None else seed
        X, y = data.features, np.ascontiguousarray(data.target)
        n, p = X.shape
        codes, n_bins, cuts = bin_features(X, self.max_bins)
        mtry = self.mtry(p)
        depth = np.iinfo(np.int64).max if self.max_depth is None else self.max_depth
        all_rows = np.arange(n, dtype=np.int64)

        def grow(t):
            s = derive_seed(seed, "tree", t)
            sample = _tree.bootstrap_indices(n, s) if self.bootstrap else all_rows
            return _tree.fit_tree(codes, n_bins, y, sample, depth, self.min_leaf, mtry, s)

        trees = parallel_map(grow, range(self.n_trees), self.n_jobs)
        sizes = [len(t[0]) for t in trees]
        offsets = np.zeros(self.n_trees + 1, dtype=np.int64)
        offsets[1:] = np.cumsum(sizes)
        feature = np.concatenate([t[0] for t in trees])
        split_bin = np.concatenate([t[1] for t in trees])
        left = np.concatenate([t[2] for t in trees])
        value = np.concatenate([t[3] for t in trees])
        cut_base = np.zeros(p + 1, dtype=np.int64)
        cut_base[1:] = np.cumsum([len(c) for c in cuts])
        flat_cuts = np.concatenate(cuts + [np.zeros(1)])
        internal = feature >= 0
        threshold = np.zeros(len(feature))
        threshold[internal] = flat_cuts[cut_base[feature[internal]] + split_bin[internal]]
        for arr in (offsets, feature, threshold, left, value):
            arr.setflags(write=False)
        return ForestModel(offsets, feature, threshold, left, value, p)


def fit_forest(data: Dataset, **params) -> ForestModel:
    seed = params.pop("seed", 0)
    return ForestLearner(**params).fit(data, seed=seed)


def make_learner(spec: dict):
    """Build a learner from a ``{"kind": ..., **params}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("kind", "forest")
    if kind == "null":
        return NullLearner()
    if kind == "linear":
        return LinearLearner(**spec)
    if kind == "forest":
        return ForestLearner(**spec)
    raise ContractError(f"unknown learner kind {kind!r}")
