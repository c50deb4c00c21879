"""Data model, losses, resampling and seeding shared by every estimator."""

from __future__ import annotations

import csv
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, NamedTuple, Protocol, Sequence

import numpy as np


class GfiError(Exception):
    """Base class for errors raised by this package."""


class ContractError(GfiError, ValueError):
    """A precondition of an operation was violated by the caller."""


class DataError(GfiError, ValueError):
    """Input data could not be read or is malformed."""


class NumericError(GfiError, ArithmeticError):
    """A numerical procedure failed (singular system, non-finite output, ...)."""


# ---------------------------------------------------------------------------
# seeding


def derive_seed(master: int, *keys) -> int:
    """Derive a child seed from ``master`` and a path of keys.

    Keys are hashed individually (strings via CRC32), so adding a new consumer
    under a different key never shifts the stream of an existing one.
    """
    words = [int(master) & 0xFFFFFFFF, (int(master) >> 32) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, (int, np.integer)):
            words.append(int(key) & 0xFFFFFFFF)
        else:
            words.append(zlib.crc32(str(key).encode("utf-8")))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def make_rng(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p feature matrix with named columns and a numeric target."""

    features: np.ndarray
    feature_names: tuple[str, ...]
    target: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        y = np.array(self.target, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2:
            raise ContractError(f"features must be a 2-d matrix, got shape {X.shape}")
        names = tuple(str(s) for s in self.feature_names)
        n, p = X.shape
        if n < 2:
            raise ContractError(f"a dataset needs at least 2 rows, got {n}")
        if p < 1:
            raise ContractError("a dataset needs at least one feature")
        if len(names) != p:
            raise ContractError(f"{len(names)} feature names for {p} columns")
        if len(set(names)) != p:
            dupes = sorted({s for s in names if names.count(s) > 1})
            raise ContractError(f"duplicate feature names: {dupes}")
        if y.shape[0] != n:
            raise ContractError(f"target has {y.shape[0]} entries for {n} rows")
        if not np.all(np.isfinite(X)):
            row = int(np.argwhere(~np.isfinite(X))[0, 0])
            raise ContractError(f"non-finite feature value in row {row}")
        if not np.all(np.isfinite(y)):
            row = int(np.argwhere(~np.isfinite(y))[0, 0])
            raise ContractError(f"non-finite target value in row {row}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def rows(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.feature_names, self.target[index])

    def columns(self, cols: Sequence[int]) -> "Dataset":
        """Dataset restricted to the given column indices (in the given order)."""
        cols = [int(c) for c in cols]
        if not cols:
            raise ContractError("cannot select an empty column set")
        return Dataset(self.features[:, cols], [self.feature_names[c] for c in cols], self.target)

    def drop(self, cols: Iterable[int]) -> "Dataset":
        drop = set(int(c) for c in cols)
        keep = [j for j in range(self.p) if j not in drop]
        if not keep:
            raise ContractError("dropping these columns leaves no features")
        return self.columns(keep)

    def index_of(self, names: Iterable[str]) -> list[int]:
        lookup = {s: j for j, s in enumerate(self.feature_names)}
        out = []
        for s in names:
            if s not in lookup:
                raise ContractError(f"unknown feature name {s!r}")
            out.append(lookup[s])
        return out

    def checksum(self) -> str:
        """Content fingerprint; equal datasets hash equal."""
        h = zlib.crc32(self.features.tobytes())
        h = zlib.crc32(self.target.tobytes(), h)
        h = zlib.crc32("\x1f".join(self.feature_names).encode(), h)
        return f"{h:08x}"

    @classmethod
    def from_csv(cls, path, target: str) -> "Dataset":
        """Read a CSV with a header row; ``target`` names the target column.

        Rows with missing or non-numeric cells are rejected with their
        (1-based, header excluded) row number.
        """
        path = Path(path)
        try:
            fh = path.open(newline="", encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot open {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path} is empty") from None
            header = [h.strip() for h in header]
            if target not in header:
                raise DataError(f"target column {target!r} not in header of {path}")
            t = header.index(target)
            rows = []
            for lineno, row in enumerate(reader, start=1):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"row {lineno}: expected {len(header)} cells, got {len(row)}")
                try:
                    vals = [float(c) if c.strip() != "" else float("nan") for c in row]
                except ValueError as exc:
                    raise DataError(f"row {lineno}: {exc}") from None
                if not all(np.isfinite(vals)):
                    raise DataError(f"row {lineno}: missing or non-finite cell")
                rows.append(vals)
        if len(rows) < 2:
            raise DataError(f"{path} has fewer than 2 data rows")
        arr = np.asarray(rows, dtype=float)
        names = [h for j, h in enumerate(header) if j != t]
        X = np.delete(arr, t, axis=1)
        return cls(X, names, arr[:, t])

    def to_csv(self, path, target: str = "y") -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(self.feature_names) + [target])
            for row, yv in zip(self.features, self.target):
                w.writerow([repr(float(v)) for v in row] + [repr(float(yv))])


@dataclass(frozen=True, eq=False)
class GroupSpec:
    """Named, possibly overlapping feature groups (0-based column indices)."""

    groups: Mapping[str, tuple[int, ...]]
    p: int

    def __post_init__(self):
        clean = {}
        for name, idx in self.groups.items():
            name = str(name)
            idx = tuple(sorted(set(int(i) for i in idx)))
            if not idx:
                raise ContractError(f"group {name!r} is empty")
            if idx[0] < 0 or idx[-1] >= self.p:
                raise ContractError(f"group {name!r} has an index outside [0, {self.p})")
            clean[name] = idx
        if not clean:
            raise ContractError("a group spec needs at least one group")
        object.__setattr__(self, "groups", clean)

    @classmethod
    def from_names(cls, mapping: Mapping[str, Iterable[str]], feature_names: Sequence[str]) -> "GroupSpec":
        lookup = {s: j for j, s in enumerate(feature_names)}
        groups = {}
        for name, feats in mapping.items():
            feats = list(feats)
            missing = [f for f in feats if f not in lookup]
            if missing:
                raise ContractError(f"group {name!r} names unknown features {missing}")
            groups[name] = [lookup[f] for f in feats]
        return cls(groups, len(feature_names))

    @classmethod
    def from_json(cls, path, feature_names: Sequence[str]) -> "GroupSpec":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict) or not isinstance(doc.get("groups"), dict):
            raise ContractError(f'{path}: expected an object {{"groups": {{name: [features]}}}}')
        return cls.from_names(doc["groups"], feature_names)

    @classmethod
    def singletons(cls, features: Sequence[int], feature_names: Sequence[str]) -> "GroupSpec":
        return cls({feature_names[j]: (j,) for j in features}, len(feature_names))

    def to_json_obj(self, feature_names: Sequence[str]) -> dict:
        return {"groups": {g: [feature_names[j] for j in idx] for g, idx in self.groups.items()}}

    @property
    def names(self) -> list[str]:
        return list(self.groups)

    def __getitem__(self, name: str) -> tuple[int, ...]:
        try:
            return self.groups[name]
        except KeyError:
            raise ContractError(f"unknown group {name!r}") from None

    def __iter__(self):
        return iter(self.groups)

    def __len__(self) -> int:
        return len(self.groups)

    def union(self, names: Iterable[str]) -> tuple[int, ...]:
        out: set[int] = set()
        for g in names:
            out.update(self[g])
        return tuple(sorted(out))


# ---------------------------------------------------------------------------
# losses


@dataclass(frozen=True)
class Loss:
    name: str
    pointwise: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, pred, y) -> np.ndarray:
        return self.pointwise(np.asarray(pred, dtype=float), np.asarray(y, dtype=float))


MSE = Loss("mse", lambda pred, y: (pred - y) ** 2)
MAE = Loss("mae", lambda pred, y: np.abs(pred - y))
LOSSES = {"mse": MSE, "mae": MAE}


def get_loss(loss: "str | Loss") -> Loss:
    if isinstance(loss, Loss):
        return loss
    try:
        return LOSSES[loss]
    except KeyError:
        raise ContractError(f"unknown loss {loss!r}; choose from {sorted(LOSSES)}") from None


# ---------------------------------------------------------------------------
# model contracts


class Model(Protocol):
    #: training width; ``None`` means any width is accepted
    n_features: int | None

    def predict(self, X: np.ndarray) -> np.ndarray: ...


class Learner(Protocol):
    name: str

    def fit(self, data: Dataset, seed: int | None = None) -> Model: ...


def check_width(model: Model, p: int) -> None:
    width = getattr(model, "n_features", None)
    if width is not None and width != p:
        raise ContractError(f"model was trained on {width} features, data has {p}")


def predict_checked(model: Model, X: np.ndarray) -> np.ndarray:
    """Predict and verify shape and finiteness of the output."""
    pred = np.asarray(model.predict(X), dtype=float).reshape(-1)
    if pred.shape[0] != X.shape[0]:
        raise ContractError(f"model returned {pred.shape[0]} predictions for {X.shape[0]} rows")
    bad = ~np.isfinite(pred)
    if bad.any():
        raise NumericError(f"non-finite prediction for row {int(np.argmax(bad))}")
    return pred


def estimate_ge(model: Model, test: Dataset, loss: "str | Loss" = "mse") -> float:
    """Mean pointwise loss of ``model`` on ``test``."""
    loss = get_loss(loss)
    check_width(model, test.p)
    pred = predict_checked(model, test.features)
    return float(np.mean(loss(pred, test.target)))


# ---------------------------------------------------------------------------
# resampling


@dataclass(frozen=True)
class ResamplingPlan:
    """How to split data into train/test pairs.

    ``k`` is the number of folds for ``kfold`` and the number of
    repetitions for ``subsampling`` and ``bootstrap``.
    """

    kind: str = "kfold"
    k: int = 10
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("kfold", "subsampling", "bootstrap"):
            raise ContractError(f"unknown resampling kind {self.kind!r}")
        if self.kind == "kfold" and self.k < 2:
            raise ContractError(f"kfold needs k >= 2, got {self.k}")
        if self.k < 1:
            raise ContractError(f"need at least one repetition, got {self.k}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ContractError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    @classmethod
    def kfold(cls, k: int = 10, seed: int = 0) -> "ResamplingPlan":
        return cls("kfold", k, 0.8, seed)

    @classmethod
    def subsampling(cls, repetitions: int, train_fraction: float = 0.8, seed: int = 0) -> "ResamplingPlan":
        return cls("subsampling", repetitions, train_fraction, seed)

    @classmethod
    def bootstrap(cls, repetitions: int, seed: int = 0) -> "ResamplingPlan":
        return cls("bootstrap", repetitions, 0.8, seed)

    def with_seed(self, seed: int) -> "ResamplingPlan":
        return ResamplingPlan(self.kind, self.k, self.train_fraction, seed)


Split = tuple[np.ndarray, np.ndarray]


def make_splits(plan: ResamplingPlan, n: int) -> list[Split]:
    """Train/test index pairs for ``n`` rows; a pure function of (plan, n)."""
    if n < 2:
        raise ContractError(f"cannot split fewer than 2 rows (n={n})")
    rng = make_rng(plan.seed, "splits", plan.kind)
    splits: list[Split] = []
    if plan.kind == "kfold":
        if n < plan.k:
            raise ContractError(f"kfold with k={plan.k} needs n >= k, got n={n}")
        perm = rng.permutation(n)
        for fold in np.array_split(perm, plan.k):
            test = np.sort(fold)
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            splits.append((train, test))
    elif plan.kind == "subsampling":
        n_train = int(round(plan.train_fraction * n))
        n_train = min(max(n_train, 1), n - 1)
        for _ in range(plan.k):
            perm = rng.permutation(n)
            splits.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    else:
        for _ in range(plan.k):
            train = rng.integers(0, n, size=n)
            oob = np.setdiff1d(np.arange(n), train)
            if oob.size == 0:
                raise ContractError("bootstrap draw left no out-of-bag rows; use a larger n")
            splits.append((np.sort(train), oob))
    return splits


def split_fingerprint(splits: Sequence[Split]) -> str:
    h = 0
    for train, test in splits:
        h = zlib.crc32(np.asarray(train, dtype=np.int64).tobytes(), h)
        h = zlib.crc32(np.asarray(test, dtype=np.int64).tobytes(), h)
    return f"{h:08x}"


def fold_sd(values) -> float:
    """Standard deviation over folds with the n-1 denominator (0 for one fold)."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


class GEResult(NamedTuple):
    mean: float
    sd: float
    per_fold: np.ndarray


def estimate_ge_resampled(learner: Learner, data: Dataset, plan: ResamplingPlan,
                          loss: "str | Loss" = "mse", n_jobs: int = 1) -> GEResult:
    """Resampled generalization error: fit on each train split, score its test split."""
    loss = get_loss(loss)
    splits = make_splits(plan, data.n)

    def one(i):
        train, test = splits[i]
        if len(train) < 2:
            raise ContractError(f"split {i} has fewer than 2 training rows")
        model = learner.fit(data.rows(train), seed=fit_seed(plan, i))
        return estimate_ge(model, data.rows(test), loss)

    per_fold = np.array(parallel_map(one, range(len(splits)), n_jobs))
    return GEResult(float(per_fold.mean()), fold_sd(per_fold), per_fold)


# ---------------------------------------------------------------------------
# parallel helper


def parallel_map(fn, items, n_jobs: int = 1) -> list:
    """Order-preserving map; threads only (numba kernels release the GIL)."""
    items = list(items)
    if n_jobs is None or n_jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def fit_seed(plan: ResamplingPlan, i: int) -> int:
    """Seed handed to the learner for split ``i`` of ``plan``."""
    return derive_seed(plan.seed, "fit", i)


@dataclass(frozen=True, eq=False)
class FixedLearner:
    """A learner that ignores its data and returns a pre-fitted model."""

    model: Model
    name: str = "fixed"

    def fit(self, data: Dataset, seed: int | None = None) -> Model:
        return self.model
