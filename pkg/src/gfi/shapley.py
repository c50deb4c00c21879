"""Grouped Shapley importance over pluggable value functions.

Players are feature groups; the value of a coalition depends only on the
union of its features, and the empty coalition is worth 0. Exact values
enumerate all coalitions; the sampled estimator averages marginal
contributions over uniformly drawn orderings of the players.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import (ContractError, Dataset, GroupSpec, Learner, Loss, Model, ResamplingPlan,
                   derive_seed, fit_seed, fold_sd, make_splits, parallel_map)
from .permutation import PermConfig, PermutedLosses, draw_permutations, fold_perm_seed
from .refit import RefitConfig, RefitEvaluator

EXACT_MAX_PLAYERS = 12


# ---------------------------------------------------------------------------
# value functions


class ValueFunction:
    """Coalition payout keyed by a set of feature indices, memoized.

    Subclasses implement :meth:`compute` for non-empty feature sets.
    """

    kind = "abstract"

    def __init__(self, memoize: bool = True):
        self.memoize = memoize
        self._memo: dict[frozenset, float] = {}
        self._lock = threading.Lock()
        self.n_evaluations = 0

    def compute(self, cols: frozenset) -> float:
        raise NotImplementedError

    def __call__(self, cols: Iterable[int]) -> float:
        key = frozenset(int(c) for c in cols)
        if not key:
            return 0.0
        if self.memoize:
            hit = self._memo.get(key)
            if hit is not None:
                return hit
        val = float(self.compute(key))
        with self._lock:
            self.n_evaluations += 1
            if self.memoize:
                # identical keys always produce identical values, so a lost
                # race simply stores the same number twice
                self._memo[key] = val
        return val

    def coalition(self, groups: GroupSpec, names: Iterable[str]) -> float:
        return self(groups.union(names))


class FunctionValueFunction(ValueFunction):
    """Wraps a plain callable on frozensets of feature indices."""

    kind = "function"

    def __init__(self, fn: Callable[[frozenset], float], memoize: bool = True):
        super().__init__(memoize)
        self.fn = fn

    def compute(self, cols: frozenset) -> float:
        return self.fn(cols)


class PermValueFunction(ValueFunction):
    """Group-only permutation importance of the coalition's features.

    One permutation set is drawn up front and reused for every coalition,
    so marginal contributions are paired comparisons.
    """

    kind = "perm"

    def __init__(self, model: Model, data: Dataset, cfg: PermConfig = PermConfig(),
                 loss: "str | Loss" = "mse", memoize: bool = True):
        super().__init__(memoize)
        self.cfg = cfg
        self.losses = PermutedLosses(model, data, draw_permutations(data.n, cfg), loss)

    def compute(self, cols: frozenset) -> float:
        return float(self.losses.gopfi_reps(sorted(cols)).mean())


class RefitValueFunction(ValueFunction):
    """Leave-one-group-in importance of the coalition's features (mean over folds)."""

    kind = "refit"

    def __init__(self, evaluator: RefitEvaluator, memoize: bool = True):
        super().__init__(memoize)
        self.evaluator = evaluator

    @classmethod
    def from_config(cls, cfg: RefitConfig, data: Dataset) -> "RefitValueFunction":
        return cls(RefitEvaluator(cfg, data))

    def compute(self, cols: frozenset) -> float:
        return float(self.evaluator.logi_folds(sorted(cols)).mean())


def interaction_value_function(terms: Mapping[Iterable[int], float]) -> FunctionValueFunction:
    """Value function v(S) = sum of the terms whose feature sets lie inside S.

    Single-feature keys are main effects, larger keys interaction terms.
    Useful for building value functions with a known Shapley decomposition.
    """
    items = [(frozenset(int(j) for j in k), float(w)) for k, w in terms.items()]
    return FunctionValueFunction(lambda S: sum(w for k, w in items if k <= S))


# ---------------------------------------------------------------------------
# reports


@dataclass
class ShapleyReport:
    """Group-level Shapley values with optional per-feature values.

    ``mode`` is ``"exact"``, ``"exhaustive"`` (all orderings) or
    ``"sampled"``; ``stderr`` is 0 for the first two.
    """

    phi: dict[str, float]
    stderr: dict[str, float]
    mode: str
    M: int | None
    members: dict[str, tuple[str, ...]]
    features: dict[str, float] | None = None
    total: float | None = None
    meta: dict = field(default_factory=dict)

    def remainder(self, group: str) -> float:
        return remainder(self, group)

    def to_json_obj(self) -> dict:
        groups = {}
        for g in self.phi:
            entry = {"phi": self.phi[g], "stderr": self.stderr[g]}
            if self.features is not None:
                entry["remainder"] = remainder(self, g)
            groups[g] = entry
        return {"groups": groups, "features": self.features, "mode": self.mode,
                "M": self.M if self.M is not None else "exact", "total": self.total,
                "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)


def remainder(report: ShapleyReport, group: str) -> float:
    """phi(G) minus the sum of the per-feature values inside G."""
    if report.features is None:
        raise ContractError("report has no feature-level Shapley values; run feature_shapley first")
    if group not in report.phi:
        raise ContractError(f"unknown group {group!r}")
    missing = [f for f in report.members[group] if f not in report.features]
    if missing:
        raise ContractError(f"no feature-level value for {missing}")
    return report.phi[group] - sum(report.features[f] for f in report.members[group])


# ---------------------------------------------------------------------------
# engines


def _player_sets(groups: GroupSpec) -> tuple[list[str], list[tuple[int, ...]]]:
    names = groups.names
    return names, [groups[g] for g in names]


def _union(sets, players) -> frozenset:
    out: set[int] = set()
    for k in players:
        out.update(sets[k])
    return frozenset(out)


def marginal_contribution(v: ValueFunction, groups: GroupSpec, G: str, S: Iterable[str]) -> float:
    """v(S with G) - v(S) for a coalition S of group names not containing G."""
    S = list(S)
    if G in S:
        raise ContractError(f"group {G!r} is already in the coalition")
    groups[G]
    return v(groups.union(S + [G])) - v(groups.union(S))


def shapley_weights(n_players: int) -> np.ndarray:
    """Weight of a coalition of size s (not containing the player): s!(L-1-s)!/L!."""
    L = n_players
    return np.array([math.factorial(s) * math.factorial(L - 1 - s) / math.factorial(L)
                     for s in range(L)])


def _members(groups: GroupSpec, feature_names: Sequence[str] | None) -> dict[str, tuple[str, ...]]:
    if feature_names is None:
        return {g: tuple(str(j) for j in groups[g]) for g in groups}
    return {g: tuple(feature_names[j] for j in groups[g]) for g in groups}


def gsi_exact(v: ValueFunction, groups: GroupSpec, max_players: int = EXACT_MAX_PLAYERS,
              feature_names: Sequence[str] | None = None, n_jobs: int = 1) -> ShapleyReport:
    """Exact grouped Shapley values by enumerating all 2^L coalitions."""
    names, sets = _player_sets(groups)
    L = len(names)
    if L > max_players:
        raise ContractError(f"{L} groups exceed the exact-enumeration cap of {max_players}; "
                            "use gsi_sampled")
    masks = range(1 << L)
    unions = [_union(sets, [k for k in range(L) if mask >> k & 1]) for mask in masks]
    vals = np.array(parallel_map(v, unions, n_jobs))
    size = np.array([bin(mask).count("1") for mask in masks])
    w = shapley_weights(L)
    phi = {}
    all_masks = np.arange(1 << L)
    for k, g in enumerate(names):
        without = all_masks[(all_masks >> k & 1) == 0]
        delta = vals[without | (1 << k)] - vals[without]
        phi[g] = float(np.sum(w[size[without]] * delta))
    return ShapleyReport(phi, {g: 0.0 for g in names}, "exact", None,
                         _members(groups, feature_names), total=float(vals[-1]),
                         meta={"value_function": v.kind})


def gsi_sampled(v: ValueFunction, groups: GroupSpec, M: int | None = 1000, seed: int = 0,
                exhaustive: bool = False, feature_names: Sequence[str] | None = None
                ) -> ShapleyReport:
    """Shapley values averaged over orderings of the groups.

    With ``exhaustive=True`` every one of the L! orderings is used once and
    the result equals :func:`gsi_exact`. Otherwise ``M`` orderings are drawn
    uniformly and the standard error of each mean is reported.
    """
    names, sets = _player_sets(groups)
    L = len(names)
    if exhaustive:
        orders = [list(o) for o in itertools.permutations(range(L))]
    else:
        if M is None or M < 1:
            raise ContractError(f"M must be >= 1, got {M}")
        rng = np.random.default_rng(derive_seed(seed, "orderings"))
        orders = [rng.permutation(L).tolist() for _ in range(M)]
    contrib = np.empty((len(orders), L))
    for r, order in enumerate(orders):
        prev, acc = 0.0, set()
        for k in order:
            acc.update(sets[k])
            cur = v(acc)
            contrib[r, k] = cur - prev
            prev = cur
    phi = {g: float(contrib[:, k].mean()) for k, g in enumerate(names)}
    if exhaustive or len(orders) < 2:
        stderr = {g: 0.0 for g in names}
    else:
        se = contrib.std(axis=0, ddof=1) / math.sqrt(len(orders))
        stderr = {g: float(se[k]) for k, g in enumerate(names)}
    return ShapleyReport(phi, stderr, "exhaustive" if exhaustive else "sampled",
                         len(orders), _members(groups, feature_names),
                         total=v(_union(sets, range(L))), meta={"value_function": v.kind, "seed": seed})


def feature_shapley(v: ValueFunction, features: Sequence[int], feature_names: Sequence[str],
                    exact: bool = True, M: int = 1000, seed: int = 0, n_jobs: int = 1
                    ) -> dict[str, float]:
    """Shapley value of each feature, each feature being its own player."""
    players = GroupSpec.singletons(list(features), list(feature_names))
    if exact:
        rep = gsi_exact(v, players, feature_names=feature_names, n_jobs=n_jobs)
    else:
        rep = gsi_sampled(v, players, M=M, seed=seed, feature_names=feature_names)
    return rep.phi


def grouped_shapley(v: ValueFunction, groups: GroupSpec, feature_names: Sequence[str],
                    with_features: bool = True, exact: bool = True, M: int = 1000, seed: int = 0,
                    n_jobs: int = 1) -> ShapleyReport:
    """Group-level values plus, optionally, per-feature values for the remainder.

    Feature-level players are the features that belong to at least one group.
    """
    if exact:
        rep = gsi_exact(v, groups, feature_names=feature_names, n_jobs=n_jobs)
    else:
        rep = gsi_sampled(v, groups, M=M, seed=seed, feature_names=feature_names)
    if with_features:
        feats = sorted(set().union(*[set(groups[g]) for g in groups]))
        rep.features = feature_shapley(v, feats, feature_names, exact=exact, M=M,
                                       seed=derive_seed(seed, "features"), n_jobs=n_jobs)
    return rep


def gsi_resampled(learner: Learner, data: Dataset, groups: GroupSpec,
                  plan: ResamplingPlan = ResamplingPlan(), cfg: PermConfig = PermConfig(),
                  loss: "str | Loss" = "mse", with_features: bool = False, splits=None,
                  exact: bool = True, M: int = 1000, n_jobs: int = 1
                  ) -> tuple[ShapleyReport, dict[str, list[float]]]:
    """Permutation-based grouped Shapley values computed on each test split.

    Returns the fold-averaged report (``stderr`` holds the fold sd) and the
    per-fold group values.
    """
    splits = make_splits(plan, data.n) if splits is None else list(splits)

    def one(i):
        train, test = splits[i]
        model = learner.fit(data.rows(train), seed=fit_seed(plan, i))
        v = PermValueFunction(model, data.rows(test), cfg.with_seed(fold_perm_seed(cfg.seed, i)), loss)
        return grouped_shapley(v, groups, data.feature_names, with_features=with_features,
                               exact=exact, M=M, seed=derive_seed(cfg.seed, "orderings", i))

    reps = parallel_map(one, range(len(splits)), n_jobs)
    per_fold = {g: [r.phi[g] for r in reps] for g in groups}
    phi = {g: float(np.mean(vals)) for g, vals in per_fold.items()}
    sd = {g: fold_sd(vals) for g, vals in per_fold.items()}
    features = None
    if with_features:
        features = {f: float(np.mean([r.features[f] for r in reps])) for f in reps[0].features}
    report = ShapleyReport(phi, sd, "exact" if exact else "sampled", None if exact else M,
                           _members(groups, data.feature_names), features,
                           total=float(np.mean([r.total for r in reps])),
                           meta={"value_function": "perm", "sd_over": "folds", "m": cfg.m})
    return report, per_fold
