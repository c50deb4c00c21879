"""Refitting-based group importance: leave one group out (LOGO) and in (LOGI)."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import (ContractError, Dataset, GroupSpec, Learner, Loss, ResamplingPlan,
                   estimate_ge, fit_seed, fold_sd, get_loss, make_splits, parallel_map,
                   split_fingerprint)
from .learners import ForestLearner, NullLearner
from .permutation import GroupScore, ImportanceReport


@dataclass(frozen=True)
class RefitConfig:
    """Learner, resampling plan and loss shared by every refit in a report."""

    plan: ResamplingPlan = field(default_factory=ResamplingPlan)
    learner: Learner = field(default_factory=ForestLearner)
    loss: "str | Loss" = "mse"


class RefitResult(NamedTuple):
    mean: float
    sd: float
    per_fold: np.ndarray
    fingerprint: str


class RefitEvaluator:
    """Per-fold generalization error of the learner restricted to column sets.

    Results are memoized by the set of columns, so every caller sees the
    same splits and the same fitted-model scores. The empty set means the
    null (mean-only) model.
    """

    def __init__(self, cfg: RefitConfig, data: Dataset, splits=None, n_jobs: int = 1):
        self.cfg = cfg
        self.data = data
        self.loss = get_loss(cfg.loss)
        self.splits = make_splits(cfg.plan, data.n) if splits is None else list(splits)
        for i, (train, _) in enumerate(self.splits):
            if len(train) < 2:
                raise ContractError(f"split {i} has fewer than 2 training rows")
        self.fingerprint = split_fingerprint(self.splits)
        self.n_jobs = n_jobs
        self._cache: dict[frozenset, np.ndarray] = {}
        self._lock = threading.Lock()
        self.n_fits = 0

    def ge(self, cols: Iterable[int]) -> np.ndarray:
        """Per-fold GE of a model trained on ``cols`` only."""
        key = frozenset(int(c) for c in cols)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if key:
            sub = self.data.columns(sorted(key))
            learner = self.cfg.learner
        else:
            sub = self.data
            learner = NullLearner()

        def one(i):
            train, test = self.splits[i]
            model = learner.fit(sub.rows(train), seed=fit_seed(self.cfg.plan, i))
            return estimate_ge(model, sub.rows(test), self.loss)

        out = np.array(parallel_map(one, range(len(self.splits)), self.n_jobs))
        out.setflags(write=False)
        with self._lock:
            self._cache[key] = out
            self.n_fits += len(self.splits)
        return out

    def result(self, per_fold: np.ndarray) -> RefitResult:
        return RefitResult(float(np.mean(per_fold)), fold_sd(per_fold), per_fold, self.fingerprint)

    def logo_folds(self, G: Sequence[int]) -> np.ndarray:
        G = set(int(j) for j in G)
        if not G:
            raise ContractError("group must be non-empty")
        rest = [j for j in range(self.data.p) if j not in G]
        if not rest:
            raise ContractError("removing this group leaves no features; use logi instead")
        return self.ge(rest) - self.ge(range(self.data.p))

    def logi_folds(self, G: Sequence[int]) -> np.ndarray:
        G = set(int(j) for j in G)
        if not G:
            raise ContractError("group must be non-empty")
        return self.ge(()) - self.ge(G)


def logo(cfg: RefitConfig, data: Dataset, G: Sequence[int]) -> RefitResult:
    """GE of the learner without G minus GE of the full learner."""
    ev = RefitEvaluator(cfg, data)
    return ev.result(ev.logo_folds(G))


def logi(cfg: RefitConfig, data: Dataset, G: Sequence[int]) -> RefitResult:
    """GE of the null model minus GE of the learner trained on G alone."""
    ev = RefitEvaluator(cfg, data)
    return ev.result(ev.logi_folds(G))


def logi_union(cfg: RefitConfig, data: Dataset, groups: Iterable[Sequence[int]]) -> RefitResult:
    """LOGI of the union of several groups."""
    cols: set[int] = set()
    for G in groups:
        cols.update(int(j) for j in G)
    return logi(cfg, data, sorted(cols))


REFIT_METHODS = ("logo", "logi")


def refit_importance(cfg: RefitConfig, data: Dataset, groups: GroupSpec,
                     methods: Sequence[str] = REFIT_METHODS, evaluator: RefitEvaluator | None = None
                     ) -> dict[str, ImportanceReport]:
    """LOGO and/or LOGI for every group, all on one set of splits."""
    bad = [m for m in methods if m not in REFIT_METHODS]
    if bad:
        raise ContractError(f"unknown refit method(s) {bad}; choose from {REFIT_METHODS}")
    ev = evaluator or RefitEvaluator(cfg, data)
    loss = get_loss(cfg.loss)
    out = {}
    for method in methods:
        scores = {}
        for g in groups:
            folds = ev.logo_folds(groups[g]) if method == "logo" else ev.logi_folds(groups[g])
            scores[g] = GroupScore(float(np.mean(folds)), fold_sd(folds), [float(v) for v in folds])
        plan = cfg.plan
        out[method] = ImportanceReport(method, scores, {
            "loss": loss.name, "learner": getattr(cfg.learner, "name", type(cfg.learner).__name__),
            "sd_over": "folds", "split_fingerprint": ev.fingerprint,
            "plan": {"kind": plan.kind, "k": plan.k, "train_fraction": plan.train_fraction,
                     "seed": plan.seed}})
    return out
