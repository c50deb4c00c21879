"""Permutation importance for single features and feature groups.

``gpfi`` permutes the columns of a group jointly and measures the loss
increase. ``gopfi`` starts from data where every column is permuted and
measures how much is recovered by restoring only the group.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (ContractError, Dataset, GroupSpec, Learner, Loss, Model, ResamplingPlan,
                   check_width, derive_seed, fit_seed, fold_sd, get_loss, make_splits,
                   parallel_map, predict_checked)

#: upper bound on rows sent to a single ``predict`` call
PREDICT_BATCH_ROWS = 200_000

EXHAUSTIVE_MAX_N = 8


@dataclass(frozen=True)
class PermConfig:
    """Permutation settings.

    Parameters
    ----------
    m : int
        Number of random permutations.
    seed : int
        Seed of the permutation draws.
    normalize : bool
        Divide each group score by the group size.
    exhaustive : bool
        Use all n! orderings instead of ``m`` random ones (n <= 8).
    """

    m: int = 50
    seed: int = 0
    normalize: bool = False
    exhaustive: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ContractError(f"m must be >= 1, got {self.m}")

    def with_seed(self, seed: int) -> "PermConfig":
        return PermConfig(self.m, seed, self.normalize, self.exhaustive)


def draw_permutations(n: int, cfg: PermConfig) -> np.ndarray:
    """Row orderings as an (m, n) array; uniform and identity included."""
    if n < 2:
        raise ContractError(f"permutation needs at least 2 rows, got {n}")
    if cfg.exhaustive:
        if n > EXHAUSTIVE_MAX_N:
            raise ContractError(f"exhaustive permutations need n <= {EXHAUSTIVE_MAX_N}, got {n}")
        return np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    rng = np.random.default_rng(derive_seed(cfg.seed, "perm"))
    return np.stack([rng.permutation(n) for _ in range(cfg.m)])


class PermutedLosses:
    """Per-repetition mean losses with selected columns row-permuted.

    One instance holds a model, test data and a permutation set; each call
    to :meth:`losses` reuses the same orderings, so all groups scored through
    it share Monte-Carlo noise.
    """

    def __init__(self, model: Model, data: Dataset, perms: np.ndarray, loss: "str | Loss" = "mse"):
        check_width(model, data.p)
        self.model = model
        self.data = data
        self.perms = np.asarray(perms, dtype=np.int64)
        self.loss = get_loss(loss)
        self._cache: dict[frozenset, np.ndarray] = {}
        self.original = float(np.mean(self.loss(predict_checked(model, data.features), data.target)))

    def losses(self, permuted: Iterable[int]) -> np.ndarray:
        """Mean loss for each ordering when the columns ``permuted`` are shuffled."""
        cols = np.array(sorted(set(int(c) for c in permuted)), dtype=np.int64)
        key = frozenset(cols.tolist())
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        m = len(self.perms)
        if cols.size == 0:
            out = np.full(m, self.original)
        else:
            X, y = self.data.features, self.data.target
            n = X.shape[0]
            per_batch = max(1, PREDICT_BATCH_ROWS // n)
            out = np.empty(m)
            for k0 in range(0, m, per_batch):
                k1 = min(m, k0 + per_batch)
                block = np.tile(X, (k1 - k0, 1))
                for r, k in enumerate(range(k0, k1)):
                    block[r * n:(r + 1) * n, cols] = X[self.perms[k]][:, cols]
                pred = predict_checked(self.model, block)
                out[k0:k1] = self.loss(pred, np.tile(y, k1 - k0)).reshape(k1 - k0, n).mean(axis=1)
        self._cache[key] = out
        return out

    def gpfi_reps(self, G: Sequence[int]) -> np.ndarray:
        return self.losses(G) - self.original

    def gopfi_reps(self, G: Sequence[int]) -> np.ndarray:
        rest = [j for j in range(self.data.p) if j not in set(G)]
        return self.losses(range(self.data.p)) - self.losses(rest)


def _check_group(G, p: int, allow_empty: bool = False) -> list[int]:
    G = sorted(set(int(j) for j in G))
    if not G and not allow_empty:
        raise ContractError("group must be non-empty")
    if G and (G[0] < 0 or G[-1] >= p):
        raise ContractError(f"group index out of range [0, {p})")
    return G


def _scale(G, cfg: PermConfig) -> float:
    return 1.0 / len(G) if cfg.normalize and G else 1.0


def gpfi(model: Model, data: Dataset, G: Sequence[int], cfg: PermConfig = PermConfig(),
         loss: "str | Loss" = "mse") -> float:
    """Grouped permutation importance: loss increase when G is permuted jointly."""
    G = _check_group(G, data.p)
    pl = PermutedLosses(model, data, draw_permutations(data.n, cfg), loss)
    return float(pl.gpfi_reps(G).mean()) * _scale(G, cfg)


def pfi(model: Model, data: Dataset, j: int, cfg: PermConfig = PermConfig(),
        loss: "str | Loss" = "mse") -> float:
    """Permutation importance of the single feature ``j``."""
    if not 0 <= int(j) < data.p:
        raise ContractError(f"feature index {j} out of range [0, {data.p})")
    return gpfi(model, data, [j], cfg, loss)


def gopfi(model: Model, data: Dataset, G: Sequence[int], cfg: PermConfig = PermConfig(),
          loss: "str | Loss" = "mse") -> float:
    """Group-only permutation importance; the empty group scores 0."""
    G = _check_group(G, data.p, allow_empty=True)
    if not G:
        return 0.0
    pl = PermutedLosses(model, data, draw_permutations(data.n, cfg), loss)
    return float(pl.gopfi_reps(G).mean()) * _scale(G, cfg)


# ---------------------------------------------------------------------------
# reports


@dataclass
class GroupScore:
    mean: float
    sd: float
    folds: list[float]


@dataclass
class ImportanceReport:
    """Per-group scores of one method, with across-fold mean and sd.

    ``sd`` uses the n-1 denominator. For a direct (single-fit) estimate the
    spread is taken over permutation repetitions instead; ``meta["sd_over"]``
    says which.
    """

    method: str
    scores: dict[str, GroupScore]
    meta: dict = field(default_factory=dict)

    def __getitem__(self, group: str) -> GroupScore:
        return self.scores[group]

    def means(self) -> dict[str, float]:
        return {g: s.mean for g, s in self.scores.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "method", "mean", "sd"])
        for g, s in self.scores.items():
            w.writerow([g, self.method, repr(s.mean), repr(s.sd)])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        return {
            "method": self.method,
            "meta": self.meta,
            "groups": {g: {"mean": s.mean, "sd": s.sd, "folds": list(s.folds)}
                       for g, s in self.scores.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2, sort_keys=False)


def write_reports(reports: Sequence[ImportanceReport], csv_path=None, json_path=None) -> None:
    """Write several reports into one CSV and one JSON file."""
    if csv_path is not None:
        lines = [reports[0].to_csv().splitlines()[0]] if reports else ["group,method,mean,sd"]
        for r in reports:
            lines.extend(r.to_csv().splitlines()[1:])
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump([r.to_json_obj() for r in reports], fh, indent=2)
            fh.write("\n")


PERM_METHODS = ("gpfi", "gopfi")


def _group_scores(pl: PermutedLosses, groups: GroupSpec, method: str, cfg: PermConfig):
    for g in groups:
        G = list(groups[g])
        reps = pl.gpfi_reps(G) if method == "gpfi" else pl.gopfi_reps(G)
        yield g, reps * _scale(G, cfg)


def perm_importance(model: Model, data: Dataset, groups: GroupSpec, cfg: PermConfig = PermConfig(),
                    loss: "str | Loss" = "mse", methods: Sequence[str] = PERM_METHODS
                    ) -> dict[str, ImportanceReport]:
    """Direct estimate on one fitted model; one shared permutation set for all groups."""
    _check_methods(methods)
    loss = get_loss(loss)
    pl = PermutedLosses(model, data, draw_permutations(data.n, cfg), loss)
    out = {}
    for method in methods:
        scores = {}
        for g, reps in _group_scores(pl, groups, method, cfg):
            scores[g] = GroupScore(float(reps.mean()), fold_sd(reps), [float(reps.mean())])
        out[method] = ImportanceReport(method, scores, _meta(cfg, loss, "repetitions", len(pl.perms)))
    return out


def perm_importance_resampled(learner: Learner, data: Dataset, groups: GroupSpec,
                              plan: ResamplingPlan = ResamplingPlan(), cfg: PermConfig = PermConfig(),
                              loss: "str | Loss" = "mse", methods: Sequence[str] = PERM_METHODS,
                              splits=None, n_jobs: int = 1) -> dict[str, ImportanceReport]:
    """Fit on each train split and score the groups on the paired test split.

    Fold ``i`` uses permutation seed ``derive_seed(cfg.seed, "fold", i)``.
    ``splits`` overrides the splits generated from ``plan``.
    """
    _check_methods(methods)
    loss = get_loss(loss)
    splits = make_splits(plan, data.n) if splits is None else list(splits)

    def one(i):
        train, test = splits[i]
        if len(train) < 2:
            raise ContractError(f"split {i} has fewer than 2 training rows")
        model = learner.fit(data.rows(train), seed=fit_seed(plan, i))
        test_data = data.rows(test)
        fold_cfg = cfg.with_seed(fold_perm_seed(cfg.seed, i))
        pl = PermutedLosses(model, test_data, draw_permutations(test_data.n, fold_cfg), loss)
        return {method: {g: float(reps.mean()) for g, reps in _group_scores(pl, groups, method, cfg)}
                for method in methods}

    per_fold = parallel_map(one, range(len(splits)), n_jobs)
    out = {}
    for method in methods:
        scores = {}
        for g in groups:
            vals = [f[method][g] for f in per_fold]
            scores[g] = GroupScore(float(np.mean(vals)), fold_sd(vals), vals)
        out[method] = ImportanceReport(method, scores, _meta(cfg, loss, "folds", cfg.m, plan))
    return out


def fold_perm_seed(seed: int, i: int) -> int:
    return derive_seed(seed, "fold", i)


def _check_methods(methods):
    bad = [m for m in methods if m not in PERM_METHODS]
    if bad:
        raise ContractError(f"unknown permutation method(s) {bad}; choose from {PERM_METHODS}")


def _meta(cfg: PermConfig, loss: Loss, sd_over: str, m: int, plan: ResamplingPlan | None = None) -> dict:
    meta = {"m": m, "seed": cfg.seed, "loss": loss.name, "normalize": cfg.normalize,
            "exhaustive": cfg.exhaustive, "sd_over": sd_over}
    if plan is not None:
        meta["plan"] = {"kind": plan.kind, "k": plan.k, "train_fraction": plan.train_fraction,
                        "seed": plan.seed}
    return meta
