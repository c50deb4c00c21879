"""Greedy forward selection of feature groups by leave-one-group-in importance.

For every outer split the selection starts from the empty set and adds, at
each step, the group whose union with the current selection has the highest
LOGI on an inner resampling of the outer training data. A step is accepted
only when it improves LOGI by more than ``delta``.
"""

from __future__ import annotations

import csv
import html
import io
import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (ContractError, Dataset, GroupSpec, Learner, Loss, ResamplingPlan,
                   derive_seed, estimate_ge, get_loss, make_splits, parallel_map)
from .learners import ForestLearner, NullLearner
from .refit import RefitConfig, RefitEvaluator

PATH_SEP = " > "


@dataclass(frozen=True)
class SequentialConfig:
    """Settings of the sequential procedure.

    Parameters
    ----------
    delta : float
        Minimum LOGI improvement for a step to be accepted.
    outer_repetitions, outer_train_fraction :
        Outer repeated subsampling.
    inner_k : int
        Folds of the inner cross-validation used to score candidates.
    seed : int
        Master seed; outer and inner splits and learner seeds derive from it.
    """

    delta: float = 0.001
    outer_repetitions: int = 100
    outer_train_fraction: float = 0.8
    inner_k: int = 10
    seed: int = 0
    learner: Learner = field(default_factory=ForestLearner)
    loss: "str | Loss" = "mse"

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractError(f"delta must be > 0, got {self.delta}")
        if self.outer_repetitions < 1:
            raise ContractError("need at least one outer repetition")
        if self.inner_k < 2:
            raise ContractError(f"inner_k must be >= 2, got {self.inner_k}")

    @property
    def outer_plan(self) -> ResamplingPlan:
        return ResamplingPlan.subsampling(self.outer_repetitions, self.outer_train_fraction,
                                          derive_seed(self.seed, "outer"))

    def inner_plan(self, rep: int) -> ResamplingPlan:
        return ResamplingPlan.kfold(self.inner_k, derive_seed(self.seed, "inner", rep))


class Step(NamedTuple):
    group: str
    selected: tuple[str, ...]
    logi: float
    #: generalization error of the selected set, fitted on the outer training
    #: split and scored on the outer test split
    ge: float
    #: the same quantity estimated by the inner cross-validation
    inner_ge: float


@dataclass
class SplitResult:
    steps: list[Step]
    #: LOGI of every candidate evaluated, per step (name tuple -> score)
    candidates: list[dict[tuple[str, ...], float]]
    null_ge: float

    @property
    def path(self) -> tuple[str, ...]:
        return tuple(s.group for s in self.steps)


@dataclass
class SequentialResult:
    splits: list[SplitResult]
    delta: float
    meta: dict = field(default_factory=dict)

    def first_picks(self) -> list[str | None]:
        return [s.steps[0].group if s.steps else None for s in self.splits]


def candidate_sets(names: Sequence[str], selected: Sequence[str], size: int) -> list[tuple[str, ...]]:
    """All group combinations of the given size that contain ``selected``.

    Combinations are returned as name tuples in the order of ``names``.
    """
    chosen = set(selected)
    rest = [g for g in names if g not in chosen]
    extra = size - len(chosen)
    if extra < 0:
        return []
    out = []
    for add in itertools.combinations(rest, extra):
        s = chosen | set(add)
        out.append(tuple(g for g in names if g in s))
    return out


def _select_one(cfg: SequentialConfig, data: Dataset, groups: GroupSpec, rep: int,
                train: np.ndarray, test: np.ndarray) -> SplitResult:
    outer_train, outer_test = data.rows(train), data.rows(test)
    inner_plan = cfg.inner_plan(rep)
    if outer_train.n < 2 * inner_plan.k:
        raise ContractError(f"outer training split of {outer_train.n} rows is too small for "
                            f"{inner_plan.k}-fold inner resampling")
    ev = RefitEvaluator(RefitConfig(inner_plan, cfg.learner, cfg.loss), outer_train)
    loss = get_loss(cfg.loss)
    null_inner = float(ev.ge(()).mean())
    names = groups.names
    fit_seed = derive_seed(cfg.seed, "outer-fit", rep)
    null_outer = estimate_ge(NullLearner().fit(outer_train), outer_test, loss)

    steps: list[Step] = []
    cands_log: list[dict] = []
    selected: tuple[str, ...] = ()
    last = None
    for size in range(1, len(names) + 1):
        cands = candidate_sets(names, selected, size)
        if not cands:
            break
        scores = {c: float(ev.logi_folds(groups.union(c)).mean()) for c in cands}
        cands_log.append(scores)
        # highest score wins; ties go to the lexicographically smallest name tuple
        best = min(cands, key=lambda c: (-scores[c], sorted(c)))
        gain = scores[best] if last is None else scores[best] - last
        if not gain > cfg.delta:
            break
        added = next(g for g in best if g not in selected)
        cols = sorted(groups.union(best))
        model = cfg.learner.fit(outer_train.columns(cols), seed=fit_seed)
        ge = estimate_ge(model, outer_test.columns(cols), loss)
        steps.append(Step(added, best, scores[best], ge, null_inner - scores[best]))
        selected, last = best, scores[best]
    return SplitResult(steps, cands_log, null_outer)


def sequential_select(cfg: SequentialConfig, data: Dataset, groups: GroupSpec,
                      n_jobs: int = 1) -> SequentialResult:
    """Run the greedy selection on every outer split."""
    if len(groups) < 1:
        raise ContractError("need at least one group")
    splits = make_splits(cfg.outer_plan, data.n)
    results = parallel_map(lambda r: _select_one(cfg, data, groups, r, *splits[r]),
                           range(len(splits)), n_jobs)
    return SequentialResult(results, cfg.delta, {
        "outer_repetitions": cfg.outer_repetitions, "outer_train_fraction": cfg.outer_train_fraction,
        "inner_k": cfg.inner_k, "seed": cfg.seed, "loss": get_loss(cfg.loss).name,
        "learner": getattr(cfg.learner, "name", type(cfg.learner).__name__)})


# ---------------------------------------------------------------------------
# alluvial flows


class FlowRow(NamedTuple):
    step: int
    path: tuple[str, ...]
    count: int
    mean_ge: float


def aggregate_alluvial(result: SequentialResult, min_count: int = 1) -> list[FlowRow]:
    """Count how many splits share each path prefix, step by step.

    ``path`` lists the groups in the order they were added. Prefixes seen in
    fewer than ``min_count`` splits are dropped. Rows are sorted by step,
    then by descending count, then by path.
    """
    if not result.splits:
        raise ContractError("empty sequential result")
    acc: dict[tuple[str, ...], list[float]] = {}
    for split in result.splits:
        for i, step in enumerate(split.steps):
            acc.setdefault(split.path[:i + 1], []).append(step.ge)
    rows = [FlowRow(len(p), p, len(v), float(np.mean(v))) for p, v in acc.items() if len(v) >= min_count]
    rows.sort(key=lambda r: (r.step, -r.count, r.path))
    return rows


def flows_to_csv(rows: Sequence[FlowRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "path", "count", "mean_ge"])
    for r in rows:
        w.writerow([r.step, PATH_SEP.join(r.path), r.count, repr(r.mean_ge)])
    return buf.getvalue()


def render_alluvial_svg(rows: Sequence[FlowRow], path=None, total: int | None = None,
                        width: int = 720, height: int = 420) -> str:
    """Static SVG of the flows; columns are steps, node heights are counts.

    ``total`` is the number of outer splits (full column height); it
    defaults to the largest step-1 count. Returns the SVG text and writes it
    to ``path`` when given.
    """
    margin, node_w, gap = 40, 18, 8
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    if not rows:
        out.append(f'<text x="{width // 2}" y="{height // 2}" text-anchor="middle">no selections</text>')
    else:
        n_steps = max(r.step for r in rows)
        if total is None:
            total = max(sum(r.count for r in rows if r.step == 1), 1)
        by_step = {s: [r for r in rows if r.step == s] for s in range(1, n_steps + 1)}
        max_nodes = max(len(v) for v in by_step.values())
        usable = height - 2 * margin - gap * (max_nodes - 1)
        scale = usable / total
        xstep = (width - 2 * margin - node_w - 150) / max(n_steps - 1, 1)
        pos: dict[tuple[str, ...], tuple[float, float, float]] = {}
        for s, nodes in by_step.items():
            x = margin + (s - 1) * xstep
            y = float(margin)
            for r in nodes:
                h = r.count * scale
                pos[r.path] = (x, y, h)
                y += h + gap
        # streams from each prefix to its extensions, stacked at the parent's top
        used: dict[tuple[str, ...], float] = {}
        for s in range(2, n_steps + 1):
            for r in by_step[s]:
                parent = r.path[:-1]
                if parent not in pos:
                    continue
                px, py, _ = pos[parent]
                cx, cy, ch = pos[r.path]
                off = used.get(parent, 0.0)
                used[parent] = off + ch
                x0, x1 = px + node_w, cx
                xm = (x0 + x1) / 2
                y0a, y0b = py + off, py + off + ch
                out.append(
                    f'<path d="M{x0:.2f},{y0a:.2f} C{xm:.2f},{y0a:.2f} {xm:.2f},{cy:.2f} {x1:.2f},{cy:.2f} '
                    f'L{x1:.2f},{cy + ch:.2f} C{xm:.2f},{cy + ch:.2f} {xm:.2f},{y0b:.2f} {x0:.2f},{y0b:.2f} Z" '
                    f'fill="#8fa8c8" fill-opacity="0.5" stroke="none"/>')
        for r in rows:
            x, y, h = pos[r.path]
            label = html.escape(f"{r.path[-1]} (n={r.count}, GE={r.mean_ge:.3f})")
            out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{node_w}" height="{h:.2f}" fill="#2f4b7c"/>')
            out.append(f'<text x="{x + node_w + 4:.2f}" y="{y + h / 2 + 4:.2f}">{label}</text>')
        for s in range(1, n_steps + 1):
            x = margin + (s - 1) * xstep
            out.append(f'<text x="{x:.2f}" y="{margin - 12}">step {s}</text>')
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg
