"""Combined features effect plots, the totalvis baseline, and trend summaries.

For observation ``i`` the effect plot uses the mean prediction over a copy
of the data in which every row's group columns are overwritten with row
``i``'s values. The x-coordinate is a linear projection of row ``i``'s group
values, typically with sparse (supervised) PCA loadings.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import ContractError, Dataset, Model, NumericError, check_width, derive_seed, predict_checked
from .dimred import SpcaResult, pca

DEFAULT_REPLACE_CAP = 2000
GRID_SIZE = 50
#: rows per predict call when stacking several replaced copies
BATCH_ROWS = 200_000


@dataclass
class CfepData:
    """One point per observation: projection value ``x`` and mean prediction ``y``."""

    x: np.ndarray
    y: np.ndarray
    group: str = ""
    component: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ContractError("x and y must be equal-length vectors")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise NumericError("effect-plot coordinates must be finite")

    @property
    def n(self) -> int:
        return len(self.x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["obs_id", "x", "y"])
        for i, (a, b) in enumerate(zip(self.x, self.y)):
            w.writerow([i, repr(float(a)), repr(float(b))])
        return buf.getvalue()


def replaced_mean_predictions(model: Model, data: Dataset, G: Sequence[int], cap: int | None = DEFAULT_REPLACE_CAP,
                              seed: int = 0) -> np.ndarray:
    """Mean prediction for each observation's group values pasted into all rows.

    When ``n`` exceeds ``cap`` the background rows are a fixed random
    subsample of size ``cap`` (an approximation); otherwise all ``n`` rows
    are used and the model sees exactly ``n`` batches of ``n`` rows.
    """
    G = sorted(set(int(j) for j in G))
    if not G:
        raise ContractError("group must be non-empty")
    if G[0] < 0 or G[-1] >= data.p:
        raise ContractError(f"group index out of range [0, {data.p})")
    check_width(model, data.p)
    X = data.features
    n = data.n
    if cap is not None and n > cap:
        rng = np.random.default_rng(derive_seed(seed, "cfep-background"))
        background = X[np.sort(rng.choice(n, size=cap, replace=False))]
    else:
        background = X
    nb = background.shape[0]
    per_call = max(1, BATCH_ROWS // nb)
    out = np.empty(n)
    for i0 in range(0, n, per_call):
        i1 = min(n, i0 + per_call)
        block = np.tile(background, (i1 - i0, 1))
        for r, i in enumerate(range(i0, i1)):
            block[r * nb:(r + 1) * nb, G] = X[i, G]
        pred = predict_checked(model, block)
        # correctly rounded sums: the mean does not depend on row order or batching
        out[i0:i1] = [math.fsum(row) / nb for row in pred.reshape(i1 - i0, nb)]
    return out


def compute_cfep(model: Model, data: Dataset, G: Sequence[int], loadings, center=None, scale=None,
                 group: str = "", component: int = 1, cap: int | None = DEFAULT_REPLACE_CAP,
                 seed: int = 0, y_rep: np.ndarray | None = None) -> CfepData:
    """Effect-plot points for group ``G`` with projection weights ``loadings``.

    ``loadings`` has one weight per member of ``G`` (in sorted index order).
    The projection uses raw feature values unless ``center``/``scale``
    (per member) are given. ``y_rep`` may pass precomputed replaced means,
    which are shared by all components of a group.
    """
    G = sorted(set(int(j) for j in G))
    if not G:
        raise ContractError("group must be non-empty")
    w = np.asarray(loadings, dtype=float).reshape(-1)
    if w.shape[0] != len(G):
        raise ContractError(f"{w.shape[0]} loadings for a group of {len(G)} features")
    XG = data.features[:, G]
    if center is not None:
        XG = XG - np.asarray(center, dtype=float)
    if scale is not None:
        XG = XG / np.asarray(scale, dtype=float)
    x = XG @ w
    if y_rep is None:
        y_rep = replaced_mean_predictions(model, data, G, cap=cap, seed=seed)
    return CfepData(x, y_rep, group, component, {"n_background": min(data.n, cap or data.n)})


def cfep_from_spca(model: Model, data: Dataset, G: Sequence[int], spca: SpcaResult, components=None,
                   group: str = "", cap: int | None = DEFAULT_REPLACE_CAP, seed: int = 0,
                   align: Sequence[float] | None = None) -> list[CfepData]:
    """Effect plots for each sparse component fitted on the columns ``G``.

    The replaced-mean predictions are computed once and reused for every
    component. ``align`` (one sign per component, optional) flips components.
    """
    G = sorted(set(int(j) for j in G))
    if spca.loadings.shape[0] != len(G):
        raise ContractError("loadings do not match the group size")
    comps = range(spca.r) if components is None else components
    y_rep = replaced_mean_predictions(model, data, G, cap=cap, seed=seed)
    out = []
    for k in comps:
        sign = 1.0 if align is None else float(np.sign(align[k]) or 1.0)
        out.append(compute_cfep(model, data, G, sign * spca.loadings[:, k], spca.center, spca.scale,
                                group, k + 1, cap, seed, y_rep))
    return out


# ---------------------------------------------------------------------------
# totalvis


@dataclass
class EffectCurve:
    grid: np.ndarray
    values: np.ndarray
    component: int


def totalvis(model: Model, data: Dataset, pc_index: int = 1, grid_size: int = GRID_SIZE,
             do_standardize: bool = True) -> EffectCurve:
    """Mean prediction as one principal-component score is pinned to grid values.

    Features are standardized before PCA. For each grid value every row's
    ``pc_index``-th score (1-based) is set to it, the scores are rotated back
    to feature space and un-standardized, and the predictions are averaged.
    """
    if grid_size < 2:
        raise ContractError(f"grid_size must be >= 2, got {grid_size}")
    if not 1 <= pc_index <= data.p:
        raise ContractError(f"pc_index must be in [1, {data.p}], got {pc_index}")
    check_width(model, data.p)
    R, scores, center, scale = pca(data.features, do_standardize)
    k = pc_index - 1
    grid = np.linspace(scores[:, k].min(), scores[:, k].max(), grid_size)
    values = np.empty(grid_size)
    for g, val in enumerate(grid):
        S = scores.copy()
        S[:, k] = val
        Xb = (S @ R.T) * scale + center
        values[g] = predict_checked(model, Xb).mean()
    return EffectCurve(grid, values, pc_index)


# ---------------------------------------------------------------------------
# trends


@dataclass
class TrendFit:
    """Least-squares polynomial on the effect-plot points, evaluated on a grid.

    ``coefficients`` are in increasing order of power.
    """

    degree: int
    coefficients: np.ndarray
    grid: np.ndarray
    fitted: np.ndarray

    @property
    def slope(self) -> float:
        return float(self.coefficients[1])

    @property
    def curvature(self) -> float:
        if self.degree < 2:
            raise ContractError("a linear trend has no curvature term")
        return float(self.coefficients[2])

    def to_json_obj(self) -> dict:
        return {"degree": self.degree, "coefficients": self.coefficients.tolist(),
                "grid": self.grid.tolist(), "fitted": self.fitted.tolist()}


def fit_trend(points: "CfepData | EffectCurve", degree: int = 1, grid_size: int = GRID_SIZE,
              grid: np.ndarray | None = None) -> TrendFit:
    """Fit a degree-1 or degree-2 polynomial and evaluate it on an equidistant grid.

    The default grid spans the range of x; pass ``grid`` to evaluate on a
    predefined grid (for averaging across runs).
    """
    if degree not in (1, 2):
        raise ContractError(f"degree must be 1 or 2, got {degree}")
    if isinstance(points, EffectCurve):
        x, y = points.grid, points.values
    else:
        x, y = points.x, points.y
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < degree + 2:
        raise ContractError(f"need at least {degree + 2} points for a degree-{degree} trend")
    if np.ptp(x) == 0:
        raise NumericError("all x values are equal; the trend is undefined")
    A = np.vander(x, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if grid is None:
        grid = np.linspace(x.min(), x.max(), grid_size)
    grid = np.asarray(grid, dtype=float)
    fitted = np.vander(grid, degree + 1, increasing=True) @ coef
    if not np.all(np.isfinite(fitted)):
        raise NumericError("non-finite trend values")
    return TrendFit(degree, coef, grid, fitted)


class TrendBand(NamedTuple):
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def aggregate_trends(trends: Sequence[TrendFit], z: float = 1.96) -> TrendBand:
    """Pointwise mean of several trends with a mean +/- z*sd band (sd with n-1)."""
    if not trends:
        raise ContractError("no trends to aggregate")
    grid = trends[0].grid
    for t in trends[1:]:
        if t.grid.shape != grid.shape or not np.array_equal(t.grid, grid):
            raise ContractError("trends must share one evaluation grid")
    F = np.stack([t.fitted for t in trends])
    mean = F.mean(axis=0)
    sd = F.std(axis=0, ddof=1) if len(trends) > 1 else np.zeros_like(mean)
    return TrendBand(grid, mean, mean - z * sd, mean + z * sd)


# ---------------------------------------------------------------------------
# rendering


def render_cfep_svg(cfep: CfepData, trend: TrendFit | None = None, path=None,
                    width: int = 480, height: int = 360) -> str:
    """Scatter of the effect-plot points with an optional trend polyline."""
    m = 40
    x, y = cfep.x, cfep.y
    ys = y if trend is None else np.concatenate([y, trend.fitted])
    xs = x if trend is None else np.concatenate([x, trend.grid])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    px = m + (x - x0) / (x1 - x0) * (width - 2 * m)
    py = height - m - (y - y0) / (y1 - y0) * (height - 2 * m)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
             f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
             f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle">'
             f'projection {cfep.group} PC{cfep.component}</text>',
             f'<text x="12" y="{height / 2:.1f}" transform="rotate(-90 12 {height / 2:.1f})" '
             f'text-anchor="middle">mean prediction</text>',
             '<g fill="#2f4b7c" fill-opacity="0.5">']
    parts.append("".join(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2"/>' for a, b in zip(px, py)))
    parts.append("</g>")
    if trend is not None:
        tx = m + (trend.grid - x0) / (x1 - x0) * (width - 2 * m)
        ty = height - m - (trend.fitted - y0) / (y1 - y0) * (height - 2 * m)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(tx, ty))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    parts.append("</svg>")
    svg = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg


def trend_json(trend: TrendFit) -> str:
    return json.dumps(trend.to_json_obj(), indent=2)
