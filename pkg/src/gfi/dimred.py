"""Kernels, HSIC and sparse supervised PCA by penalized matrix decomposition.

The supervised components maximize the HSIC between the projected features
and a target kernel ``L``. Writing ``L = D D^T`` and ``Psi = D^T H X`` turns
this into a rank-one penalized decomposition of ``Psi``: maximize
``u^T Psi v`` subject to ``||u||_2 <= 1``, ``||v||_2 <= 1`` and
``||v||_1 <= c``. With the identity kernel the same machinery gives sparse
(unsupervised) PCA.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import ContractError, NumericError, derive_seed



# ---------------------------------------------------------------------------
# centering, kernels, HSIC


def centering_matrix_apply(M) -> np.ndarray:
    """Return ``H M`` with ``H = I - ee^T/n``, i.e. subtract column means."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] < 1:
        raise ContractError("need at least one row")
    return M - M.mean(axis=0, keepdims=True)


@dataclass(frozen=True)
class Kernel:
    """Kernel on target values.

    ``bandwidth`` is the denominator ``2 sigma^2`` of the RBF kernel;
    ``None`` selects the median of the pairwise squared distances.
    """

    kind: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "identity"):
            raise ContractError(f"unknown kernel {self.kind!r}; choose linear, rbf or identity")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ContractError(f"bandwidth must be > 0, got {self.bandwidth}")


def _as_rows(values) -> np.ndarray:
    Y = np.asarray(values, dtype=float)
    return Y.reshape(-1, 1) if Y.ndim == 1 else Y


def pairwise_sq_dists(Y: np.ndarray) -> np.ndarray:
    sq = np.sum(Y * Y, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * (Y @ Y.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    return D


def median_bandwidth(values) -> float:
    """Median of the squared distances over pairs i > j."""
    Y = _as_rows(values)
    if Y.shape[0] < 2:
        raise ContractError("the median heuristic needs at least 2 observations")
    D = pairwise_sq_dists(Y)
    return float(np.median(D[np.tril_indices(Y.shape[0], k=-1)]))


def gram(kernel: Kernel, values) -> np.ndarray:
    """Gram matrix of ``kernel`` on a vector (or row-matrix) of values."""
    Y = _as_rows(values)
    n = Y.shape[0]
    if kernel.kind == "identity":
        return np.eye(n)
    if kernel.kind == "linear":
        return Y @ Y.T
    bw = kernel.bandwidth
    if bw is None:
        bw = median_bandwidth(Y)
        if bw <= 0:
            raise NumericError("median pairwise distance is 0 (constant values); "
                               "set an explicit bandwidth")
    K = np.exp(-pairwise_sq_dists(Y) / bw)
    np.fill_diagonal(K, 1.0)
    return K


def empirical_hsic(K, L) -> float:
    """``tr(K H L H) / (n-1)^2``."""
    K = np.asarray(K, dtype=float)
    L = np.asarray(L, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
        raise ContractError(f"kernel matrices must be square and equal-sized, got {K.shape} and {L.shape}")
    n = K.shape[0]
    if n < 2:
        raise ContractError("HSIC needs at least 2 observations")
    Kc = centering_matrix_apply(centering_matrix_apply(K).T).T
    Lc = centering_matrix_apply(centering_matrix_apply(L).T).T
    # tr(HKH HLH) = tr(KHLH) because H is idempotent
    return float(np.sum(Kc * Lc.T) / (n - 1) ** 2)


class HsicTest(NamedTuple):
    statistic: float
    null: np.ndarray
    p_value: float


def hsic_permutation_test(K, L, n_perm: int = 500, seed: int = 0) -> HsicTest:
    """Permutation null of HSIC obtained by relabelling the rows of ``L``."""
    K = np.asarray(K, dtype=float)
    L = np.asarray(L, dtype=float)
    stat = empirical_hsic(K, L)
    n = K.shape[0]
    rng = np.random.default_rng(derive_seed(seed, "hsic-null"))
    Kc = centering_matrix_apply(centering_matrix_apply(K).T).T
    null = np.empty(n_perm)
    for b in range(n_perm):
        pi = rng.permutation(n)
        Lp = L[np.ix_(pi, pi)]
        null[b] = np.sum(Kc * Lp.T) / (n - 1) ** 2
    p = (1 + np.sum(null >= stat)) / (n_perm + 1)
    return HsicTest(stat, null, float(p))


# ---------------------------------------------------------------------------
# Psi construction


def decompose_L(L, tol: float = 1e-6) -> np.ndarray:
    """Return ``D`` with ``L = D D^T`` from the eigendecomposition of ``L``.

    Slightly negative eigenvalues from round-off are clipped to zero;
    clearly negative ones mean ``L`` is not a kernel matrix.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ContractError(f"L must be square, got shape {L.shape}")
    S = (L + L.T) / 2.0
    w, E = np.linalg.eigh(S)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    if w.min() < -tol * scale:
        raise ContractError(f"L has eigenvalue {w.min():.3g}; it is not positive semidefinite")
    w = np.clip(w, 0.0, None)
    return E * np.sqrt(w)[None, :]


def standardize(X, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column z-scores (population sd); constant columns keep scale 1."""
    X = np.asarray(X, dtype=float)
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd > eps, sd, 1.0)
    return (X - mean) / sd, mean, sd


def build_psi(X, L) -> np.ndarray:
    """``Psi = D^T H X`` for ``L = D D^T``."""
    X = np.asarray(X, dtype=float)
    L = np.asarray(L, dtype=float)
    if L.shape != (X.shape[0], X.shape[0]):
        raise ContractError(f"L is {L.shape} but X has {X.shape[0]} rows")
    return decompose_L(L).T @ centering_matrix_apply(X)


# ---------------------------------------------------------------------------
# penalized matrix decomposition


def soft_threshold(a: np.ndarray, theta: float) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - theta, 0.0)


def l1_constrained_direction(a: np.ndarray, c: float) -> tuple[np.ndarray, float]:
    """Unit vector maximizing ``a^T v`` subject to ``||v||_1 <= c``.

    The solution is a normalized soft-thresholding of ``a`` at the smallest
    threshold meeting the l1 budget. Between consecutive sorted magnitudes
    the l1/l2 ratio of the thresholded vector is a ratio of a linear and a
    square-root quadratic term in the threshold, so the threshold is found
    exactly by locating the active interval and solving a quadratic.
    """
    norm = np.linalg.norm(a)
    if norm == 0:
        return np.zeros_like(a), 0.0
    v = a / norm
    if np.sum(np.abs(v)) <= c:
        return v, 0.0
    b = np.sort(np.abs(a))[::-1]
    nxt = np.append(b[1:], 0.0)
    k = np.arange(1, b.size + 1)
    s1 = np.cumsum(b)
    s2 = np.cumsum(b * b)
    # l1/l2 ratio with k active entries at the interval's lower end nxt[k-1]
    l1 = s1 - k * nxt
    l2 = np.sqrt(np.maximum(s2 - 2 * nxt * s1 + k * nxt * nxt, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(l2 > 0, l1 / l2, 1.0)
    j = int(np.argmax(ratio >= c))
    kk, S1, S2 = float(k[j]), float(s1[j]), float(s2[j])
    c2 = c * c
    if kk - c2 <= 0:
        theta = float(nxt[j])
    else:
        # k (k - c^2) t^2 - 2 S1 (k - c^2) t + (S1^2 - c^2 S2) = 0, smaller root
        disc = S1 * S1 - kk * (S1 * S1 - c2 * S2) / (kk - c2)
        theta = (S1 - math.sqrt(max(disc, 0.0))) / kk
        theta = min(max(theta, float(nxt[j])), float(b[j]))
    s = soft_threshold(a, theta)
    return s / np.linalg.norm(s), theta


class PmdResult(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    d: float
    n_iter: int
    converged: bool
    objective: np.ndarray


def _project_out(x: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    if basis is None or basis.shape[1] == 0:
        return x
    return x - basis @ (basis.T @ x)


def _orient(u: np.ndarray, v: np.ndarray):
    """Flip so that the largest-magnitude entry of ``v`` is positive."""
    k = int(np.argmax(np.abs(v)))
    if v[k] < 0:
        return -u, -v
    return u, v


def pmd_rank1(Psi, c: float, prev_u: np.ndarray | None = None, tol: float = 1e-7,
              max_iter: int = 500, v0: np.ndarray | None = None) -> PmdResult:
    """One sparse component by alternating maximization of ``u^T Psi v``.

    ``u`` is kept orthogonal to the columns of ``prev_u``. The start value
    of ``v`` is the leading right singular vector (of the projected
    ``Psi``). Iterates until ``v`` moves less than ``tol`` in max-norm; not
    converging within ``max_iter`` only sets ``converged=False``.
    """
    Psi = np.asarray(Psi, dtype=float)
    if c < 1:
        raise ContractError(f"the l1 budget c must be >= 1, got {c}")
    if not np.any(Psi):
        raise ContractError("Psi is identically zero")
    P = _project_out(Psi, prev_u)
    if v0 is None:
        _, _, Vt = np.linalg.svd(P, full_matrices=False)
        v = Vt[0]
    else:
        v = np.asarray(v0, dtype=float) / np.linalg.norm(v0)
    v, _ = l1_constrained_direction(v, c)
    trace = []
    converged = False
    u = np.zeros(Psi.shape[0])
    it = 0
    for it in range(1, max_iter + 1):
        a = _project_out(Psi @ v, prev_u)
        na = np.linalg.norm(a)
        if na == 0:
            raise NumericError("component collapsed to zero; Psi has no remaining signal")
        u = a / na
        v_new, _ = l1_constrained_direction(Psi.T @ u, c)
        trace.append(float(u @ Psi @ v_new))
        delta = float(np.max(np.abs(v_new - v)))
        v = v_new
        if delta < tol:
            converged = True
            break
    u = _project_out(Psi @ v, prev_u)
    nu = np.linalg.norm(u)
    u = u / nu if nu > 0 else u
    u, v = _orient(u, v)
    return PmdResult(u, v, float(u @ Psi @ v), it, converged, np.array(trace))


def pmd(Psi, r: int, c: "float | Sequence[float]", tol: float = 1e-7, max_iter: int = 500
        ) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[PmdResult]]:
    """Rank-``r`` PMD with deflation and orthogonal ``u``'s; returns (U, d, V, fits)."""
    Psi = np.asarray(Psi, dtype=float)
    cs = [float(c)] * r if np.isscalar(c) else [float(x) for x in c]
    U = np.zeros((Psi.shape[0], 0))
    V = np.zeros((Psi.shape[1], 0))
    d = []
    fits = []
    R = Psi.copy()
    for k in range(r):
        fit = pmd_rank1(R, cs[k], prev_u=U, tol=tol, max_iter=max_iter)
        U = np.column_stack([U, fit.u])
        V = np.column_stack([V, fit.v])
        d.append(fit.d)
        fits.append(fit)
        R = R - fit.d * np.outer(fit.u, fit.v)
    return U, np.array(d), V, fits


def default_c_grid(p: int) -> list[float]:
    grid = [1.0, 1.5, 2.0, 3.0, 5.0, math.sqrt(p)]
    return [c for c in grid if c <= math.sqrt(p) + 1e-12] or [1.0]


def choose_c_cv(Psi, candidates: Sequence[float] | None = None, r: int = 1, mask_fraction: float = 0.1,
                seed: int = 0, prev_u: np.ndarray | None = None) -> tuple[float, dict[float, float]]:
    """Pick the l1 budget by held-out reconstruction error.

    A random ``mask_fraction`` of the entries of ``Psi`` is zeroed (so it
    drops out of every inner product), the decomposition is fitted on the
    rest, and candidates are scored by the mean squared error of the
    rank-``r`` reconstruction on the masked entries. Ties go to the smaller
    c, and among equal candidates to the first one listed.
    """
    Psi = np.asarray(Psi, dtype=float)
    if candidates is None:
        candidates = default_c_grid(Psi.shape[1])
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ContractError("need at least one candidate c")
    if len(candidates) == 1:
        return candidates[0], {}
    rng = np.random.default_rng(derive_seed(seed, "c-mask"))
    mask = rng.random(Psi.shape) < mask_fraction
    if not mask.any():
        mask.flat[rng.integers(mask.size)] = True
    train = np.where(mask, 0.0, Psi)
    scores: dict[float, float] = {}
    for c in candidates:
        if c in scores:
            continue
        R = train.copy()
        U = prev_u
        recon = np.zeros_like(Psi)
        for _ in range(r):
            fit = pmd_rank1(R, c, prev_u=U)
            part = fit.d * np.outer(fit.u, fit.v)
            recon += part
            R = R - part
            U = fit.u[:, None] if U is None else np.column_stack([U, fit.u])
        scores[c] = float(np.mean((recon[mask] - Psi[mask]) ** 2))
    best = min(range(len(candidates)), key=lambda i: (scores[candidates[i]], candidates[i], i))
    return candidates[best], scores


# ---------------------------------------------------------------------------
# sparse (supervised) PCA


@dataclass
class SpcaResult:
    """Sparse loadings and related quantities.

    ``loadings`` is p x r on the standardized feature scale; ``center`` and
    ``scale`` map raw features to that scale. ``hsic`` is the empirical HSIC
    between each projection and the target kernel.
    """

    loadings: np.ndarray
    singular_values: np.ndarray
    projections: np.ndarray
    hsic: np.ndarray
    c: list[float]
    converged: list[bool]
    center: np.ndarray
    scale: np.ndarray
    kernel: Kernel
    U: np.ndarray
    feature_names: list[str] | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def r(self) -> int:
        return self.loadings.shape[1]

    def project(self, X) -> np.ndarray:
        return ((np.asarray(X, dtype=float) - self.center) / self.scale) @ self.loadings

    def loadings_csv(self) -> str:
        names = self.feature_names or [f"f{j}" for j in range(self.loadings.shape[0])]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["component", "feature_name", "loading"])
        for k in range(self.r):
            for j, name in enumerate(names):
                if self.loadings[j, k] != 0:
                    w.writerow([k + 1, name, repr(float(self.loadings[j, k]))])
        return buf.getvalue()


def sparse_spca(X, target, kernel: Kernel = Kernel(), r: int = 1, c: "float | str" = "cv",
                candidates: Sequence[float] | None = None, seed: int = 0, do_standardize: bool = True,
                feature_names: Sequence[str] | None = None, tol: float = 1e-7, max_iter: int = 500
                ) -> SpcaResult:
    """Sparse supervised PCA; ``kernel.kind == "identity"`` gives sparse PCA.

    With ``c="cv"`` the budget of each component is chosen by
    :func:`choose_c_cv` on the deflated matrix.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= r <= min(n, p):
        raise ContractError(f"rank r must be in [1, {min(n, p)}], got {r}")
    if do_standardize:
        Xs, center, scale = standardize(X)
    else:
        center, scale = np.zeros(p), np.ones(p)
        Xs = X
    if kernel.kind == "identity":
        L = np.eye(n)
        Psi = centering_matrix_apply(Xs)
    else:
        L = gram(kernel, target)
        Psi = build_psi(Xs, L)
    U = np.zeros((Psi.shape[0], 0))
    V = np.zeros((p, 0))
    d, cs, conv, notes = [], [], [], []
    R = Psi.copy()
    for k in range(r):
        if c == "cv":
            ck, _ = choose_c_cv(R, candidates, seed=derive_seed(seed, "component", k), prev_u=U)
        else:
            ck = float(c)
        fit = pmd_rank1(R, ck, prev_u=U, tol=tol, max_iter=max_iter)
        if not fit.converged:
            notes.append(f"component {k + 1}: no convergence after {max_iter} iterations")
        U = np.column_stack([U, fit.u])
        V = np.column_stack([V, fit.v])
        d.append(fit.d)
        cs.append(ck)
        conv.append(fit.converged)
        R = R - fit.d * np.outer(fit.u, fit.v)
    if r > 1:
        G = U.T @ U - np.eye(r)
        worst = float(np.max(np.abs(G)))
        if worst > 1e-6:
            notes.append(f"u-orthogonality residual {worst:.2e}")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    proj = Xs @ V
    hsic = np.array([empirical_hsic(np.outer(proj[:, k], proj[:, k]), L) for k in range(r)])
    return SpcaResult(V, np.array(d), proj, hsic, cs, conv, center, scale, kernel, U,
                      list(feature_names) if feature_names is not None else None, notes)


def pca(X, do_standardize: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Dense PCA: (rotation p x p, scores, center, scale).

    Each rotation column is oriented so its largest-magnitude entry is
    positive.
    """
    X = np.asarray(X, dtype=float)
    if do_standardize:
        Xs, center, scale = standardize(X)
    else:
        center = X.mean(axis=0)
        scale = np.ones(X.shape[1])
        Xs = X - center
    _, _, Vt = np.linalg.svd(Xs, full_matrices=True)
    R = Vt.T.copy()
    for k in range(R.shape[1]):
        j = int(np.argmax(np.abs(R[:, k])))
        if R[j, k] < 0:
            R[:, k] = -R[:, k]
    return R, Xs @ R, center, scale
