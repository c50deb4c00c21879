"""Synthetic designs with known group structure.

Every generator is a pure function of its arguments. Features are named
``x1, x2, ...`` (1-based) and returned together with a :class:`GroupSpec`
and a dict of ground-truth quantities.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .core import ContractError, Dataset, GroupSpec, derive_seed

SCENARIOS = ("dependent-groups", "within-corr", "group-size", "one-factor", "two-factor")


class Simulation(NamedTuple):
    data: Dataset
    groups: GroupSpec
    truth: dict


def _names(p: int) -> list[str]:
    return [f"x{j + 1}" for j in range(p)]


def _rng(scenario: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, "simgen", scenario))


def _check_n(n: int, minimum: int) -> None:
    if n < minimum:
        raise ContractError(f"n must be >= {minimum}, got {n}")


def _check_fraction(f: float) -> None:
    if not 0.0 <= f <= 1.0:
        raise ContractError(f"alter fraction must be in [0, 1], got {f}")


def _alter_rows(rng, n: int, fraction: float) -> np.ndarray:
    """Uniformly chosen row subset of size round(fraction * n)."""
    k = int(round(fraction * n))
    return rng.choice(n, size=k, replace=False)


def mixed_block(rng, prototype: np.ndarray, fractions: Sequence[float], weight: float = 0.2) -> np.ndarray:
    """Features equal to ``prototype`` except on an altered row subset.

    On the altered rows (chosen independently per feature) the value becomes
    ``weight * prototype + (1 - weight) * W`` with fresh standard normal ``W``.
    """
    n = prototype.shape[0]
    out = np.empty((n, len(fractions)))
    for j, f in enumerate(fractions):
        _check_fraction(f)
        col = prototype.copy()
        rows = _alter_rows(rng, n, f)
        col[rows] = weight * prototype[rows] + (1.0 - weight) * rng.standard_normal(rows.size)
        out[:, j] = col
    return out


def gen_dependent_groups(n: int = 1000, seed: int = 0, alter: float = 0.1, alter_sd: float = 0.5,
                         copy_sd: float = 0.01, noise_sd: float = 0.1) -> Simulation:
    """Three groups of ten features; the first two are near-copies.

    ``G1`` is built from a prototype ``U`` by adding N(0, alter_sd) noise on
    an ``alter`` share of rows (per feature). ``G2`` copies ``G1`` plus
    N(0, copy_sd) noise. ``G3`` is built like ``G1`` from an independent
    prototype ``V``. ``y = 2U + V + N(0, noise_sd)``.
    """
    _check_n(n, 10)
    _check_fraction(alter)
    rng = _rng("dependent-groups", seed)
    U = rng.standard_normal(n)
    V = rng.standard_normal(n)

    def perturbed(proto):
        cols = np.tile(proto[:, None], (1, 10))
        for j in range(10):
            rows = _alter_rows(rng, n, alter)
            cols[rows, j] += rng.normal(0.0, alter_sd, rows.size)
        return cols

    G1 = perturbed(U)
    G2 = G1 + rng.normal(0.0, copy_sd, G1.shape)
    G3 = perturbed(V)
    X = np.hstack([G1, G2, G3])
    y = 2.0 * U + V + rng.normal(0.0, noise_sd, n)
    names = _names(30)
    groups = GroupSpec({"G1": range(0, 10), "G2": range(10, 20), "G3": range(20, 30)}, 30)
    return Simulation(Dataset(X, names, y), groups, {"U": U, "V": V})


def gen_within_corr(n: int = 1000, seed: int = 0, alter: Sequence[float] = (0.1, 0.1, 0.1, 0.1),
                    noise_sd: float = 1.0) -> Simulation:
    """Four independent groups of ten features with group-specific correlation.

    Each group mixes its own prototype on an ``alter[j]`` share of rows.
    ``Z_j = 3 x_{j,3}^2 - 4 x_{j,5} - 6 x_{j,7} + 5 x_{j,9} d_j`` with
    ``d_j = 1{mean(x_{j,8}) > 0}`` for the first three groups, and
    ``y = Z_1 + Z_2 + Z_3 + eps``. The fourth group does not enter ``y``.
    """
    _check_n(n, 10)
    alter = list(alter)
    if len(alter) != 4:
        raise ContractError(f"alter needs 4 fractions, got {len(alter)}")
    rng = _rng("within-corr", seed)
    blocks = [mixed_block(rng, rng.standard_normal(n), [a] * 10) for a in alter]
    X = np.hstack(blocks)
    Z = []
    d = []
    for j in range(3):
        B = blocks[j]
        dj = float(np.mean(B[:, 7]) > 0)
        d.append(dj)
        Z.append(3.0 * B[:, 2] ** 2 - 4.0 * B[:, 4] - 6.0 * B[:, 6] + 5.0 * B[:, 8] * dj)
    y = np.sum(Z, axis=0) + rng.normal(0.0, noise_sd, n)
    groups = GroupSpec({f"G{j + 1}": range(10 * j, 10 * j + 10) for j in range(4)}, 40)
    return Simulation(Dataset(X, _names(40), y), groups, {"Z": np.array(Z), "d": d})


def gen_group_size(n: int = 2000, seed: int = 0, noise_sd: float = 1.0) -> Simulation:
    """Eight uniform features; ``G1 = x1..x6``, ``G2 = x7, x8``; ``y = 2x1 + 2x3 + 2x7 + eps``."""
    _check_n(n, 10)
    rng = _rng("group-size", seed)
    X = rng.uniform(0.0, 1.0, (n, 8))
    y = 2.0 * X[:, 0] + 2.0 * X[:, 2] + 2.0 * X[:, 6] + rng.normal(0.0, noise_sd, n)
    groups = GroupSpec({"G1": range(0, 6), "G2": range(6, 8)}, 8)
    coef = np.zeros(8)
    coef[[0, 2, 6]] = 2.0
    return Simulation(Dataset(X, _names(8), y), groups, {"coef": coef})


ONE_FACTOR_LOADINGS = {5: 1.0, 8: -2.0, 25: -4.0, 47: 8.0, 49: 4.0}
TWO_FACTOR_Z1 = {3: 3.0, 8: -2.0, 13: -4.0, 18: 8.0}
TWO_FACTOR_Z2 = {25: 2.0, 35: 4.0}


def _loading_vector(p: int, spec: dict[int, float]) -> np.ndarray:
    w = np.zeros(p)
    for j, v in spec.items():
        w[j - 1] = v
    return w


def gen_one_factor(n: int = 500, seed: int = 0, fractions: Sequence[float] = (0.2, 0.4, 0.6, 0.8, 1.0),
                   noise_sd: float = 1.0) -> Simulation:
    """Fifty features in five blocks of ten with decreasing correlation.

    Block ``b`` mixes one shared prototype on a ``fractions[b]`` share of
    rows. ``Z = x5 - 2x8 - 4x25 + 8x47 + 4x49`` and ``y = Z + eps``.
    """
    _check_n(n, 50)
    rng = _rng("one-factor", seed)
    U = rng.standard_normal(n)
    X = mixed_block(rng, U, [f for f in fractions for _ in range(10)])
    w = _loading_vector(50, ONE_FACTOR_LOADINGS)
    Z = X @ w
    y = Z + rng.normal(0.0, noise_sd, n)
    groups = GroupSpec({"all": range(50)}, 50)
    return Simulation(Dataset(X, _names(50), y), groups, {"Z": Z, "loadings": w})


def gen_two_factor(n: int = 500, seed: int = 0, set1: Sequence[float] = (0.15, 0.35),
                   set2: Sequence[float] = (0.55, 0.85), noise_sd: float = 1.0) -> Simulation:
    """Two independent sets of twenty features, each built from its own prototype.

    Within a set the first ten features use the first alter fraction and
    the last ten the second. ``Z1 = 3x3 - 2x8 - 4x13 + 8x18``,
    ``Z2 = 2x25 + 4x35`` and ``y = Z1 + Z2^2 + eps``.
    """
    _check_n(n, 50)
    rng = _rng("two-factor", seed)
    A = mixed_block(rng, rng.standard_normal(n), [set1[0]] * 10 + [set1[1]] * 10)
    B = mixed_block(rng, rng.standard_normal(n), [set2[0]] * 10 + [set2[1]] * 10)
    X = np.hstack([A, B])
    w1 = _loading_vector(40, TWO_FACTOR_Z1)
    w2 = _loading_vector(40, TWO_FACTOR_Z2)
    Z1, Z2 = X @ w1, X @ w2
    y = Z1 + Z2 ** 2 + rng.normal(0.0, noise_sd, n)
    groups = GroupSpec({"set1": range(20), "set2": range(20, 40)}, 40)
    return Simulation(Dataset(X, _names(40), y), groups,
                      {"Z1": Z1, "Z2": Z2, "loadings_Z1": w1, "loadings_Z2": w2})


def simulate(scenario: str, n: int | None = None, seed: int = 0, **knobs) -> Simulation:
    """Dispatch by scenario id; ``n=None`` uses the scenario's default size."""
    gens = {
        "dependent-groups": gen_dependent_groups,
        "within-corr": gen_within_corr,
        "group-size": gen_group_size,
        "one-factor": gen_one_factor,
        "two-factor": gen_two_factor,
    }
    if scenario not in gens:
        raise ContractError(f"unknown scenario {scenario!r}; choose from {SCENARIOS}")
    kwargs = dict(knobs)
    if n is not None:
        kwargs["n"] = n
    return gens[scenario](seed=seed, **kwargs)
