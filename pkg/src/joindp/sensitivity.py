"""Local and smooth (residual) sensitivity of the join-count.

The count of a natural join can change by far more than one when a single
input tuple is added, so noise must be calibrated to a data-dependent
sensitivity. Local sensitivity is the worst-case count change over neighbors
of the given instance; residual sensitivity smooths it so that it changes by
at most a factor e^beta between neighbors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

from .errors import WrongArity
from .relational import Instance, boundary_query

# Boundary sub-join sizes are reused across every k and every composition, so
# a single evaluation per relation subset is all the join work needed.
TBoundary = Callable[[frozenset[int]], float]


def _weak_compositions(total: int, parts: int):
    """All ways to split ``total`` over ``parts`` ordered nonnegative ints."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _weak_compositions(total - head, parts - 1):
            yield (head,) + rest


def shifted_sensitivity(t_of: TBoundary, num_relations: int, k: int) -> float:
    """Largest local sensitivity over instances at distance k.

    Maximizes, over the relation whose tuple changes and over ways of
    spending the k tuple insertions on the remaining relations, the sum over
    subsets E of the spent relations of T(rest) * prod of spends in E.
    """
    m = num_relations
    best = 0.0
    for i in range(m):
        others = [j for j in range(m) if j != i]
        subsets = []
        for r in range(len(others) + 1):
            for combo in combinations(others, r):
                rest = frozenset(others) - frozenset(combo)
                subsets.append((combo, t_of(rest)))
        for spend in _weak_compositions(k, len(others)):
            s = {j: spend[idx] for idx, j in enumerate(others)}
            total = 0.0
            for combo, t_val in subsets:
                prod = 1
                for j in combo:
                    prod *= s[j]
                total += t_val * prod
            best = max(best, total)
    return best


def residual_from_boundaries(
    t_of: TBoundary,
    num_relations: int,
    beta: float,
) -> tuple[float, int]:
    """max_k e^{-beta k} * shifted_sensitivity(k), with its arg max.

    The scan stops at ceil(m / beta) + m; past that point the exponential
    decay dominates the polynomial growth of the shifted sensitivity.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    m = num_relations
    k_max = math.ceil(m / beta) + m
    best, best_k = 0.0, 0
    for k in range(k_max + 1):
        value = math.exp(-beta * k) * shifted_sensitivity(t_of, m, k)
        if value > best:
            best, best_k = value, k
    return best, best_k


def _boundary_lookup(instance: Instance) -> TBoundary:
    cache: dict[frozenset[int], float] = {}

    def t_of(rest: frozenset[int]) -> float:
        if rest not in cache:
            cache[rest] = float(boundary_query(instance, rest))
        return cache[rest]

    return t_of


def local_sensitivity(instance: Instance) -> int:
    """Worst count change from one tuple insertion/deletion.

    For a single relation every tuple contributes exactly once, so the
    sensitivity is 1 regardless of the data.
    """
    m = instance.query.num_relations
    if m == 1:
        return 1
    return int(shifted_sensitivity(_boundary_lookup(instance), m, 0))


@dataclass(frozen=True)
class SensitivityReport:
    value: float
    beta: float
    best_k: int
    local: int


def residual_sensitivity(instance: Instance, beta: float) -> float:
    return residual_sensitivity_report(instance, beta).value


def residual_sensitivity_report(instance: Instance, beta: float) -> SensitivityReport:
    m = instance.query.num_relations
    if m == 1:
        return SensitivityReport(value=1.0, beta=beta, best_k=0, local=1)
    value, best_k = residual_from_boundaries(_boundary_lookup(instance), m, beta)
    return SensitivityReport(
        value=value, beta=beta, best_k=best_k, local=local_sensitivity(instance))


def residual_sensitivity_two_table(max_degree: int, beta: float) -> float:
    """Closed form for two relations: max_k e^{-beta k} (max_degree + k)."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    k_max = math.ceil(2 / beta) + 2
    best = 0.0
    for k in range(k_max + 1):
        best = max(best, math.exp(-beta * k) * (max_degree + k))
    return best


def two_table_max_degree(instance: Instance) -> int:
    """max over join-attribute values of either side's degree."""
    if instance.query.num_relations != 2:
        raise WrongArity("expects exactly two relations")
    t_of = _boundary_lookup(instance)
    return int(max(t_of(frozenset({0})), t_of(frozenset({1}))))
