"""Shared fixtures: canonical instances, brute-force oracles, random generators."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from joindp import (
    Attribute,
    Instance,
    JoinQuery,
    Relation,
    ReleaseReport,
    ReleaseResult,
    SyntheticDistribution,
    join_materialize,
)


def two_table_query(dom_a: int = 2, dom_b: int = 2, dom_c: int = 2) -> JoinQuery:
    return JoinQuery(
        attributes=(Attribute("A", dom_a), Attribute("B", dom_b), Attribute("C", dom_c)),
        relations=(("A", "B"), ("B", "C")),
    )


@pytest.fixture
def two_by_two() -> Instance:
    """Two tuples per relation, all meeting at one join value: count 4, LS 2."""
    q = two_table_query()
    return Instance(q, (
        Relation(("A", "B"), {(0, 0): 1, (1, 0): 1}),
        Relation(("B", "C"), {(0, 0): 1, (0, 1): 1}),
    ))


def path3_query(dom: int = 2) -> JoinQuery:
    """Chain of three relations; the textbook non-hierarchical join."""
    return JoinQuery(
        attributes=tuple(Attribute(n, dom) for n in "ABCD"),
        relations=(("A", "B"), ("B", "C"), ("C", "D")),
    )


def fig_query(dom: int = 2) -> JoinQuery:
    """Five relations whose attribute forest is
    A -> (C, B), B -> (D, F, G), G -> (K, L)."""
    return JoinQuery(
        attributes=tuple(Attribute(n, dom) for n in "ABCDFGKL"),
        relations=(
            ("A", "B", "D"),
            ("A", "B", "F"),
            ("A", "B", "G", "K"),
            ("A", "B", "G", "L"),
            ("A", "C"),
        ),
    )


def star_query(num_leaves: int, dom: int = 2) -> JoinQuery:
    attrs = [Attribute("A", dom)] + [Attribute(f"B{j}", dom) for j in range(num_leaves)]
    relations = tuple([("A",)] + [("A", f"B{j}") for j in range(num_leaves)])
    return JoinQuery(tuple(attrs), relations)


def brute_force_join(instance: Instance) -> dict[tuple[int, ...], int]:
    """Nested loop over the full joined domain; the oracle for join_materialize."""
    q = instance.query
    names = q.attribute_names
    out: dict[tuple[int, ...], int] = {}
    for full in itertools.product(*(range(q.domain_size(n)) for n in names)):
        freq = 1
        for schema, rel in zip(q.relations, instance.relations):
            proj = tuple(full[names.index(a)] for a in schema)
            freq *= rel.support.get(proj, 0)
            if freq == 0:
                break
        if freq:
            out[full] = freq
    return out


def brute_force_boundary(instance: Instance, members: set[int]) -> int:
    """Max over boundary assignments of the members' sub-join size, via
    single-tuple semi-joins (no grouping shortcut)."""
    q = instance.query
    if not members:
        return 1
    inside = set().union(*(q.relations[i] for i in members))
    outside_rels = [i for i in range(q.num_relations) if i not in members]
    outside = set().union(*(q.relations[i] for i in outside_rels)) if outside_rels else set()
    border = [a for a in q.attribute_names if a in inside and a in outside]
    inside_order = [a for a in q.attribute_names if a in inside]
    sizes: dict[tuple[int, ...], int] = {}
    for full in itertools.product(*(range(q.domain_size(a)) for a in inside_order)):
        freq = 1
        for i in members:
            schema = q.relations[i]
            proj = tuple(full[inside_order.index(a)] for a in schema)
            freq *= instance.relations[i].support.get(proj, 0)
            if freq == 0:
                break
        if freq:
            key = tuple(full[inside_order.index(a)] for a in border)
            sizes[key] = sizes.get(key, 0) + freq
    return max(sizes.values(), default=0)


_NAMES = "ABCDE"


def random_query(rng: np.random.Generator, max_relations: int = 3,
                 max_domain: int = 4) -> JoinQuery:
    """Random small hypergraph with every attribute covered."""
    num_attrs = int(rng.integers(2, 5))
    names = list(_NAMES[:num_attrs])
    attrs = tuple(Attribute(n, int(rng.integers(1, max_domain + 1))) for n in names)
    m = int(rng.integers(1, max_relations + 1))
    schemas = []
    for _ in range(m):
        width = int(rng.integers(1, num_attrs + 1))
        picked = sorted(rng.choice(num_attrs, size=width, replace=False).tolist())
        schemas.append([names[j] for j in picked])
    for j, n in enumerate(names):  # every attribute must appear somewhere
        if not any(n in s for s in schemas):
            schemas[j % m].append(n)
    return JoinQuery(attrs, tuple(tuple(sorted(s)) for s in schemas))


def random_instance(rng: np.random.Generator, query: JoinQuery | None = None,
                    max_freq: int = 3, density: float = 0.5) -> Instance:
    if query is None:
        query = random_query(rng)
    relations = []
    for schema in query.relations:
        support: dict[tuple[int, ...], int] = {}
        cells = list(itertools.product(*(range(query.domain_size(a)) for a in schema)))
        for t in cells:
            if rng.uniform() < density:
                support[t] = int(rng.integers(1, max_freq + 1))
        relations.append(Relation(schema, support))
    return Instance(query, tuple(relations))


def exact_release(instance, evaluator, params, rng, iterations=None) -> ReleaseResult:
    """Zero-error oracle pipeline: releases the true join as the synthetic mass."""
    q = instance.query
    mass = np.zeros(q.joined_domain_size)
    for t, f in join_materialize(instance).entries.items():
        mass[q.encode(t)] = f
    report = ReleaseReport(
        pipeline="exact", epsilon=params.epsilon, delta=params.delta,
        ledger=(), epsilon_spent=0.0, delta_spent=0.0)
    return ReleaseResult(SyntheticDistribution(q, mass), report)
