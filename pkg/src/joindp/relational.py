"""Join-query schemas, frequency-annotated relations, and join materialization.

Relations map tuples over dense integer domains {0, ..., u-1} to positive
integer frequencies. The join of an instance is the set of full-width tuples
that agree with some support tuple of every relation, with frequency equal to
the product of the per-relation frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AttributeNotInSchema, SupportTooLarge
from .noise import RngStream

# Hard ceiling on materialized (sub-)join entries; exceeding it is an error,
# never a truncation.
DEFAULT_SUPPORT_CAP = 2**22


@dataclass(frozen=True)
class Attribute:
    name: str
    domain_size: int

    def __post_init__(self) -> None:
        if self.domain_size < 1:
            raise ValueError(f"domain_size must be >= 1, got {self.domain_size}")


@dataclass(frozen=True)
class JoinQuery:
    """Hypergraph of attributes and relation schemas.

    Every attribute must occur in at least one relation schema (the joined
    domain is the product over exactly the attributes the join constrains).
    """

    attributes: tuple[Attribute, ...]
    relations: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError("attribute names must be unique")
        if not self.relations:
            raise ValueError("need at least one relation")
        known = set(names)
        covered: set[str] = set()
        for schema in self.relations:
            if not schema:
                raise ValueError("relation schemas must be non-empty")
            if len(set(schema)) != len(schema):
                raise ValueError(f"duplicate attribute in schema {schema}")
            missing = set(schema) - known
            if missing:
                raise ValueError(f"schema names {sorted(missing)} not declared")
            covered |= set(schema)
        if covered != known:
            raise ValueError(
                f"attributes {sorted(known - covered)} appear in no relation")

    # -- dense-domain helpers -------------------------------------------------

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def domain_size(self, name: str) -> int:
        for a in self.attributes:
            if a.name == name:
                return a.domain_size
        raise AttributeNotInSchema(name)

    @property
    def joined_domain_size(self) -> int:
        size = 1
        for a in self.attributes:
            size *= a.domain_size
        return size

    def relation_domain_size(self, i: int) -> int:
        size = 1
        for name in self.relations[i]:
            size *= self.domain_size(name)
        return size

    def _strides(self, schema: Sequence[str]) -> dict[str, int]:
        strides: dict[str, int] = {}
        acc = 1
        for name in reversed(schema):
            strides[name] = acc
            acc *= self.domain_size(name)
        return strides

    def encode(self, values: Sequence[int], schema: Sequence[str] | None = None) -> int:
        schema = schema if schema is not None else self.attribute_names
        strides = self._strides(schema)
        return sum(v * strides[a] for v, a in zip(values, schema))

    def decode(self, index: int) -> tuple[int, ...]:
        values = []
        for a in reversed(self.attributes):
            values.append(index % a.domain_size)
            index //= a.domain_size
        return tuple(reversed(values))

    def projection_index_array(self, i: int, out: np.ndarray | None = None) -> np.ndarray:
        """Map every dense joined-domain index onto the dense index of its
        projection over relation i's schema."""
        n = self.joined_domain_size
        full = self._strides(self.attribute_names)
        rel = self._strides(self.relations[i])
        idx = np.zeros(n, dtype=np.int64) if out is None else out
        base = np.arange(n, dtype=np.int64)
        for name in self.relations[i]:
            digit = (base // full[name]) % self.domain_size(name)
            idx += digit * rel[name]
        return idx


@dataclass(frozen=True)
class Relation:
    """One frequency function: tuple over the schema -> positive count."""

    schema: tuple[str, ...]
    support: dict[tuple[int, ...], int]

    def __post_init__(self) -> None:
        for t, f in self.support.items():
            if len(t) != len(self.schema):
                raise ValueError(f"tuple {t} does not match schema {self.schema}")
            if f < 1:
                raise ValueError(f"zero/negative frequency for {t}; omit the tuple")

    @property
    def total(self) -> int:
        return sum(self.support.values())


@dataclass(frozen=True)
class Instance:
    """A database instance: one relation per hyperedge, in hyperedge order."""

    query: JoinQuery
    relations: tuple[Relation, ...]
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.relations) != self.query.num_relations:
            raise ValueError("one relation required per hyperedge")
        for schema, rel in zip(self.query.relations, self.relations):
            if rel.schema != schema:
                raise ValueError(f"relation schema {rel.schema} != hyperedge {schema}")
            sizes = [self.query.domain_size(a) for a in schema]
            for t in rel.support:
                for v, u in zip(t, sizes):
                    if not 0 <= v < u:
                        raise ValueError(f"value {v} outside domain of size {u} in {t}")

    @property
    def input_size(self) -> int:
        return sum(rel.total for rel in self.relations)

    def replace_relations(self, relations: Sequence[Relation]) -> "Instance":
        return Instance(self.query, tuple(relations), dict(self.meta))


@dataclass(frozen=True)
class JoinTable:
    """Materialized join: full-width tuple -> product frequency."""

    query: JoinQuery
    entries: dict[tuple[int, ...], int]

    @property
    def total(self) -> int:
        return sum(self.entries.values())


def _hash_join(
    schemas: Sequence[tuple[str, ...]],
    supports: Sequence[Mapping[tuple[int, ...], int]],
    cap: int,
    project_each_step: Sequence[set[str]] | None = None,
) -> tuple[list[str], dict[tuple[int, ...], int]]:
    """Left-deep hash join over the given relations, smallest support first.

    Returns the covered attribute order and the joined entries. When
    ``project_each_step`` is given, after folding in relation k the partial
    tuples are projected onto that step's attribute set (frequencies summed),
    which is how streaming counting avoids materializing the full join.
    """
    order = sorted(range(len(schemas)), key=lambda i: (len(supports[i]), i))
    covered: list[str] = []
    partial: dict[tuple[int, ...], int] = {(): 1}
    for step, i in enumerate(order):
        schema, support = schemas[i], supports[i]
        shared = [a for a in covered if a in schema]
        fresh = [a for a in schema if a not in covered]
        pos_shared = [covered.index(a) for a in shared]
        rel_shared = [schema.index(a) for a in shared]
        rel_fresh = [schema.index(a) for a in fresh]
        groups: dict[tuple[int, ...], list[tuple[tuple[int, ...], int]]] = {}
        for t, f in support.items():
            key = tuple(t[j] for j in rel_shared)
            groups.setdefault(key, []).append((tuple(t[j] for j in rel_fresh), f))
        nxt: dict[tuple[int, ...], int] = {}
        for pt, pf in partial.items():
            key = tuple(pt[j] for j in pos_shared)
            for ft, ff in groups.get(key, ()):
                full = pt + ft
                nxt[full] = nxt.get(full, 0) + pf * ff
                if len(nxt) > cap:
                    raise SupportTooLarge(
                        f"joined support exceeded cap of {cap} entries")
        covered = covered + fresh
        partial = nxt
        if project_each_step is not None:
            keep = project_each_step[step]
            pos = [j for j, a in enumerate(covered) if a in keep]
            covered = [covered[j] for j in pos]
            shrunk: dict[tuple[int, ...], int] = {}
            for t, f in partial.items():
                k = tuple(t[j] for j in pos)
                shrunk[k] = shrunk.get(k, 0) + f
            partial = shrunk
    return covered, partial


def join_materialize(instance: Instance, cap: int = DEFAULT_SUPPORT_CAP) -> JoinTable:
    """Materialize the natural join with product frequencies.

    Raises SupportTooLarge when the joined support would exceed ``cap``.
    """
    covered, entries = _hash_join(
        instance.query.relations,
        [r.support for r in instance.relations],
        cap,
    )
    target = list(instance.query.attribute_names)
    perm = [covered.index(a) for a in target]
    rekeyed = {tuple(t[j] for j in perm): f for t, f in entries.items()}
    return JoinTable(instance.query, rekeyed)


def count(instance: Instance) -> int:
    """Join size, accumulated with per-step projection so no cap is needed."""
    schemas = instance.query.relations
    supports = [r.support for r in instance.relations]
    order = sorted(range(len(schemas)), key=lambda i: (len(supports[i]), i))
    # after step k only attributes still referenced by later relations matter
    keeps: list[set[str]] = []
    for step in range(len(order)):
        later: set[str] = set()
        for i in order[step + 1:]:
            later |= set(schemas[i])
        keeps.append(later)
    _, partial = _hash_join(schemas, supports, cap=int(1e18), project_each_step=keeps)
    return sum(partial.values())  # final keep-set is empty: at most one entry


def degree(
    instance: Instance,
    relation_index: int,
    attrs: Sequence[str],
    value: tuple[int, ...],
) -> int:
    """Sum of frequencies of relation tuples projecting onto ``value``."""
    schema = instance.query.relations[relation_index]
    for a in attrs:
        if a not in schema:
            raise AttributeNotInSchema(f"{a} not in relation {relation_index} schema")
    pos = [schema.index(a) for a in attrs]
    return sum(
        f for t, f in instance.relations[relation_index].support.items()
        if tuple(t[j] for j in pos) == tuple(value)
    )


def boundary_attrs(query: JoinQuery, relation_set: Iterable[int]) -> tuple[str, ...]:
    """Attributes shared between the relation set and its complement, in
    query attribute order."""
    inside: set[str] = set()
    outside: set[str] = set()
    members = set(relation_set)
    for i, schema in enumerate(query.relations):
        (inside if i in members else outside).update(schema)
    return tuple(a for a in query.attribute_names if a in inside and a in outside)


def boundary_query(
    instance: Instance,
    relation_set: Iterable[int],
    cap: int = DEFAULT_SUPPORT_CAP,
) -> int:
    """Max over boundary-attribute assignments of the sub-join size of the
    given relation set (the whole sub-join size when the boundary is empty)."""
    members = sorted(set(relation_set))
    if not members:
        return 1  # empty-product convention, required by the residual formula
    if any(i < 0 or i >= instance.query.num_relations for i in members):
        raise ValueError(f"relation indices {members} out of range")
    covered, entries = _hash_join(
        [instance.query.relations[i] for i in members],
        [instance.relations[i].support for i in members],
        cap,
    )
    border = boundary_attrs(instance.query, members)
    pos = [covered.index(a) for a in border]
    groups: dict[tuple[int, ...], int] = {}
    for t, f in entries.items():
        key = tuple(t[j] for j in pos)
        groups[key] = groups.get(key, 0) + f
    return max(groups.values(), default=0)


def neighbor(instance: Instance, seed: int) -> Instance:
    """A neighboring instance: one relation changed at one tuple by +-1.

    The choice of relation, tuple, and direction is a deterministic function
    of the seed. An all-empty instance only admits additions.
    """
    rng = RngStream(seed, stream_id=0).generator
    i = int(rng.integers(instance.query.num_relations))
    rel = instance.relations[i]
    sizes = [instance.query.domain_size(a) for a in rel.schema]
    remove = bool(rel.support) and rng.uniform() < 0.5
    support = dict(rel.support)
    if remove:
        keys = sorted(support)
        t = keys[int(rng.integers(len(keys)))]
        support[t] -= 1
        if support[t] == 0:
            del support[t]
    else:
        t = tuple(int(rng.integers(u)) for u in sizes)
        support[t] = support.get(t, 0) + 1
    relations = list(instance.relations)
    relations[i] = Relation(rel.schema, support)
    return instance.replace_relations(relations)
