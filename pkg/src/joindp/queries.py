"""Linear queries over the joined domain.

A query assigns every full-width tuple a weight in [-1, 1], factored as a
product of one weight vector per relation (each indexed by the dense encoding
of the tuple's projection onto that relation's schema). The answer on an
instance is the weighted sum over the materialized join; the answer on a
synthetic mass vector is the weighted sum over the dense joined domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadInterval, DegenerateFamily, DomainTooLarge
from .noise import RngStream
from .relational import Instance, JoinQuery, join_materialize

# Ceiling on the dense joined domain for synthetic releases, in cells.
DENSE_DOMAIN_CAP = 2**22
# Ceiling on the cached query-by-domain weight matrix, in entries.
MATRIX_CACHE_CAP = 2**28


@dataclass(frozen=True)
class LinearQuery:
    """One weight vector per relation; joined weight is their product."""

    relation_vectors: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for v in self.relation_vectors:
            if not np.all(np.isfinite(v)):
                raise ValueError("query weights must be finite")
            if np.any(np.abs(v) > 1.0 + 1e-12):
                raise ValueError("query weights must lie in [-1, 1]")


@dataclass(frozen=True)
class QueryFamily:
    queries: tuple[LinearQuery, ...]
    spec: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.queries:
            raise DegenerateFamily("a query family needs at least one query")

    def __len__(self) -> int:
        return len(self.queries)


def _check_shapes(query: JoinQuery, family: QueryFamily) -> None:
    sizes = [query.relation_domain_size(i) for i in range(query.num_relations)]
    for q in family.queries:
        if len(q.relation_vectors) != query.num_relations:
            raise ValueError("query has wrong number of relation vectors")
        for v, n in zip(q.relation_vectors, sizes):
            if v.shape != (n,):
                raise ValueError(f"relation vector shape {v.shape} != ({n},)")


def counting_query(query: JoinQuery) -> LinearQuery:
    return LinearQuery(tuple(
        np.ones(query.relation_domain_size(i))
        for i in range(query.num_relations)))


def counting_family(query: JoinQuery) -> QueryFamily:
    return QueryFamily((counting_query(query),), spec={"kind": "counting"})


def random_sign_family(
    query: JoinQuery,
    num_queries: int,
    seed: int,
    all_plus: bool = False,
) -> QueryFamily:
    """Independent uniform +-1 weights on every relation's tuple domain.

    ``all_plus`` forces every weight to +1 (each query is then the counting
    query); it exists so tests can pin the degenerate case.
    """
    if num_queries < 1:
        raise DegenerateFamily("num_queries must be >= 1")
    rng = RngStream(seed).generator
    queries = []
    for _ in range(num_queries):
        vectors = []
        for i in range(query.num_relations):
            n = query.relation_domain_size(i)
            if all_plus:
                vectors.append(np.ones(n))
            else:
                vectors.append(rng.integers(0, 2, size=n) * 2.0 - 1.0)
        queries.append(LinearQuery(tuple(vectors)))
    return QueryFamily(tuple(queries), spec={
        "kind": "random_sign", "num_queries": num_queries, "seed": seed})


def interval_family(
    query: JoinQuery,
    intervals: "list[dict[str, tuple[int, int]]]",
) -> QueryFamily:
    """Product indicator queries from per-attribute closed intervals.

    One mapping per query; attributes it does not mention are unconstrained.
    A reversed interval (lo > hi) is the explicit empty selection. The
    indicator for an attribute goes into every relation containing it,
    which is harmless for 0/1 weights (the product of copies is the copy).
    """
    if not intervals:
        raise DegenerateFamily("need at least one interval mapping")
    queries = []
    for spec in intervals:
        bounds: dict[str, tuple[int, int]] = {}
        for attribute, pair in spec.items():
            u = query.domain_size(attribute)
            lo, hi = int(pair[0]), int(pair[1])
            if lo <= hi and not (0 <= lo and hi < u):
                raise BadInterval(
                    f"[{lo}, {hi}] outside domain of {attribute} (size {u})")
            bounds[attribute] = (lo, hi)
        vectors = []
        for i, schema in enumerate(query.relations):
            n = query.relation_domain_size(i)
            v = np.ones(n)
            strides = query._strides(schema)
            base = np.arange(n, dtype=np.int64)
            for attribute in schema:
                if attribute not in bounds:
                    continue
                lo, hi = bounds[attribute]
                digit = (base // strides[attribute]) % query.domain_size(attribute)
                v *= ((digit >= lo) & (digit <= hi)).astype(np.float64)
            vectors.append(v)
        queries.append(LinearQuery(tuple(vectors)))
    return QueryFamily(tuple(queries), spec={
        "kind": "interval",
        "intervals": [{a: [lo, hi] for a, (lo, hi) in sorted(spec.items())}
                      for spec in (dict(s) for s in intervals)]})


def prefix_interval_family(
    query: JoinQuery,
    attribute: str,
    num_queries: int,
) -> QueryFamily:
    """Evenly spaced prefix intervals [0, t] on one attribute."""
    u = query.domain_size(attribute)
    if num_queries < 1:
        raise DegenerateFamily("num_queries must be >= 1")
    thresholds = [max(0, round((j + 1) * u / num_queries) - 1)
                  for j in range(num_queries)]
    family = interval_family(query, [{attribute: (0, t)} for t in thresholds])
    return QueryFamily(family.queries, spec={
        "kind": "interval", "attribute": attribute, "num_queries": num_queries})


class FamilyEvaluator:
    """Evaluates a whole family against instances and dense mass vectors.

    Dense rows (query weights over the joined domain) are cached as one
    float32 matrix when it fits under MATRIX_CACHE_CAP, which turns each
    PMW scoring round into a single matrix-vector product.
    """

    def __init__(self, query: JoinQuery, family: QueryFamily):
        _check_shapes(query, family)
        self.query = query
        self.family = family
        self._proj: list[np.ndarray] | None = None
        self._matrix: np.ndarray | None = None
        self._built = False

    @property
    def domain_size(self) -> int:
        return self.query.joined_domain_size

    def _projections(self) -> list[np.ndarray]:
        if self._proj is None:
            if self.domain_size > DENSE_DOMAIN_CAP:
                raise DomainTooLarge(
                    f"joined domain {self.domain_size} exceeds dense cap "
                    f"{DENSE_DOMAIN_CAP}")
            self._proj = [
                self.query.projection_index_array(i)
                for i in range(self.query.num_relations)
            ]
        return self._proj

    def row(self, j: int) -> np.ndarray:
        """Dense weight vector of query j over the joined domain."""
        proj = self._projections()
        q = self.family.queries[j]
        out = q.relation_vectors[0][proj[0]].astype(np.float64)
        for i in range(1, len(proj)):
            out *= q.relation_vectors[i][proj[i]]
        return out

    def _cache_matrix(self) -> np.ndarray | None:
        if not self._built:
            self._built = True
            if len(self.family) * self.domain_size <= MATRIX_CACHE_CAP:
                rows = [self.row(j).astype(np.float32) for j in range(len(self.family))]
                self._matrix = np.stack(rows)
        return self._matrix

    def evaluate_mass(self, mass: np.ndarray) -> np.ndarray:
        """Answers of every query on a dense mass vector."""
        matrix = self._cache_matrix()
        if matrix is not None:
            return (matrix @ mass.astype(np.float32)).astype(np.float64)
        return np.array([float(self.row(j) @ mass) for j in range(len(self.family))])

    def evaluate_instance(self, instance: Instance) -> np.ndarray:
        """Exact answers on the materialized join (sparse, no dense cap)."""
        if instance.query != self.query:
            raise ValueError("instance query does not match evaluator query")
        table = join_materialize(instance)
        if not table.entries:
            return np.zeros(len(self.family))
        tuples = list(table.entries)
        freqs = np.array([table.entries[t] for t in tuples], dtype=np.float64)
        m = self.query.num_relations
        names = self.query.attribute_names
        rel_idx = []
        for i in range(m):
            schema = self.query.relations[i]
            pos = [names.index(a) for a in schema]
            enc = np.array(
                [self.query.encode([t[p] for p in pos], schema) for t in tuples],
                dtype=np.int64)
            rel_idx.append(enc)
        answers = np.zeros(len(self.family))
        for j, q in enumerate(self.family.queries):
            w = q.relation_vectors[0][rel_idx[0]].astype(np.float64)
            for i in range(1, m):
                w *= q.relation_vectors[i][rel_idx[i]]
            answers[j] = float(w @ freqs)
        return answers


def eval_instance(q: LinearQuery, instance: Instance) -> float:
    """Answer of one query on the materialized join."""
    evaluator = FamilyEvaluator(instance.query, QueryFamily((q,)))
    return float(evaluator.evaluate_instance(instance)[0])


def eval_synthetic(q: LinearQuery, dist) -> float:
    """Answer of one query on a dense synthetic distribution (anything
    exposing .query and .mass)."""
    evaluator = FamilyEvaluator(dist.query, QueryFamily((q,)))
    return float(evaluator.row(0) @ np.asarray(dist.mass, dtype=np.float64))


def worst_query(true_answers: np.ndarray, released_answers: np.ndarray) -> tuple[float, int]:
    """Largest absolute error over the family and the index achieving it."""
    diffs = np.abs(np.asarray(true_answers) - np.asarray(released_answers))
    j = int(np.argmax(diffs))
    return float(diffs[j]), j


def max_error(true_answers: np.ndarray, released_answers: np.ndarray) -> float:
    return worst_query(true_answers, released_answers)[0]
