"""Hard-instance generators and the error envelope they are judged against.

Each generator returns an instance with closed-form join count and local
sensitivity recorded in its metadata, which the tests verify independently.
The two lower-bound generators embed a single-table histogram into a join so
that any single-table linear query lifts to a join query whose answer is an
exact multiple of the single-table answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InfeasibleDelta,
    InfeasibleSpec,
    InfeasibleVector,
    NonPower,
    SupportTooLarge,
    WrongArity,
)
from .queries import LinearQuery
from .relational import DEFAULT_SUPPORT_CAP, Attribute, Instance, JoinQuery, Relation


@dataclass(frozen=True)
class SingleTable:
    """A histogram over [n]: value -> nonnegative frequency."""

    freqs: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.freqs:
            raise ValueError("need at least one value")
        if any(f < 0 for f in self.freqs):
            raise ValueError("frequencies must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.freqs)

    @property
    def total(self) -> int:
        return sum(self.freqs)

    def answer(self, weights: np.ndarray) -> float:
        return float(np.asarray(weights, dtype=np.float64) @ np.array(self.freqs, dtype=np.float64))


def f_lower(domain_size: int, epsilon: float) -> float:
    """Per-unit error floor no private mechanism can beat."""
    return math.sqrt(math.sqrt(math.log2(domain_size)) / epsilon)


def f_upper(domain_size: int, family_size: int, epsilon: float, delta: float) -> float:
    """Per-unit error achieved by the release pipelines."""
    return f_lower(domain_size, epsilon) * math.sqrt(
        math.log2(family_size) * math.log2(1.0 / delta))


def error_envelope_two_table(
    count: float, sensitivity: float, lam: float, f_up: float,
) -> float:
    """Max-error envelope: sqrt(count * (sens + lam)) + (sens + lam) * sqrt(lam),
    scaled by the per-unit factor."""
    padded = sensitivity + lam
    return (math.sqrt(count * padded) + padded * math.sqrt(lam)) * f_up


def _two_table_query(dom_a: int, dom_b: int, dom_c: int) -> JoinQuery:
    return JoinQuery(
        attributes=(
            Attribute("A", dom_a), Attribute("B", dom_b), Attribute("C", dom_c)),
        relations=(("A", "B"), ("B", "C")),
    )


def gen_two_table_lb(table: SingleTable | int, degree: int) -> Instance:
    """Embed a histogram so each value's join contribution is degree * freq.

    Relation 1 holds freq(a) distinct join values per a, each once; relation
    2 pairs every join value with ``degree`` partners. Local sensitivity is
    exactly ``degree`` and the join count is degree * sum(freq). An integer
    ``table`` means the all-ones histogram of that size. The instantiated B
    domain covers only the reachable slice; the nominal sizes (B ranging
    over all (value, index) pairs) are recorded for error-formula use.
    """
    if isinstance(table, int):
        table = SingleTable((1,) * table)
    if degree < 1:
        raise InfeasibleDelta("degree must be >= 1")
    num_values = table.size
    fmax = max(max(table.freqs), 1)
    dom_b = num_values * fmax
    if dom_b * degree > DEFAULT_SUPPORT_CAP:
        raise SupportTooLarge(
            f"right relation needs {dom_b * degree} tuples")
    query = _two_table_query(num_values, dom_b, degree)
    r1 = {(a, a * fmax + j): 1 for a in range(num_values) for j in range(table.freqs[a])}
    r2 = {(b, c): 1 for b in range(dom_b) for c in range(degree)}
    nominal_b = num_values * max(table.total, 1)
    meta = {
        "generator": "two_table_lb",
        "amplification": degree,
        "base_size": num_values,
        "expected_count": degree * table.total,
        "expected_sensitivity": degree,
        "nominal_domain_sizes": {"A": num_values, "B": nominal_b, "C": degree},
        "nominal_joined_domain_size": num_values * nominal_b * degree,
    }
    return Instance(query, (Relation(("A", "B"), r1), Relation(("B", "C"), r2)), meta)


def _integer_root(value: int, power: int) -> int:
    d = max(1, int(round(value ** (1.0 / power))))
    while (d + 1) ** power <= value:
        d += 1
    while d ** power > value and d > 1:
        d -= 1
    return d


def gen_multi_table_lb(
    query: JoinQuery,
    table: SingleTable,
    degree: int,
) -> Instance:
    """Embed a histogram along the diagonal of the narrowest relation.

    Each unit of frequency becomes its own diagonal value, so all relations
    stay 0/1 and the local sensitivity is exactly the amplification. Every
    attribute outside the narrowest relation gets domain [d] with
    d = floor(degree^(1/k)), k the number of such attributes; other
    relations hold the full cross product consistent with the diagonal.
    The achieved amplification d^k is recorded (equal to ``degree`` exactly
    when degree is a perfect k-th power).
    """
    if query.num_relations < 2:
        raise WrongArity("need at least two relations")
    if degree < 1:
        raise InfeasibleDelta("degree must be >= 1")
    if table.total < 1:
        raise InfeasibleSpec("the embedded table must have positive total")
    base = min(range(query.num_relations), key=lambda i: (len(query.relations[i]), i))
    base_attrs = set(query.relations[base])
    free_attrs = [a for a in query.attribute_names if a not in base_attrs]
    if not free_attrs:
        raise InfeasibleSpec("every attribute is in the narrowest relation")
    for i, schema in enumerate(query.relations):
        if i != base and not set(schema) & base_attrs:
            raise InfeasibleSpec(
                f"relation {i} shares no attribute with the embedding relation")
    d = _integer_root(degree, len(free_attrs))
    pairs = table.total  # one diagonal value per unit of frequency
    attributes = tuple(
        Attribute(a.name, pairs if a.name in base_attrs else d)
        for a in query.attributes)
    shape = JoinQuery(attributes, query.relations)
    relations = []
    for i, schema in enumerate(query.relations):
        support: dict[tuple[int, ...], int] = {}
        if i == base:
            for p in range(pairs):
                support[tuple(p for _ in schema)] = 1
        else:
            diag = [j for j, name in enumerate(schema) if name in base_attrs]
            free = [j for j, name in enumerate(schema) if name not in base_attrs]
            for p in range(pairs):
                for combo in np.ndindex(*([d] * len(free))):
                    t = [0] * len(schema)
                    for j in diag:
                        t[j] = p
                    for j, v in zip(free, combo):
                        t[j] = int(v)
                    support[tuple(t)] = 1
        relations.append(Relation(schema, support))
    amplification = d ** len(free_attrs)
    nominal_pair = table.size * max(table.total, 1)
    meta = {
        "generator": "multi_table_lb",
        "amplification": amplification,
        "requested_degree": degree,
        "base_relation": base,
        "base_size": table.size,
        "table_freqs": tuple(table.freqs),
        "expected_count": amplification * table.total,
        "expected_sensitivity": amplification,
        "nominal_domain_sizes": {
            a.name: nominal_pair if a.name in base_attrs else d
            for a in query.attributes},
    }
    return Instance(shape, tuple(relations), meta)


def lift_single_table_query(instance: Instance, weights: np.ndarray) -> LinearQuery:
    """Lift single-table weights onto the embedding's base relation.

    The lifted answer on the instance equals amplification * single-table
    answer, exactly.
    """
    meta = instance.meta
    if "amplification" not in meta:
        raise InfeasibleSpec("instance was not built by an embedding generator")
    base = meta.get("base_relation", 0)
    query = instance.query
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (meta["base_size"],):
        raise InfeasibleSpec("weights must match the embedded table size")
    if "table_freqs" in meta:
        # diagonal values enumerate frequency units, not table values
        weights = np.repeat(weights, np.asarray(meta["table_freqs"], dtype=int))
    vectors = []
    for i, schema in enumerate(query.relations):
        size = query.relation_domain_size(i)
        if i == base:
            # first schema attribute carries the embedded value
            rest = int(np.prod([query.domain_size(a) for a in schema[1:]])) if len(schema) > 1 else 1
            vectors.append(np.repeat(weights, rest))
            if vectors[-1].shape != (size,):
                raise InfeasibleSpec("base relation layout mismatch")
        else:
            vectors.append(np.ones(size))
    return LinearQuery(tuple(vectors))


def gen_staircase(num_levels: int) -> Instance:
    """Join value i has degree i on both sides; count is the sum of squares."""
    if num_levels < 1:
        raise InfeasibleSpec("num_levels must be >= 1")
    s = num_levels
    query = _two_table_query(s, s, s)
    r1 = {(a, b): 1 for b in range(s) for a in range(b + 1)}
    r2 = {(b, c): 1 for b in range(s) for c in range(b + 1)}
    meta = {
        "generator": "staircase",
        "expected_count": sum(i * i for i in range(1, s + 1)),
        "expected_sensitivity": s,
        "expected_input_size": 2 * sum(range(1, s + 1)),
    }
    return Instance(query, (Relation(("A", "B"), r1), Relation(("B", "C"), r2)), meta)


def gen_gap(k: int) -> Instance:
    """Geometric degree classes: k^2 / 8^i join values of degree 2^i per side.

    Requires k to be a power of 8 so every class size is integral. The class
    census makes uniformization provably separate from the single-bound
    pipeline: low-degree mass dominates the count while a single high-degree
    class pins the local sensitivity at k^(2/3).
    """
    j = 0
    while 8**j < k:
        j += 1
    if 8**j != k:
        raise NonPower(f"k must be a power of 8, got {k}")
    if k * k * 2 > DEFAULT_SUPPORT_CAP:
        raise SupportTooLarge(f"k={k} needs more than {DEFAULT_SUPPORT_CAP} tuples")
    num_classes = 2 * j + 1  # degrees 1, 2, ..., 2^(2j) = k^(2/3)
    class_sizes = [k * k // 8**i for i in range(num_classes)]
    max_deg = 2 ** (num_classes - 1)
    dom_b = sum(class_sizes)
    query = _two_table_query(max_deg, dom_b, max_deg)
    r1: dict[tuple[int, int], int] = {}
    r2: dict[tuple[int, int], int] = {}
    b = 0
    for i, size in enumerate(class_sizes):
        deg = 2**i
        for _ in range(size):
            for a in range(deg):
                r1[(a, b)] = 1
                r2[(b, a)] = 1
            b += 1
    meta = {
        "generator": "gap",
        "class_sizes": tuple(class_sizes),
        "class_degrees": tuple(2**i for i in range(num_classes)),
        "expected_count": sum(size * 4**i for i, size in enumerate(class_sizes)),
        "expected_sensitivity": max_deg,
        "expected_input_size": 2 * sum(size * 2**i for i, size in enumerate(class_sizes)),
    }
    return Instance(query, (Relation(("A", "B"), r1), Relation(("B", "C"), r2)), meta)


def gen_bucket_conforming(lam: float, block_sizes: dict[int, int]) -> Instance:
    """Two-table instance whose join values sit exactly in prescribed buckets.

    For each requested bucket i with target sub-join size OUT, picks an
    integer degree in (lam * 2^(i-1), lam * 2^i] dividing OUT; the block then
    holds OUT / degree join values, each appearing once on the left and
    ``degree`` times on the right.
    """
    if not block_sizes:
        raise InfeasibleVector("need at least one bucket")
    plan: list[tuple[int, int, int]] = []
    for bucket in sorted(block_sizes):
        if bucket < 1:
            raise InfeasibleVector("bucket indices start at 1")
        out = block_sizes[bucket]
        lo = lam * 2.0 ** (bucket - 1)
        hi = lam * 2.0**bucket
        degree = None
        for cand in range(max(1, math.floor(lo) + 1), math.floor(hi) + 1):
            if lo < cand <= hi and out % cand == 0:
                degree = cand
                break
        if degree is None:
            raise InfeasibleVector(
                f"no integer degree in ({lo}, {hi}] divides {out}")
        plan.append((bucket, degree, out // degree))
    dom_b = sum(n for _, _, n in plan)
    dom_c = max(deg for _, deg, _ in plan)
    query = _two_table_query(dom_b, dom_b, dom_c)
    r1: dict[tuple[int, int], int] = {}
    r2: dict[tuple[int, int], int] = {}
    b = 0
    for _, degree, n in plan:
        for _ in range(n):
            r1[(b, b)] = 1
            for c in range(degree):
                r2[(b, c)] = 1
            b += 1
    meta = {
        "generator": "bucket_conforming",
        "lam": lam,
        "plan": {bucket: {"degree": deg, "values": n} for bucket, deg, n in plan},
        "expected_count": sum(deg * n for _, deg, n in plan),
        "expected_sensitivity": max(deg for _, deg, _ in plan),
    }
    return Instance(query, (Relation(("A", "B"), r1), Relation(("B", "C"), r2)), meta)
