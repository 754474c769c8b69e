"""Hierarchical join queries: attribute forests, degree partitions, and the
uniformized release for arbitrarily many relations.

A query is hierarchical when, for every pair of attributes, the sets of
relations containing them are nested or disjoint. Grouping attributes with
identical relation sets yields a forest in which every relation's schema is
the union of one root-to-node path. Degree uniformization walks the forest
leaves-first and splits every current sub-instance at each node by bucketed
noisy degrees; the per-node bucket labels accumulated along the way form a
degree configuration, and each final sub-instance carries a distinct one.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AttributeNotInSchema, ConfigDomainMismatch, NotHierarchical
from .noise import PrivacyParams, RngStream, sample_tlap, tau
from .pipelines import (
    BudgetEntry,
    ReleaseReport,
    ReleaseResult,
    bucket_index,
    release_multi_table,
)
from .pmw import SyntheticDistribution
from .queries import FamilyEvaluator
from .relational import DEFAULT_SUPPORT_CAP, Instance, JoinQuery, Relation, _hash_join
from .sensitivity import residual_from_boundaries

NodeName = tuple[str, ...]
# A degree configuration: one bucket per forest node, sorted by node name.
DegreeConfiguration = tuple[tuple[NodeName, int], ...]


def atom_map(query: JoinQuery) -> dict[str, frozenset[int]]:
    """Attribute -> set of relations whose schema contains it."""
    out: dict[str, frozenset[int]] = {}
    for name in query.attribute_names:
        out[name] = frozenset(
            i for i, schema in enumerate(query.relations) if name in schema)
    return out


def is_hierarchical(query: JoinQuery) -> bool:
    atoms = list(atom_map(query).values())
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            a, b = atoms[i], atoms[j]
            if a & b and not (a <= b or b <= a):
                return False
    return True


@dataclass(frozen=True)
class ForestNode:
    name: NodeName           # the node's own attributes, sorted
    atom: frozenset[int]     # relations containing those attributes
    ancestors: tuple[str, ...]  # attributes of all strict ancestors
    depth: int
    parent: NodeName | None
    children: tuple[NodeName, ...]


@dataclass(frozen=True)
class Forest:
    query: JoinQuery
    nodes: tuple[ForestNode, ...]

    def node(self, name: NodeName) -> ForestNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)

    def node_by_atom(self, atom: frozenset[int]) -> ForestNode | None:
        for n in self.nodes:
            if n.atom == atom:
                return n
        return None

    def path(self, relation_index: int) -> tuple[ForestNode, ...]:
        """Root-to-node chain whose attribute union is the relation schema."""
        chain = sorted(
            (n for n in self.nodes if relation_index in n.atom),
            key=lambda n: n.depth)
        return tuple(chain)

    @property
    def roots(self) -> tuple[ForestNode, ...]:
        return tuple(n for n in self.nodes if n.parent is None)


def attribute_forest(query: JoinQuery) -> Forest:
    """Build the forest; raises NotHierarchical for non-hierarchical queries."""
    if not is_hierarchical(query):
        raise NotHierarchical(
            "attribute relation-sets must be pairwise nested or disjoint")
    atoms = atom_map(query)
    groups: dict[frozenset[int], list[str]] = {}
    for name in query.attribute_names:
        groups.setdefault(atoms[name], []).append(name)

    keys = sorted(groups, key=lambda a: (-len(a), sorted(a)))
    parent: dict[frozenset[int], frozenset[int] | None] = {}
    for a in keys:
        supers = [b for b in keys if b > a]
        parent[a] = min(supers, key=len) if supers else None
        for b in supers:  # strict supersets of an atom must form a chain
            for c in supers:
                if not (b <= c or c <= b):
                    raise NotHierarchical("attribute containment is not laminar")

    depth: dict[frozenset[int], int] = {}

    def _depth(a: frozenset[int]) -> int:
        if a not in depth:
            p = parent[a]
            depth[a] = 0 if p is None else _depth(p) + 1
        return depth[a]

    names = {a: tuple(sorted(groups[a])) for a in keys}
    nodes = []
    for a in keys:
        anc: list[str] = []
        p = parent[a]
        while p is not None:
            anc.extend(groups[p])
            p = parent[p]
        children = tuple(sorted(names[b] for b in keys if parent[b] == a))
        nodes.append(ForestNode(
            name=names[a],
            atom=a,
            ancestors=tuple(sorted(anc)),
            depth=_depth(a),
            parent=names[parent[a]] if parent[a] is not None else None,
            children=children,
        ))
    forest = Forest(query, tuple(sorted(nodes, key=lambda n: (n.depth, n.name))))
    for i in range(query.num_relations):
        covered = set()
        for n in forest.path(i):
            covered.update(n.name)
        if covered != set(query.relations[i]):
            raise NotHierarchical(
                f"relation {i} is not the union of a root-to-node path")
    return forest


def _common_attrs(query: JoinQuery, members: list[int]) -> set[str]:
    common = set(query.relations[members[0]])
    for i in members[1:]:
        common &= set(query.relations[i])
    return common


def _degree_map(
    instance: Instance,
    relation_set: frozenset[int],
    group_attrs: tuple[str, ...],
    cap: int = DEFAULT_SUPPORT_CAP,
) -> dict[tuple[int, ...], int]:
    """Degree of each realized group-attribute assignment (absent means 0)."""
    query = instance.query
    members = sorted(relation_set)
    if not set(group_attrs) <= _common_attrs(query, members):
        raise AttributeNotInSchema(
            f"{group_attrs} is not contained in the common attributes of "
            f"relations {members}")
    if len(members) == 1:
        i = members[0]
        schema = query.relations[i]
        pos = [schema.index(a) for a in group_attrs]
        out: dict[tuple[int, ...], int] = {}
        for t, f in instance.relations[i].support.items():
            key = tuple(t[p] for p in pos)
            out[key] = out.get(key, 0) + f
        return out
    covered, entries = _hash_join(
        [query.relations[i] for i in members],
        [instance.relations[i].support for i in members],
        cap,
    )
    wedge = [a for a in query.attribute_names
             if a in _common_attrs(query, members)]
    posw = [covered.index(a) for a in wedge]
    posy = [covered.index(a) for a in group_attrs]
    seen: dict[tuple[int, ...], set[tuple[int, ...]]] = {}
    for t in entries:
        ykey = tuple(t[p] for p in posy)
        seen.setdefault(ykey, set()).add(tuple(t[p] for p in posw))
    return {k: len(v) for k, v in seen.items()}


def hdegree(
    instance: Instance,
    relation_set: frozenset[int] | set[int],
    group_attrs: tuple[str, ...],
    value: tuple[int, ...],
    cap: int = DEFAULT_SUPPORT_CAP,
) -> int:
    """Joint degree of one group-attribute assignment.

    For a single relation this sums frequencies over tuples projecting to
    the value. For several it counts the distinct projections, onto the
    relations' common attributes, of their sub-join tuples agreeing with
    the value.
    """
    degs = _degree_map(instance, frozenset(relation_set), group_attrs, cap)
    return degs.get(tuple(value), 0)


def max_hdegree(
    instance: Instance,
    relation_set: frozenset[int] | set[int],
    group_attrs: tuple[str, ...],
) -> int:
    degs = _degree_map(instance, frozenset(relation_set), group_attrs)
    return max(degs.values(), default=0)


def multiplicity_budget(input_size: int, lam: float) -> int:
    """ell: bound on distinct buckets per node, hence on tuple copies."""
    return max(1, math.ceil(math.log2(input_size / lam + 1)))


def _decompose_node(
    instance: Instance,
    node: ForestNode,
    params: PrivacyParams,
    rng: RngStream,
) -> tuple[list[tuple[Instance, int]], int]:
    """Split one instance at one node; also report how many draws were spent."""
    query = instance.query
    degs = _degree_map(instance, node.atom, node.ancestors)
    shift = tau(params.epsilon, params.delta, 1.0)
    value_bucket: dict[tuple[int, ...], int] = {}
    for key in sorted(degs):
        noisy = degs[key] + (sample_tlap(1.0 / params.epsilon, shift, rng) - shift)
        value_bucket[key] = bucket_index(noisy, params.lam)
    buckets = sorted(set(value_bucket.values()))
    if not buckets:
        return [], 0
    pieces: dict[int, list[Relation]] = {b: [] for b in buckets}
    for i in range(query.num_relations):
        if i in node.atom:
            schema = query.relations[i]
            pos = [schema.index(a) for a in node.ancestors]
            parts: dict[int, dict[tuple[int, ...], int]] = {b: {} for b in buckets}
            for t, f in instance.relations[i].support.items():
                b = value_bucket.get(tuple(t[p] for p in pos))
                if b is not None:  # zero-degree assignments never join
                    parts[b][t] = f
            for b in buckets:
                pieces[b].append(Relation(schema, parts[b]))
        else:
            for b in buckets:  # untouched relations shared by reference
                pieces[b].append(instance.relations[i])
    out = [(instance.replace_relations(pieces[b]), b) for b in buckets]
    return out, len(degs)


def decompose(
    instance: Instance,
    node: ForestNode,
    params: PrivacyParams,
    rng: RngStream,
) -> list[tuple[Instance, int]]:
    """One uniformization step: split the instance at a forest node.

    Draws one truncated-Laplace-noised degree per assignment of the node's
    ancestor attributes realized with positive degree, buckets it, and
    splits the node's relations by the bucket of each tuple's ancestor
    projection. Relations outside the node's atom are shared, so a tuple
    of those relations appears in every returned sub-instance. The joins
    of the sub-instances partition the input join.
    """
    pairs, _ = _decompose_node(instance, node, params, rng)
    return pairs


@dataclass(frozen=True)
class HierarchicalPartition:
    forest: Forest
    lam: float
    pieces: tuple[tuple[Instance, DegreeConfiguration], ...]
    num_draws: int
    ell: int
    max_multiplicity: int

    @property
    def total_node_weight(self) -> int:
        """c: sum over nodes of how many relations contain the node."""
        return sum(len(n.atom) for n in self.forest.nodes)

    @property
    def max_relation_arity(self) -> int:
        return max(len(s) for s in self.forest.query.relations)


def _measure_multiplicity(
    instance: Instance,
    pieces: tuple[tuple[Instance, DegreeConfiguration], ...],
) -> int:
    """Largest number of sub-instances any one input tuple was copied into."""
    worst = 1 if pieces else 0
    for i in range(instance.query.num_relations):
        counts: dict[tuple[int, ...], int] = {}
        for sub, _ in pieces:
            for t in sub.relations[i].support:
                counts[t] = counts.get(t, 0) + 1
        if counts:
            worst = max(worst, max(counts.values()))
    return worst


def partition_hierarchical(
    instance: Instance,
    params: PrivacyParams,
    rng: RngStream,
) -> HierarchicalPartition:
    """Decompose at every forest node, deepest first, splitting as we go.

    Each surviving sub-instance is labeled with the bucket it took at every
    node; the labels are distinct by construction. Sub-instances whose
    sub-join at a node is empty realize no bucket there and are dropped.
    A single-relation query needs no degree information at all (its
    residual sensitivity is constant), so it passes through whole with an
    empty configuration and no draws.
    """
    query = instance.query
    forest = attribute_forest(query)
    ell = multiplicity_budget(max(instance.input_size, 1), params.lam)
    if query.num_relations == 1:
        pieces = ((instance, ()),)
        return HierarchicalPartition(forest, params.lam, pieces, 0, ell, 1)
    order = sorted(forest.nodes, key=lambda n: (-n.depth, n.name))
    current: list[tuple[Instance, list[tuple[NodeName, int]]]] = [(instance, [])]
    draws = 0
    for node in order:
        nxt: list[tuple[Instance, list[tuple[NodeName, int]]]] = []
        for inst, label in current:
            pairs, spent = _decompose_node(inst, node, params, rng)
            draws += spent
            for sub, bucket in pairs:
                nxt.append((sub, label + [(node.name, bucket)]))
        current = nxt
    pieces = tuple(sorted(
        ((inst, tuple(sorted(label))) for inst, label in current),
        key=lambda pair: pair[1]))
    return HierarchicalPartition(
        forest=forest,
        lam=params.lam,
        pieces=pieces,
        num_draws=draws,
        ell=ell,
        max_multiplicity=_measure_multiplicity(instance, pieces),
    )


def symbolic_T_bound(
    query: JoinQuery,
    relation_set: frozenset[int] | set[int],
    forest: Forest | None = None,
) -> tuple[NodeName, ...]:
    """Boundary sub-join size as a product of per-node max degrees.

    Returns the multiset of forest nodes whose max degrees multiply to an
    upper bound on the boundary query of the relation set, sorted by name.
    """
    if forest is None:
        forest = attribute_forest(query)
    members = frozenset(relation_set)
    if not members:
        return ()
    inside = set().union(*(query.relations[i] for i in members))
    outside_rels = [i for i in range(query.num_relations) if i not in members]
    outside = set().union(*(query.relations[i] for i in outside_rels)) if outside_rels else set()
    start = frozenset(inside & outside)
    return tuple(sorted(_symbolic(query, forest, members, start)))


def _symbolic(
    query: JoinQuery,
    forest: Forest,
    members: frozenset[int],
    cond: frozenset[str],
) -> list[NodeName]:
    if len(members) == 1:
        node = forest.node_by_atom(members)
        if node is None or frozenset(node.ancestors) != cond:
            raise NotHierarchical(
                f"no forest node matches relation set {sorted(members)} "
                f"conditioned on {sorted(cond)}")
        return [node.name]
    # split on connectivity: relations are adjacent when they share an
    # attribute not already conditioned on
    ids = sorted(members)
    comp = {i: i for i in ids}

    def find(i: int) -> int:
        while comp[i] != i:
            comp[i] = comp[comp[i]]
            i = comp[i]
        return i

    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            if (set(query.relations[i]) & set(query.relations[j])) - cond:
                comp[find(i)] = find(j)
    groups: dict[int, set[int]] = {}
    for i in ids:
        groups.setdefault(find(i), set()).add(i)
    if len(groups) > 1:
        terms: list[NodeName] = []
        for g in groups.values():
            union_attrs = set().union(*(query.relations[i] for i in g))
            terms.extend(_symbolic(query, forest, frozenset(g),
                                   cond & frozenset(union_attrs)))
        return terms
    # connected: peel off the node whose attributes are common to all members
    node = forest.node_by_atom(members)
    common = _common_attrs(query, ids)
    if node is None or frozenset(node.ancestors) != cond or not (common - cond):
        raise NotHierarchical(
            f"connected relation set {sorted(members)} conditioned on "
            f"{sorted(cond)} does not isolate a forest node")
    return [node.name] + _symbolic(query, forest, members, frozenset(common))


def rs_under_config(
    query: JoinQuery,
    config: DegreeConfiguration,
    beta: float,
    lam: float,
    forest: Forest | None = None,
) -> float:
    """Residual sensitivity with boundary sizes bounded via the configuration.

    Every forest node's max degree is replaced by the top of its bucket,
    lam * 2^bucket, and the products feed the usual residual maximization.
    """
    if forest is None:
        forest = attribute_forest(query)
    sigma = dict(config)
    if set(sigma) != {n.name for n in forest.nodes}:
        raise ConfigDomainMismatch(
            "configuration must assign a bucket to every forest node")
    for name, bucket in sigma.items():
        if bucket < 1:
            raise ConfigDomainMismatch(f"bucket for {name} must be >= 1")
    cache: dict[frozenset[int], float] = {}

    def t_of(rest: frozenset[int]) -> float:
        if rest not in cache:
            value = 1.0
            for name in symbolic_T_bound(query, rest, forest):
                value *= lam * 2.0 ** sigma[name]
            cache[rest] = value
        return cache[rest]

    value, _ = residual_from_boundaries(t_of, query.num_relations, beta)
    return value


def _config_stream_id(config: DegreeConfiguration) -> int:
    digest = hashlib.blake2b(repr(config).encode(), digest_size=8).digest()
    return 1 + int.from_bytes(digest, "big") % (2**62)


def release_uniformized_hierarchical(
    instance: Instance,
    evaluator: FamilyEvaluator,
    params: PrivacyParams,
    rng: RngStream,
    iterations: int | None = None,
) -> ReleaseResult:
    """Partition by degree configuration, release every piece, sum masses.

    Budget accounting is measured rather than worst-case: the partition
    stage composes once per attribute of the widest relation, the release
    stage once per sub-instance any single tuple actually landed in.
    """
    half = params.halved()
    part = partition_hierarchical(instance, half, rng.substream(0))
    combined = SyntheticDistribution(
        instance.query, np.zeros(instance.query.joined_domain_size))
    sub_reports = []
    for piece, config in part.pieces:
        result = release_multi_table(
            piece, evaluator, half, rng.substream(_config_stream_id(config)),
            iterations)
        combined = combined.combine(result.distribution)
        sub_reports.append(replace(result.report, details={
            **result.report.details,
            "config": [[list(name), bucket] for name, bucket in config],
        }))
    c_prime = part.max_relation_arity if part.num_draws else 0
    mult = part.max_multiplicity
    ledger = (
        BudgetEntry("partition", half.epsilon * c_prime, half.delta * c_prime),
        BudgetEntry("releases", half.epsilon * mult, half.delta * mult),
    )
    report = ReleaseReport(
        pipeline="unif_hierarchical",
        epsilon=params.epsilon,
        delta=params.delta,
        ledger=ledger,
        epsilon_spent=sum(e.epsilon for e in ledger),
        delta_spent=sum(e.delta for e in ledger),
        iterations=sum(r.iterations for r in sub_reports),
        clip_events=sum(r.clip_events for r in sub_reports),
        details={
            "lam": part.lam,
            "ell": part.ell,
            "pieces": len(sub_reports),
            "partition_draws": part.num_draws,
            "total_node_weight": part.total_node_weight,
            "max_relation_arity": part.max_relation_arity,
            "max_multiplicity": mult,
        },
        sub_reports=tuple(sub_reports),
    )
    return ReleaseResult(combined, report)
