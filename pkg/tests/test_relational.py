"""Joins, degrees, boundaries, and neighbors against brute-force oracles."""

import numpy as np
import pytest

from joindp import (
    Attribute,
    Instance,
    JoinQuery,
    Relation,
    SupportTooLarge,
    boundary_attrs,
    boundary_query,
    count,
    degree,
    join_materialize,
    neighbor,
)

from conftest import (
    brute_force_boundary,
    brute_force_join,
    random_instance,
    two_table_query,
)


def test_join_two_by_two(two_by_two):
    table = join_materialize(two_by_two)
    assert table.entries == {
        (0, 0, 0): 1, (0, 0, 1): 1, (1, 0, 0): 1, (1, 0, 1): 1}
    assert table.total == 4
    assert count(two_by_two) == 4


def test_join_disjoint_values_is_empty():
    q = two_table_query()
    inst = Instance(q, (
        Relation(("A", "B"), {(0, 0): 1}),
        Relation(("B", "C"), {(1, 0): 1}),
    ))
    assert join_materialize(inst).entries == {}
    assert count(inst) == 0


def test_join_multiplies_frequencies():
    q = two_table_query()
    inst = Instance(q, (
        Relation(("A", "B"), {(0, 0): 3}),
        Relation(("B", "C"), {(0, 1): 5}),
    ))
    assert join_materialize(inst).entries == {(0, 0, 1): 15}
    assert count(inst) == 15


def test_join_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(20260815)
    for _ in range(300):
        inst = random_instance(rng)
        assert join_materialize(inst).entries == brute_force_join(inst)


def test_count_equals_join_total_on_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(200):
        inst = random_instance(rng)
        assert count(inst) == join_materialize(inst).total


def test_boundary_two_by_two(two_by_two):
    # each single relation groups by the shared attribute B
    assert boundary_query(two_by_two, {0}) == 2
    assert boundary_query(two_by_two, {1}) == 2
    # the full relation set has an empty boundary: one group, the whole join
    assert boundary_query(two_by_two, {0, 1}) == 4
    assert boundary_query(two_by_two, set()) == 1


def test_boundary_attrs_two_by_two(two_by_two):
    assert boundary_attrs(two_by_two.query, {0}) == ("B",)
    assert boundary_attrs(two_by_two.query, {1}) == ("B",)
    assert boundary_attrs(two_by_two.query, {0, 1}) == ()


def test_boundary_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(120):
        inst = random_instance(rng)
        m = inst.query.num_relations
        for bits in range(1, 2**m):
            members = {i for i in range(m) if bits >> i & 1}
            assert boundary_query(inst, members) == brute_force_boundary(inst, members), (
                f"boundary mismatch on {members} for {inst}")


def test_boundary_rejects_bad_indices(two_by_two):
    with pytest.raises(ValueError):
        boundary_query(two_by_two, {0, 5})


def test_degree_two_by_two(two_by_two):
    assert degree(two_by_two, 0, ("B",), (0,)) == 2
    assert degree(two_by_two, 1, ("B",), (0,)) == 2
    assert degree(two_by_two, 0, ("B",), (1,)) == 0
    assert degree(two_by_two, 0, ("A",), (0,)) == 1


def test_degree_is_additive():
    rng = np.random.default_rng(11)
    for _ in range(50):
        inst = random_instance(rng)
        i = int(rng.integers(inst.query.num_relations))
        schema = inst.query.relations[i]
        t = tuple(int(rng.integers(inst.query.domain_size(a))) for a in schema)
        f = int(rng.integers(1, 4))
        support = dict(inst.relations[i].support)
        support[t] = support.get(t, 0) + f
        relations = list(inst.relations)
        relations[i] = Relation(schema, support)
        grown = inst.replace_relations(relations)
        for a in schema:
            before = degree(inst, i, (a,), (t[schema.index(a)],))
            after = degree(grown, i, (a,), (t[schema.index(a)],))
            assert after == before + f
            # an untouched value of the same attribute keeps its degree
            other = (t[schema.index(a)] + 1) % inst.query.domain_size(a)
            if (other,) != (t[schema.index(a)],):
                assert degree(grown, i, (a,), (other,)) == degree(inst, i, (a,), (other,))


def test_degree_rejects_foreign_attribute(two_by_two):
    from joindp import AttributeNotInSchema
    with pytest.raises(AttributeNotInSchema):
        degree(two_by_two, 0, ("C",), (0,))


def _support_diff(a: Instance, b: Instance) -> list[tuple[int, tuple, int]]:
    out = []
    for i in range(a.query.num_relations):
        sa, sb = a.relations[i].support, b.relations[i].support
        for t in set(sa) | set(sb):
            d = sb.get(t, 0) - sa.get(t, 0)
            if d:
                out.append((i, t, d))
    return out


def test_neighbor_edit_distance_is_one():
    rng = np.random.default_rng(3)
    for seed in range(80):
        inst = random_instance(rng)
        other = neighbor(inst, seed)
        diff = _support_diff(inst, other)
        assert len(diff) == 1
        assert abs(diff[0][2]) == 1
        assert abs(other.input_size - inst.input_size) == 1


def test_neighbor_of_empty_instance_adds():
    q = two_table_query()
    empty = Instance(q, (Relation(("A", "B"), {}), Relation(("B", "C"), {})))
    for seed in range(10):
        grown = neighbor(empty, seed)
        assert grown.input_size == 1


def test_support_cap_is_enforced(two_by_two):
    with pytest.raises(SupportTooLarge):
        join_materialize(two_by_two, cap=3)


def test_encode_decode_roundtrip():
    q = JoinQuery(
        (Attribute("A", 3), Attribute("B", 2), Attribute("C", 4)),
        (("A", "B"), ("B", "C")),
    )
    for idx in range(q.joined_domain_size):
        t = q.decode(idx)
        assert q.encode(t) == idx
        assert all(0 <= v < q.domain_size(a) for v, a in zip(t, q.attribute_names))


def test_projection_index_array_matches_per_tuple_encoding():
    q = JoinQuery(
        (Attribute("A", 2), Attribute("B", 3), Attribute("C", 2)),
        (("A", "B"), ("B", "C")),
    )
    names = q.attribute_names
    for i in range(q.num_relations):
        proj = q.projection_index_array(i)
        schema = q.relations[i]
        for idx in range(q.joined_domain_size):
            t = q.decode(idx)
            expected = q.encode([t[names.index(a)] for a in schema], schema)
            assert proj[idx] == expected


def test_query_validation():
    with pytest.raises(ValueError):
        JoinQuery((Attribute("A", 2), Attribute("A", 2)), (("A",),))
    with pytest.raises(ValueError):
        JoinQuery((Attribute("A", 2), Attribute("B", 2)), (("A",),))  # B uncovered
    with pytest.raises(ValueError):
        JoinQuery((Attribute("A", 2),), (("A", "Z"),))
    with pytest.raises(ValueError):
        JoinQuery((Attribute("A", 2),), ())
    with pytest.raises(ValueError):
        Attribute("A", 0)


def test_relation_validation():
    with pytest.raises(ValueError):
        Relation(("A",), {(0, 1): 1})
    with pytest.raises(ValueError):
        Relation(("A",), {(0,): 0})
    q = two_table_query()
    with pytest.raises(ValueError):
        Instance(q, (Relation(("A", "B"), {(5, 0): 1}), Relation(("B", "C"), {})))
    with pytest.raises(ValueError):
        Instance(q, (Relation(("A", "B"), {}),))
