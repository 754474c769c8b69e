"""Hard-instance generators: closed-form counts, lift identities, censuses."""

import math

import numpy as np
import pytest

from conftest import two_table_query
from joindp import (
    InfeasibleDelta,
    InfeasibleSpec,
    InfeasibleVector,
    NonPower,
    PrivacyParams,
    RngStream,
    SingleTable,
    SupportTooLarge,
    WrongArity,
    count,
    degree,
    error_envelope_two_table,
    eval_instance,
    f_lower,
    f_upper,
    gen_bucket_conforming,
    gen_gap,
    gen_multi_table_lb,
    gen_staircase,
    gen_two_table_lb,
    join_materialize,
    lift_single_table_query,
    local_sensitivity,
    partition_two_table,
)
from joindp.relational import DEFAULT_SUPPORT_CAP, Attribute, JoinQuery


def star_3() -> JoinQuery:
    return JoinQuery(
        (Attribute("A", 2), Attribute("B0", 2), Attribute("B1", 2)),
        (("A",), ("A", "B0"), ("A", "B1")),
    )


def dyadic_weights(rng: np.random.Generator, size: int) -> np.ndarray:
    """Multiples of 1/8 in [-1, 1]: products and sums stay exact in float64."""
    return rng.integers(-8, 9, size=size) / 8.0


def random_table(rng: np.random.Generator, size: int, max_freq: int = 3) -> SingleTable:
    freqs = [int(v) for v in rng.integers(0, max_freq + 1, size=size)]
    if sum(freqs) == 0:
        freqs[-1] = 1
    return SingleTable(tuple(freqs))


def test_f_lower_pin():
    assert f_lower(2**16, 1.0) == 2.0


def test_f_upper_pin():
    assert f_upper(2**16, 2**4, 1.0, 2.0**-4) == 8.0


def test_f_upper_unit_factors_reduce_to_floor():
    for dom, eps in ((2**16, 1.0), (2**10, 0.25), (4096, 3.0)):
        assert f_upper(dom, 2, eps, 0.5) == f_lower(dom, eps)


def test_envelope_zero_count():
    assert error_envelope_two_table(0.0, 3.0, 1.0, 1.0) == 4.0
    assert error_envelope_two_table(0.0, 3.0, 2.0, 1.5) == 5.0 * math.sqrt(2.0) * 1.5


def test_envelope_pin():
    env = error_envelope_two_table(27.0, 3.0, 1.0, 1.0)
    assert env == math.sqrt(108.0) + 4.0
    assert abs(env - 14.392304845413264) < 1e-12


def test_envelope_doubling_count_scales_first_term():
    for c in (1.0, 27.0, 400.0):
        tail = error_envelope_two_table(0.0, 3.0, 1.5, 2.0)
        lo = error_envelope_two_table(c, 3.0, 1.5, 2.0) - tail
        hi = error_envelope_two_table(2.0 * c, 3.0, 1.5, 2.0) - tail
        assert abs(hi - math.sqrt(2.0) * lo) < 1e-12 * hi


def test_two_table_lb_pin():
    inst = gen_two_table_lb(9, 3)
    assert count(inst) == 27
    assert local_sensitivity(inst) == 3
    assert inst.meta["expected_count"] == 27
    assert inst.meta["expected_sensitivity"] == 3
    assert inst.meta["nominal_domain_sizes"]["B"] == 81


def test_two_table_lb_degree_one_is_identity_embedding():
    table = SingleTable((2, 1, 3))
    inst = gen_two_table_lb(table, 1)
    assert count(inst) == table.total == 6
    assert local_sensitivity(inst) == 1
    rng = np.random.default_rng(3)
    w = dyadic_weights(rng, 3)
    q = lift_single_table_query(inst, w)
    assert eval_instance(q, inst) == table.answer(w)


def test_two_table_lb_rejects_bad_degree():
    with pytest.raises(InfeasibleDelta):
        gen_two_table_lb(4, 0)


def test_two_table_lb_support_cap():
    with pytest.raises(SupportTooLarge):
        gen_two_table_lb(DEFAULT_SUPPORT_CAP, 2)


def test_lift_identity_two_table_bit_exact():
    rng = np.random.default_rng(11)
    for _ in range(100):
        table = random_table(rng, int(rng.integers(1, 6)))
        deg = int(rng.integers(1, 5))
        inst = gen_two_table_lb(table, deg)
        w = dyadic_weights(rng, table.size)
        lifted = lift_single_table_query(inst, w)
        assert eval_instance(lifted, inst) == deg * table.answer(w)


def test_lift_identity_multi_table_bit_exact():
    rng = np.random.default_rng(12)
    for _ in range(100):
        table = random_table(rng, int(rng.integers(1, 5)))
        deg = int(rng.integers(1, 10))
        inst = gen_multi_table_lb(star_3(), table, deg)
        w = dyadic_weights(rng, table.size)
        lifted = lift_single_table_query(inst, w)
        assert eval_instance(lifted, inst) == inst.meta["amplification"] * table.answer(w)


def test_lift_rejects_mismatched_weights_and_foreign_instances():
    inst = gen_two_table_lb(4, 2)
    with pytest.raises(InfeasibleSpec):
        lift_single_table_query(inst, np.zeros(5))
    with pytest.raises(InfeasibleSpec):
        lift_single_table_query(gen_staircase(3), np.zeros(3))


def test_multi_table_star_amplification():
    inst = gen_multi_table_lb(star_3(), SingleTable((1, 2)), 4)
    assert inst.meta["amplification"] == 4
    assert count(inst) == 4 * 3 == inst.meta["expected_count"]
    assert local_sensitivity(inst) == 4


def test_multi_table_rounds_degree_down_to_power():
    inst = gen_multi_table_lb(star_3(), SingleTable((2, 1)), 7)
    assert inst.meta["requested_degree"] == 7
    assert inst.meta["amplification"] == 4
    assert count(inst) == 12
    assert local_sensitivity(inst) == 4


def test_multi_table_two_relations_reduces_to_two_table_block():
    multi = gen_multi_table_lb(two_table_query(), SingleTable((1,) * 5), 3)
    direct = gen_two_table_lb(5, 3)
    assert multi.query == direct.query
    assert [r.support for r in multi.relations] == [r.support for r in direct.relations]


def test_multi_table_errors():
    with pytest.raises(InfeasibleDelta):
        gen_multi_table_lb(star_3(), SingleTable((1,)), 0)
    with pytest.raises(InfeasibleSpec):
        gen_multi_table_lb(star_3(), SingleTable((0, 0)), 2)
    single = JoinQuery((Attribute("A", 2),), (("A",),))
    with pytest.raises(WrongArity):
        gen_multi_table_lb(single, SingleTable((1,)), 2)
    flat = JoinQuery(
        (Attribute("A", 2), Attribute("B", 2)), (("A", "B"), ("B", "A")))
    with pytest.raises(InfeasibleSpec):
        gen_multi_table_lb(flat, SingleTable((1, 1)), 2)
    disconnected = JoinQuery(
        (Attribute("A", 2), Attribute("B", 2), Attribute("C", 2)),
        (("A", "B"), ("C",)),
    )
    with pytest.raises(InfeasibleSpec):
        gen_multi_table_lb(disconnected, SingleTable((1, 1)), 2)


def test_staircase_pins():
    inst = gen_staircase(4)
    assert count(inst) == 30 == inst.meta["expected_count"]
    assert local_sensitivity(inst) == 4 == inst.meta["expected_sensitivity"]
    assert inst.input_size == 20 == inst.meta["expected_input_size"]


def test_staircase_single_level():
    inst = gen_staircase(1)
    table = join_materialize(inst)
    assert table.total == 1
    assert inst.input_size == 2


def test_staircase_input_size_formula():
    for s in range(1, 8):
        assert gen_staircase(s).input_size == s * (s + 1)


def test_staircase_rejects_nonpositive():
    with pytest.raises(InfeasibleSpec):
        gen_staircase(0)


def test_gap_pins():
    inst = gen_gap(8)
    assert inst.meta["class_sizes"] == (64, 8, 1)
    assert inst.meta["class_degrees"] == (1, 2, 4)
    assert count(inst) == 112 == inst.meta["expected_count"]
    assert local_sensitivity(inst) == 4
    assert inst.input_size == 168 == inst.meta["expected_input_size"]
    assert local_sensitivity(gen_gap(64)) == 16


def test_gap_rejects_non_powers_of_eight():
    for k in (3, 10, 16):
        with pytest.raises(NonPower):
            gen_gap(k)


def test_gap_support_cap():
    with pytest.raises(SupportTooLarge):
        gen_gap(8**6)


def expected_gap_census(inst) -> np.ndarray:
    return np.concatenate([
        np.full(size, deg, dtype=np.float64)
        for size, deg in zip(inst.meta["class_sizes"], inst.meta["class_degrees"])
    ])


def test_gap_degree_census_exhaustive_small():
    inst = gen_gap(8)
    expect = expected_gap_census(inst)
    for side in (0, 1):
        for b, want in enumerate(expect):
            assert degree(inst, side, ("B",), (b,)) == want


def test_gap_degree_census_exhaustive_large():
    inst = gen_gap(64)
    expect = expected_gap_census(inst)
    dom_b = inst.query.domain_size("B")
    for side in (0, 1):
        support = inst.relations[side].support
        pos = inst.query.relations[side].index("B")
        bcol = np.array([t[pos] for t in support])
        freqs = np.array(list(support.values()), dtype=np.float64)
        census = np.bincount(bcol, weights=freqs, minlength=dom_b)
        assert np.array_equal(census, expect)
    for side in (0, 1):
        edge = np.cumsum((0,) + inst.meta["class_sizes"])
        for i, deg in enumerate(inst.meta["class_degrees"]):
            assert degree(inst, side, ("B",), (int(edge[i]),)) == deg
            assert degree(inst, side, ("B",), (int(edge[i + 1]) - 1,)) == deg


def test_bucket_conforming_two_bucket_pin():
    inst = gen_bucket_conforming(1.0, {1: 8, 3: 64})
    assert inst.meta["plan"] == {
        1: {"degree": 2, "values": 4},
        3: {"degree": 8, "values": 8},
    }
    assert count(inst) == 72 == inst.meta["expected_count"]
    assert local_sensitivity(inst) == 8


def test_bucket_conforming_census_under_zero_noise_partition():
    inst = gen_bucket_conforming(1.0, {1: 8, 3: 64})
    params = PrivacyParams(math.log(2.0**10), 2.0**-10)
    assert params.lam == 1.0
    part = partition_two_table(inst, params, RngStream(0, zero_noise=True))
    assert set(part.sub_instances) == {1, 3}
    assert count(part.sub_instances[1]) == 8
    assert count(part.sub_instances[3]) == 64


def test_bucket_conforming_single_bucket_is_lb_block():
    block = gen_bucket_conforming(1.0, {2: 12})
    direct = gen_two_table_lb(4, 3)
    assert block.query == direct.query
    assert [r.support for r in block.relations] == [r.support for r in direct.relations]


def test_bucket_conforming_errors():
    with pytest.raises(InfeasibleVector):
        gen_bucket_conforming(1.0, {})
    with pytest.raises(InfeasibleVector):
        gen_bucket_conforming(1.0, {0: 4})
    with pytest.raises(InfeasibleVector):
        gen_bucket_conforming(1.0, {1: 7})


def test_generator_meta_matches_computed():
    instances = [
        gen_two_table_lb(SingleTable((2, 0, 3)), 2),
        gen_two_table_lb(5, 1),
        gen_multi_table_lb(star_3(), SingleTable((1, 2, 1)), 5),
        gen_multi_table_lb(two_table_query(), SingleTable((3, 1)), 4),
        gen_staircase(5),
        gen_gap(8),
        gen_bucket_conforming(1.0, {1: 8, 3: 64}),
        gen_bucket_conforming(2.0, {2: 24}),
    ]
    for inst in instances:
        assert count(inst) == inst.meta["expected_count"]
        assert local_sensitivity(inst) == inst.meta["expected_sensitivity"]
        if "expected_input_size" in inst.meta:
            assert inst.input_size == inst.meta["expected_input_size"]
