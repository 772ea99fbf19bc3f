import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmmap.binpack import (
    PackingInstance,
    assignment_cost,
    bin_term,
    brute_force_costs,
    load_cost,
    max_cost,
    optimal_cost,
    worst_case_loads,
    worst_cost,
)


def test_single_bin_example():
    inst = PackingInstance([1] * 5, [10], [2], [0] * 5)
    assert assignment_cost(inst) == pytest.approx(0.1)


def test_full_and_isolated_bins_cost_one():
    assert bin_term(3, 0) == 1.0
    assert bin_term(0, 7) == 1.0
    assert load_cost([4], [3], 4) == 1.0
    assert PackingInstance([1, 1], [5, 5], [0, 0], [0, 1]).cost() == 2.0


def test_empty_assignment_costs_nothing():
    assert PackingInstance([], [5, 5], [1, 2], []).cost() == 0.0
    assert optimal_cost(0, [1, 2], 5) == 0.0
    assert worst_cost(0, [1, 2], 5) == 0.0


def test_term_is_capped_at_one():
    assert bin_term(1, 1) == 1.0
    assert bin_term(1, 2) == 0.5


def test_instance_rejects_overfull_bin():
    with pytest.raises(ValueError):
        PackingInstance([1, 1, 1], [2], [1], [0, 0, 0])
    with pytest.raises(ValueError):
        PackingInstance([1], [2], [1], [3])
    with pytest.raises(ValueError):
        PackingInstance([1, 1], [2], [1], [0])


def test_single_item_goes_to_best_connected_bin():
    assert optimal_cost(1, [3, 1], 10) == pytest.approx(1 / 27)


def test_too_many_items_is_an_error():
    for fn in (optimal_cost, worst_cost, max_cost):
        with pytest.raises(ValueError):
            fn(11, [1, 1], 5)


def test_unknown_method():
    with pytest.raises(ValueError):
        optimal_cost(1, [1], 2, method="greedy")


def _small_instances():
    for nbins in range(1, 5):
        for counts in itertools.product(range(4), repeat=nbins):
            if list(counts) != sorted(counts):
                continue
            for cap in range(1, 5):
                for items in range(0, min(6, cap * nbins) + 1):
                    yield items, list(counts), cap


def test_all_routes_match_brute_force_on_small_instances():
    n = 0
    for items, counts, cap in _small_instances():
        lo, hi = brute_force_costs(items, counts, cap) if items else (0.0, 0.0)
        for method in ("partitions", "dp", "auto"):
            assert optimal_cost(items, counts, cap, method=method) == pytest.approx(lo, abs=1e-12), (items, counts, cap)
        assert max_cost(items, counts, cap) == pytest.approx(hi, abs=1e-12)
        assert lo - 1e-12 <= worst_cost(items, counts, cap) <= hi + 1e-12
        n += 1
    assert n > 1000


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=1, max_size=12), st.integers(1, 10), st.data())
def test_partition_and_dp_routes_agree(counts, cap, data):
    items = data.draw(st.integers(0, min(25, cap * len(counts))))
    a = optimal_cost(items, counts, cap, method="partitions")
    b = optimal_cost(items, counts, cap, method="dp")
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=1, max_size=10), st.integers(1, 10), st.data())
def test_adding_an_item_never_lowers_the_optimum(counts, cap, data):
    items = data.draw(st.integers(0, cap * len(counts) - 1))
    assert optimal_cost(items + 1, counts, cap) >= optimal_cost(items, counts, cap) - 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 8), min_size=1, max_size=10), st.integers(1, 10), st.randoms(), st.data())
def test_costs_ignore_bin_order(counts, cap, rnd, data):
    items = data.draw(st.integers(0, cap * len(counts)))
    shuffled = list(counts)
    rnd.shuffle(shuffled)
    for fn in (optimal_cost, worst_cost, max_cost):
        assert fn(items, shuffled, cap) == pytest.approx(fn(items, counts, cap), abs=1e-12)
    assert optimal_cost(items, shuffled, cap, method="partitions") == pytest.approx(
        optimal_cost(items, counts, cap, method="partitions"), abs=1e-12
    )


def test_worst_case_construction_examples():
    # isolated bins get one tuple each, then full bins, then the least connected one
    assert worst_case_loads(2, [0, 0, 3], 4) == [1, 1, 0]
    assert worst_case_loads(9, [0, 2, 5, 1], 4) == [1, 4, 4, 0]
    assert worst_case_loads(10, [0, 2, 5, 1], 4) == [1, 4, 4, 1]
    assert worst_case_loads(3, [2, 5, 1], 4) == [0, 0, 3]
    assert worst_cost(4, [0, 0, 0, 0, 0], 3) == 4.0


def test_worst_case_loads_place_everything():
    for items, counts, cap in _small_instances():
        loads = worst_case_loads(items, counts, cap)
        assert sum(loads) == items and max(loads) <= cap


def test_worst_case_construction_is_not_always_the_maximum():
    # spreading a few tuples over weakly connected agents costs more than piling them up
    counts, cap = [2, 2, 2], 10
    assert worst_cost(3, counts, cap) == pytest.approx(1 / 14)
    assert max_cost(3, counts, cap) == pytest.approx(3 / 18)
