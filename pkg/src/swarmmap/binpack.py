"""Cost of placing unit-volume tuples on agents treated as bins.

A used bin costs ``min(1, 1/(|N| * m))`` where ``|N|`` is its neighbor
count and ``m`` its free memory after packing; bins with no neighbors or
no free memory cost exactly 1, unused bins cost nothing.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .partitions import enumerate_partitions, partition_count

# above this many candidate partitions the exact DP is used instead
PARTITION_LIMIT = 500
BRUTE_FORCE_LIMIT = 10**6


def bin_term(neighbors: int, free: int) -> float:
    """Cost of one used bin."""
    if neighbors <= 0 or free <= 0:
        return 1.0
    return min(1.0, 1.0 / (neighbors * free))


@dataclass
class PackingInstance:
    volumes: Sequence[int]
    capacities: Sequence[int]
    neighbor_counts: Sequence[int]
    # assignment[k] = index of the bin holding item k
    assignment: Sequence[int]

    def __post_init__(self):
        if len(self.capacities) != len(self.neighbor_counts):
            raise ValueError("capacities and neighbor_counts differ in length")
        if len(self.assignment) != len(self.volumes):
            raise ValueError("every item needs exactly one bin")
        nbins = len(self.capacities)
        for k, b in enumerate(self.assignment):
            if not 0 <= b < nbins:
                raise ValueError(f"item {k} assigned to unknown bin {b}")
        for i, (load, cap) in enumerate(zip(self.loads, self.capacities)):
            if load > cap:
                raise ValueError(f"bin {i} holds {load} > capacity {cap}")

    @property
    def loads(self) -> list[int]:
        out = [0] * len(self.capacities)
        for v, b in zip(self.volumes, self.assignment):
            out[b] += v
        return out

    def cost(self) -> float:
        return assignment_cost(self)


def assignment_cost(instance: PackingInstance) -> float:
    # fsum: equal multisets of terms give bit-identical totals in any order
    return math.fsum(
        bin_term(n, cap - load)
        for load, cap, n in zip(instance.loads, instance.capacities, instance.neighbor_counts)
        if load > 0
    )


def load_cost(loads: Sequence[int], neighbor_counts: Sequence[int], capacity: int) -> float:
    """Cost of a per-bin load vector with uniform capacity."""
    terms = []
    for load, n in zip(loads, neighbor_counts):
        if load > capacity:
            raise ValueError(f"load {load} exceeds capacity {capacity}")
        if load > 0:
            terms.append(bin_term(n, capacity - load))
    return math.fsum(terms)


def _check(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> None:
    if item_count < 0 or capacity < 1:
        raise ValueError("need item_count >= 0 and capacity >= 1")
    if item_count > capacity * len(neighbor_counts):
        raise ValueError(
            f"{item_count} items exceed total capacity {capacity * len(neighbor_counts)}"
        )


def partition_pairing_cost(parts: Sequence[int], neighbor_counts: Sequence[int], capacity: int) -> float:
    """Least cost of putting each part on its own bin.

    Full parts cost 1 wherever they go, so they take the leftover bins.
    The other parts go to the best-connected bins, paired so that the
    smallest neighbor count meets the most free memory; when there are
    more of them than connected bins, the emptiest ones get the bins.
    """
    free = sorted((capacity - p for p in parts if p < capacity), reverse=True)
    n_full = len(parts) - len(free)
    connected = sorted((n for n in neighbor_counts if n > 0), reverse=True)
    k = min(len(free), len(connected))
    used = sorted(connected[:k])
    terms = [1.0] * (n_full + len(free) - k)
    terms += [bin_term(n, m) for n, m in zip(used, free[:k])]
    return math.fsum(terms)


def optimal_cost_partitions(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> float:
    _check(item_count, neighbor_counts, capacity)
    if item_count == 0:
        return 0.0
    return min(
        partition_pairing_cost(p.parts, neighbor_counts, capacity)
        for p in enumerate_partitions(item_count, max_parts=len(neighbor_counts), max_part=capacity)
    )


@lru_cache(maxsize=1024)
def _bin_costs(n: int, capacity: int) -> np.ndarray:
    return np.array([0.0] + [bin_term(n, capacity - load) for load in range(1, capacity + 1)])


def _dp_cost(item_count: int, neighbor_counts: Sequence[int], capacity: int, worst: bool) -> float:
    _check(item_count, neighbor_counts, capacity)
    bad = -np.inf if worst else np.inf
    reduce = np.max if worst else np.min
    best = np.full(item_count + 1, bad)
    best[0] = 0.0
    for n in neighbor_counts:
        # window row t holds best[t - capacity .. t]; pair it with loads capacity .. 0
        padded = np.concatenate([np.full(capacity, bad), best])
        windows = np.lib.stride_tricks.sliding_window_view(padded, capacity + 1)
        best = reduce(windows + _bin_costs(n, capacity)[::-1], axis=1)
    return float(best[item_count])


def optimal_cost_dp(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> float:
    """Exact minimum by dynamic programming over bins and item counts."""
    return _dp_cost(item_count, neighbor_counts, capacity, worst=False)


def max_cost(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> float:
    """Exact maximum over all feasible assignments."""
    return _dp_cost(item_count, neighbor_counts, capacity, worst=True)


def optimal_cost(
    item_count: int, neighbor_counts: Sequence[int], capacity: int, method: str = "auto"
) -> float:
    """Minimum cost of packing ``item_count`` unit tuples.

    ``method`` is "partitions", "dp" or "auto" (partitions unless there
    are more than ``PARTITION_LIMIT`` of them).
    """
    if method == "auto":
        # bin order does not matter, so equal multisets share one answer
        return _optimal_auto(item_count, tuple(sorted(neighbor_counts)), capacity)
    if method == "partitions":
        return optimal_cost_partitions(item_count, neighbor_counts, capacity)
    if method == "dp":
        return optimal_cost_dp(item_count, neighbor_counts, capacity)
    raise ValueError(f"unknown method {method!r}")


@lru_cache(maxsize=65536)
def _optimal_auto(item_count: int, neighbor_counts: tuple[int, ...], capacity: int) -> float:
    _check(item_count, neighbor_counts, capacity)
    small = item_count == 0 or (
        partition_count(item_count, max_parts=len(neighbor_counts), max_part=capacity) <= PARTITION_LIMIT
    )
    if small:
        return optimal_cost_partitions(item_count, neighbor_counts, capacity)
    return optimal_cost_dp(item_count, neighbor_counts, capacity)


def brute_force_costs(
    item_count: int, neighbor_counts: Sequence[int], capacity: int
) -> tuple[float, float]:
    """(min, max) cost over every item-to-bin assignment matrix."""
    _check(item_count, neighbor_counts, capacity)
    nbins = len(neighbor_counts)
    if nbins**item_count > BRUTE_FORCE_LIMIT:
        raise ValueError("instance too large to enumerate")
    lo, hi = float("inf"), float("-inf")
    for assignment in itertools.product(range(nbins), repeat=item_count):
        loads = [0] * nbins
        for b in assignment:
            loads[b] += 1
        if max(loads, default=0) > capacity:
            continue
        c = load_cost(loads, neighbor_counts, capacity)
        lo, hi = min(lo, c), max(hi, c)
    return lo, hi


def worst_case_loads(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> list[int]:
    """Loads of the pessimistic placement used as the upper reference curve.

    One tuple on every isolated bin, then as many connected bins as
    possible filled to capacity, the remainder on the least-connected
    connected bin still free. Tuples that do not fit anywhere else top up
    the isolated bins.
    """
    _check(item_count, neighbor_counts, capacity)
    loads = [0] * len(neighbor_counts)
    left = item_count
    isolated = [i for i, n in enumerate(neighbor_counts) if n <= 0]
    # connected bins, least connected first
    connected = sorted((i for i, n in enumerate(neighbor_counts) if n > 0), key=lambda i: (neighbor_counts[i], i))
    for i in isolated:
        if left == 0:
            break
        loads[i] = 1
        left -= 1
    n_fill = min(left // capacity, len(connected))
    # fill the best connected bins and keep the least connected for the remainder
    for i in connected[len(connected) - n_fill:]:
        loads[i] = capacity
        left -= capacity
    if left and len(connected) > n_fill:
        put = min(left, capacity)
        loads[connected[0]] += put
        left -= put
    for i in isolated:
        if left == 0:
            break
        put = min(left, capacity - loads[i])
        loads[i] += put
        left -= put
    for i in connected:
        if left == 0:
            break
        put = min(left, capacity - loads[i])
        loads[i] += put
        left -= put
    return loads


def worst_cost(item_count: int, neighbor_counts: Sequence[int], capacity: int) -> float:
    return load_cost(worst_case_loads(item_count, neighbor_counts, capacity), neighbor_counts, capacity)
