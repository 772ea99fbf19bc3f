"""Integer partitions and exact multinomial coefficients."""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass
from math import factorial


@dataclass(frozen=True)
class Partition:
    """An integer partition, kept in both part and multiplicity notation.

    ``parts`` is nonincreasing; ``multiplicities[j - 1]`` is the number of
    parts equal to ``j`` for ``j = 1 .. largest part``.
    """

    parts: tuple[int, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("a partition needs at least one part")
        if any(p <= 0 for p in self.parts):
            raise ValueError(f"parts must be positive: {self.parts}")
        if any(a < b for a, b in zip(self.parts, self.parts[1:])):
            raise ValueError(f"parts must be nonincreasing: {self.parts}")

    @classmethod
    def from_multiplicities(cls, multiplicities: Sequence[int]) -> "Partition":
        parts: list[int] = []
        for j in range(len(multiplicities), 0, -1):
            parts.extend([j] * multiplicities[j - 1])
        return cls(tuple(parts))

    @property
    def n(self) -> int:
        return sum(self.parts)

    @property
    def length(self) -> int:
        return len(self.parts)

    @property
    def largest(self) -> int:
        return self.parts[0]

    @property
    def multiplicities(self) -> tuple[int, ...]:
        k = [0] * self.largest
        for p in self.parts:
            k[p - 1] += 1
        return tuple(k)

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)


def _parts_desc(n: int, max_part: int, max_parts: int | None) -> Iterator[tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    if max_parts == 0:
        return
    # the remaining parts can hold at most max_part * max_parts
    if max_parts is not None and n > max_part * max_parts:
        return
    rest_parts = None if max_parts is None else max_parts - 1
    for first in range(min(n, max_part), 0, -1):
        for tail in _parts_desc(n - first, first, rest_parts):
            yield (first,) + tail


def enumerate_partitions(
    n: int, *, max_parts: int | None = None, max_part: int | None = None
) -> Iterator[Partition]:
    """Yield every partition of ``n`` exactly once.

    Order is descending lexicographic by parts, so ``(n,)`` comes first and
    ``(1, ..., 1)`` last. ``max_parts`` bounds the length and ``max_part``
    bounds the largest part (both inclusive).
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    top = n if max_part is None else min(n, max_part)
    if top < 1:
        return
    for parts in _parts_desc(n, top, max_parts):
        yield Partition(parts)


def partition_count(n: int, *, max_parts: int | None = None, max_part: int | None = None) -> int:
    """Number of partitions of ``n`` with the given bounds, by dynamic programming.

    Counts without enumerating; used to decide whether enumeration is cheap.
    """
    if n < 0:
        return 0
    kmax = n if max_parts is None else max_parts
    pmax = n if max_part is None else max_part
    # ways[j][s]: partitions of s into exactly j parts drawn from the values seen so far
    ways = [[0] * (n + 1) for _ in range(kmax + 1)]
    ways[0][0] = 1
    for part in range(1, min(pmax, n) + 1):
        for used in range(1, kmax + 1):
            row, prev = ways[used], ways[used - 1]
            for s in range(part, n + 1):
                row[s] += prev[s - part]
    return sum(ways[used][n] for used in range(kmax + 1))


def multinomial_coefficient(parts: Sequence[int]) -> int:
    """Exact ``(sum parts)! / prod(part!)``."""
    if any(p < 0 for p in parts):
        raise ValueError(f"multinomial parts must be nonnegative: {tuple(parts)}")
    result = factorial(sum(parts))
    for p in parts:
        result //= factorial(p)
    return result
