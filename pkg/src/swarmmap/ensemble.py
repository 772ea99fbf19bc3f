"""Plurality voting and the exact probability that it picks the right class.

Votes are independent; each is correct with probability ``p`` and otherwise
lands uniformly on one of the ``c - 1`` wrong classes. Ties are broken
uniformly at random, so a ``k``-way tie that includes the right class
succeeds with probability ``1/k``.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np

from .partitions import Partition, enumerate_partitions, multinomial_coefficient

__all__ = [
    "Partition",
    "VoteTally",
    "enumerate_partitions",
    "multinomial_coefficient",
    "pmf_phi",
    "preimage_count",
    "success_given_partition",
    "ensemble_accuracy",
    "ensemble_coefficients",
    "brute_force_ensemble",
    "plurality_vote",
    "min_votes_for_target",
]

BRUTE_FORCE_CAP = 10**8
_CHUNK = 1 << 20


@dataclass(frozen=True)
class VoteTally:
    """Vote counts per class; index 0 is class 1, the correct one."""

    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) < 2:
            raise ValueError("a tally needs at least two classes")
        if any(z < 0 for z in self.counts):
            raise ValueError(f"vote counts must be nonnegative: {self.counts}")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def c(self) -> int:
        return len(self.counts)

    @classmethod
    def from_labels(cls, labels: Iterable[int], c: int) -> "VoteTally":
        counts = [0] * c
        for lab in labels:
            if not 1 <= lab <= c:
                raise ValueError(f"class id {lab} outside 1..{c}")
            counts[lab - 1] += 1
        return cls(tuple(counts))


def _check_domain(n: int, p, c: int) -> None:
    if n < 1:
        raise ValueError(f"vote count must be >= 1, got {n}")
    if c < 2:
        raise ValueError(f"class count must be >= 2, got {c}")
    if not 0 <= p <= 1:
        raise ValueError(f"accuracy must lie in [0, 1], got {p}")


def pmf_phi(tally: VoteTally | Sequence[int], p, c: int | None = None):
    """Multinomial probability of observing ``tally`` when class 1 is correct."""
    if not isinstance(tally, VoteTally):
        tally = VoteTally(tuple(tally))
    c = tally.c if c is None else c
    if c != tally.c:
        raise ValueError(f"tally has {tally.c} classes but c={c}")
    if not 0 <= p <= 1:
        raise ValueError(f"accuracy must lie in [0, 1], got {p}")
    z1 = tally.counts[0]
    wrong = (1 - p) / (c - 1)
    return multinomial_coefficient(tally.counts) * p**z1 * wrong ** (tally.n - z1)


def preimage_count(xi: Partition, c: int) -> int:
    """Number of vote vectors with the correct class on top that have shape ``xi``.

    Choose which ``len(xi) - 1`` wrong classes receive votes, then how the
    remaining part sizes are spread over them; one copy of the largest part
    is already taken by the correct class.
    """
    omega = xi.length
    if omega > c:
        raise ValueError(f"partition with {omega} parts is infeasible for {c} classes")
    k = list(xi.multiplicities)
    k[xi.largest - 1] -= 1
    return comb(c - 1, omega - 1) * multinomial_coefficient(k)


def success_given_partition(xi: Partition) -> Fraction:
    return Fraction(1, xi.multiplicities[xi.largest - 1])


@lru_cache(maxsize=1024)
def ensemble_coefficients(n: int, c: int) -> tuple[tuple[int, Fraction], ...]:
    """Exact ``(correct votes, coefficient)`` pairs of the closed form.

    ``p_ens = sum(coef * p**j * ((1 - p)/(c - 1))**(n - j))``. Partitions with
    more parts than classes cannot occur and are skipped, which extends the
    formula past ``c >= n``.
    """
    if n < 1 or c < 2:
        raise ValueError(f"need n >= 1 and c >= 2, got n={n}, c={c}")
    by_top: dict[int, Fraction] = {}
    for xi in enumerate_partitions(n):
        omega = xi.length
        if omega > c:
            continue
        weight = (
            multinomial_coefficient(xi.parts)
            * comb(c, omega)
            * multinomial_coefficient(xi.multiplicities)
        )
        by_top[xi.largest] = by_top.get(xi.largest, Fraction(0)) + Fraction(weight, c)
    return tuple(sorted(by_top.items()))


def ensemble_accuracy(n: int, p, c: int):
    """Probability that plurality voting over ``n`` votes names the true class.

    Exact when ``p`` is a ``Fraction``; otherwise coefficients are exact and
    only the final sum is floating point.
    """
    _check_domain(n, p, c)
    exact = isinstance(p, (int, Fraction))
    q = (1 - Fraction(p) if exact else 1.0 - p) / (c - 1)
    total = Fraction(0) if exact else 0.0
    for top, coef in ensemble_coefficients(n, c):
        term = p**top * q ** (n - top)
        total += coef * term if exact else float(coef) * term
    return total if exact else min(1.0, max(0.0, total))


@lru_cache(maxsize=128)
def _credit_table(n: int, c: int) -> tuple[tuple[tuple[int, int], int], ...]:
    """Count all ``c**n`` ordered vote sequences by (#correct, tie width).

    Only sequences where the correct class (label 0) is among the most voted
    are kept.
    """
    total = c**n
    table: Counter = Counter()
    powers = c ** np.arange(n, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // powers[None, :]) % c
        counts = np.stack([(digits == lab).sum(axis=1) for lab in range(c)], axis=1)
        top = counts.max(axis=1)
        correct = counts[:, 0]
        keep = correct == top
        width = (counts == top[:, None]).sum(axis=1)
        pairs, freq = np.unique(
            np.stack([correct[keep], width[keep]], axis=1), axis=0, return_counts=True
        )
        for (k, w), f in zip(pairs.tolist(), freq.tolist()):
            table[(k, w)] += f
    return tuple(sorted(table.items()))


def brute_force_ensemble(n: int, p, c: int):
    """Ensemble accuracy by enumerating every ordered sequence of ``n`` votes.

    Each sequence is weighted by its probability and credited ``1/width``
    when the correct class is among the ``width`` tied leaders. Independent
    of the partition formula; used as its oracle.
    """
    _check_domain(n, p, c)
    if c**n > BRUTE_FORCE_CAP:
        raise ValueError(f"{c}**{n} sequences exceeds the enumeration cap {BRUTE_FORCE_CAP}")
    exact = isinstance(p, (int, Fraction))
    q = (1 - Fraction(p) if exact else 1.0 - p) / (c - 1)
    total = Fraction(0) if exact else 0.0
    for (k, w), count in _credit_table(n, c):
        weight = p**k * q ** (n - k)
        total += Fraction(count, w) * weight if exact else count / w * weight
    return total


def plurality_vote(labels: Sequence[Hashable], rng: np.random.Generator):
    """Most frequent label; ties are broken uniformly at random with ``rng``."""
    if len(labels) == 0:
        raise ValueError("cannot vote over an empty label sequence")
    counts = Counter(labels)
    best = max(counts.values())
    # sort so the tie-break depends only on the rng state, not on input order
    tied = sorted(lab for lab, cnt in counts.items() if cnt == best)
    if len(tied) == 1:
        return tied[0]
    return tied[int(rng.integers(len(tied)))]


def min_votes_for_target(p, c: int, target, n_max: int) -> int | None:
    """Smallest ``n <= n_max`` whose ensemble accuracy reaches ``target``."""
    if not 0 < target <= 1:
        raise ValueError(f"target must lie in (0, 1], got {target}")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    for n in range(1, n_max + 1):
        if ensemble_accuracy(n, p, c) >= target:
            return n
    return None
