"""Enumeration of ring configurations with fixed particle content."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import comb
from typing import Iterator


@dataclass(frozen=True)
class SectorLabel:
    """Particle content of a two-species ring: m1 first-class, m2 second-class, L sites."""

    m1: int
    m2: int
    L: int

    def __post_init__(self):
        if self.L < 1 or self.m1 < 0 or self.m2 < 0:
            raise ValueError(f"invalid sector {self}")

    @property
    def is_basic(self) -> bool:
        return self.m1 >= 1 and self.m2 >= 1

    @property
    def size(self) -> int:
        return comb(self.m1 + self.L - 1, self.L - 1) * comb(self.m2 + self.L - 1, self.L - 1)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of ``parts`` non-negative integers summing to ``total``, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_sector(L: int, totals: tuple[int, ...]) -> list[tuple[tuple[int, ...], ...]]:
    """States of an n-species ring with given per-class totals.

    A state is a tuple of L local occupancy vectors.  Order is lexicographic in
    the per-class site lists, which is stable but otherwise arbitrary; compare
    vectors by configuration key, not by index.
    """
    per_class = [list(compositions(t, L)) for t in totals]
    states = []
    for combo in product(*per_class):
        states.append(tuple(tuple(c[i] for c in combo) for i in range(L)))
    return states


def cyclic_shift(config, k: int = 1):
    """Rotate a configuration so that site ``k`` becomes site 0."""
    k %= len(config)
    return tuple(config[k:]) + tuple(config[:k])
