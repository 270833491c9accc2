"""Finitely supported multi-indices and their exact combinatorics.

A multi-index is stored sparsely as strictly increasing ``(position, value)``
pairs with 1-based positions and values >= 1.  The zero index ``(0)`` is the
empty tuple.  Factorials and binomials are exact Python integers; square roots
are only taken by callers at the final float conversion.
"""

from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

# Exact reduced ratio of nonnegative big integers.
BigRatio = Fraction


class UnsupportedIndex(ValueError):
    """A multi-index uses a position outside the admissible range."""


class _NotDominated:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotDominated"

    def __bool__(self) -> bool:
        return False


#: Returned by :func:`sub_checked` when the subtrahend is not dominated.
NotDominated = _NotDominated()


class MultiIndex:
    """Immutable sparse multi-index ``alpha = (alpha_1, alpha_2, ...)``."""

    __slots__ = ("_entries", "_order", "_hash")

    def __init__(self, entries: Iterable[tuple[int, int]] = ()):
        items = tuple((int(k), int(a)) for k, a in entries)
        last = 0
        for k, a in items:
            if k <= last:
                raise ValueError(f"positions must be >= 1 and strictly increasing: {items}")
            if a < 1:
                raise ValueError(f"stored values must be >= 1: {items}")
            last = k
        self._entries = items
        self._order = sum(a for _, a in items)
        self._hash = hash(items)

    @classmethod
    def from_dense(cls, values: Sequence[int]) -> MultiIndex:
        """Build from a dense list whose first element is position 1."""
        for a in values:
            if a < 0:
                raise ValueError(f"negative entry in {values!r}")
        return cls((k + 1, a) for k, a in enumerate(values) if a)

    @classmethod
    def unit(cls, k: int, times: int = 1) -> MultiIndex:
        """``times * eps(k)``; ``eps(0)`` is the zero index."""
        if k == 0 or times == 0:
            return ZERO
        return cls([(k, times)])

    @property
    def entries(self) -> tuple[tuple[int, int], ...]:
        return self._entries

    @property
    def order(self) -> int:
        """Total degree ``|alpha|``."""
        return self._order

    def __abs__(self) -> int:
        return self._order

    @property
    def max_position(self) -> int:
        return self._entries[-1][0] if self._entries else 0

    def __getitem__(self, k: int) -> int:
        for pos, a in self._entries:
            if pos == k:
                return a
            if pos > k:
                break
        return 0

    def dense(self, length: int | None = None) -> list[int]:
        n = self.max_position if length is None else length
        if n < self.max_position:
            raise UnsupportedIndex(f"{self} does not fit in {n} positions")
        out = [0] * n
        for k, a in self._entries:
            out[k - 1] = a
        return out

    def is_zero(self) -> bool:
        return not self._entries

    def sort_key(self) -> tuple:
        """Graded order: degree first, then the dense vector compared from
        position 1 with larger values first (so eps(1) precedes eps(2))."""
        return (self._order, tuple((k, -a) for k, a in self._entries))

    def __lt__(self, other: MultiIndex) -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: MultiIndex) -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: MultiIndex) -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: MultiIndex) -> bool:
        return self.sort_key() >= other.sort_key()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiIndex):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return self._hash

    def __add__(self, other: MultiIndex) -> MultiIndex:
        return add(self, other)

    def __repr__(self) -> str:
        if not self._entries:
            return "(0)"
        parts = [f"eps({k})" if a == 1 else f"{a}eps({k})" for k, a in self._entries]
        return "+".join(parts)

    def to_json(self) -> list[list[int]]:
        return [[k, a] for k, a in self._entries]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[int]]) -> MultiIndex:
        return cls((k, a) for k, a in data)


ZERO = MultiIndex()


def add(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    if not b._entries:
        return a
    if not a._entries:
        return b
    acc = dict(a._entries)
    for k, v in b._entries:
        acc[k] = acc.get(k, 0) + v
    return MultiIndex(sorted(acc.items()))


def dominates(a: MultiIndex, b: MultiIndex) -> bool:
    """True when ``b <= a`` componentwise."""
    if b._order > a._order:
        return False
    ad = dict(a._entries)
    return all(ad.get(k, 0) >= v for k, v in b._entries)


def sub_checked(a: MultiIndex, b: MultiIndex) -> MultiIndex | _NotDominated:
    """``a - b`` if ``b <= a``, otherwise the :data:`NotDominated` sentinel."""
    if not b._entries:
        return a
    if b._order > a._order:
        return NotDominated
    acc = dict(a._entries)
    for k, v in b._entries:
        rest = acc.get(k, 0) - v
        if rest < 0:
            return NotDominated
        if rest:
            acc[k] = rest
        else:
            del acc[k]
    return MultiIndex(sorted(acc.items()))


def factorial(a: MultiIndex) -> int:
    out = 1
    for _, v in a._entries:
        out *= math.factorial(v)
    return out


def binomial(a: MultiIndex, b: MultiIndex) -> int:
    """Product of entrywise binomials; zero unless ``b <= a``."""
    ad = dict(a._entries)
    out = 1
    for k, v in b._entries:
        top = ad.get(k, 0)
        if v > top:
            return 0
        out *= math.comb(top, v)
    return out


def box_size(K: int, N: int) -> int:
    return math.comb(N + K, K)


def _compositions(K: int, N: int) -> Iterator[tuple[int, ...]]:
    # dense vectors of length K with sum <= N
    if K == 0:
        yield ()
        return
    for head in range(N + 1):
        for tail in _compositions(K - 1, N - head):
            yield (head,) + tail


def enumerate_box(K: int, N: int) -> list[MultiIndex]:
    """All indices with support in ``1..K`` and degree ``<= N``, canonical order."""
    if K < 0 or N < 0:
        raise ValueError("K and N must be nonnegative")
    out = [MultiIndex.from_dense(d) for d in _compositions(K, N)]
    out.sort(key=MultiIndex.sort_key)
    return out


def enumerate_degree(K: int, n: int) -> list[MultiIndex]:
    """Indices of degree exactly ``n`` with support in ``1..K``, canonical order."""
    out = [
        MultiIndex.from_dense(c)
        for c in itertools.product(range(n + 1), repeat=K)
        if sum(c) == n
    ]
    out.sort(key=MultiIndex.sort_key)
    return out


def power_weight(q: Sequence[float], ell: float, a: MultiIndex) -> float:
    """``prod_k q_k ** (ell * a_k)`` for a finite positive sequence ``q``."""
    if a.max_position > len(q):
        raise UnsupportedIndex(f"{a} needs {a.max_position} weights, got {len(q)}")
    out = 1.0
    for k, v in a._entries:
        out *= float(q[k - 1]) ** (ell * v)
    return out


def two_n_weight(ell: float, a: MultiIndex) -> float:
    """``(2N)^(ell*a) = prod_k (2k) ** (ell * a_k)``."""
    out = 1.0
    for k, v in a._entries:
        out *= float(2 * k) ** (ell * v)
    return out


def sqrt_binomial_crossover() -> int:
    return 2**63


def sqrt_binomial(top: MultiIndex, bottom: MultiIndex) -> float:
    """``sqrt(C(top, bottom))`` from the exact integer.

    Above 2**63 the value comes from a log-gamma sum over entries instead,
    so huge binomials never have to be materialised as floats.
    """
    c = binomial(top, bottom)
    if c < 2**63:
        return math.sqrt(c)
    return sqrt_binomial_lgamma(top, bottom)


def sqrt_binomial_lgamma(top: MultiIndex, bottom: MultiIndex) -> float:
    bd = dict(bottom._entries)
    if not dominates(top, bottom):
        return 0.0
    acc = math.fsum(
        math.lgamma(a + 1) - math.lgamma(bd.get(k, 0) + 1) - math.lgamma(a - bd.get(k, 0) + 1)
        for k, a in top._entries
    )
    return math.exp(0.5 * acc)


def parse_index(text: str) -> MultiIndex:
    """Parse ``"0"``, ``"2,0,1"`` (dense) or JSON pairs ``"[[1,2],[3,1]]"``."""
    text = text.strip()
    if text.startswith("["):
        return MultiIndex.from_json(json.loads(text))
    if text in ("", "0", "(0)"):
        return ZERO
    return MultiIndex.from_dense([int(t) for t in text.split(",")])
