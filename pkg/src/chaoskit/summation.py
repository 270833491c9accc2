"""Error-free transforms and correctly rounded sums.

Every operator coefficient in this package is the correctly rounded value of
an exact sum of exact products of float factors.  The result is therefore
independent of summation order, worker count and term grouping, which is what
makes the white-noise and Wick identities hold bit for bit.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dekker split of each entry into two 26-bit halves."""
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b) -> tuple[np.ndarray, np.ndarray]:
    """``a*b == p + e`` exactly, elementwise (no overflow assumed)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a * b
    ah, al = split(a)
    bh, bl = split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def exact_product(*factors) -> np.ndarray:
    """Expansion of the exact product of broadcastable float factors.

    Returns an array whose leading axis holds ``2**(n-1)`` components that
    sum exactly to the real product of the ``n`` factors.
    """
    parts = [np.asarray(factors[0], dtype=np.float64)]
    for f in factors[1:]:
        nxt = []
        for x in parts:
            p, e = two_prod(x, f)
            nxt.append(p)
            nxt.append(e)
        parts = nxt
    return np.stack(np.broadcast_arrays(*parts))


def fsum_rows(rows: np.ndarray) -> np.ndarray:
    """Correctly rounded sum of every row of a 2-D array."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[1] == 0:
        return np.zeros(rows.shape[0])
    return np.fromiter(map(math.fsum, rows.tolist()), dtype=np.float64, count=rows.shape[0])


def exact_sum(terms: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Correctly rounded entrywise sum over the leading axes of ``terms``.

    ``terms`` has shape ``(..., *shape)``; all leading axes are summed.
    """
    flat = np.asarray(terms, dtype=np.float64).reshape(-1, int(np.prod(shape, dtype=int)))
    return fsum_rows(flat.T).reshape(shape)


def exact_dot(x, y) -> float:
    """Correctly rounded inner product of two float vectors."""
    return math.fsum(exact_product(np.ravel(x), np.ravel(y)).ravel().tolist())


def fsum(values: Iterable[float]) -> float:
    return math.fsum(values)


class CompensatedSum:
    """Running Neumaier-compensated accumulator for streamed partial sums."""

    __slots__ = ("total", "comp")

    def __init__(self) -> None:
        self.total = 0.0
        self.comp = 0.0

    def add(self, x: float) -> None:
        t = self.total + x
        if abs(self.total) >= abs(x):
            self.comp += (self.total - t) + x
        else:
            self.comp += (x - t) + self.total
        self.total = t

    @property
    def value(self) -> float:
        return self.total + self.comp
