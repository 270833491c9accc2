"""Probabilists' Hermite polynomials and the Cameron-Martin basis.

``H_n`` here is the probabilists' polynomial (``H_2(t) = t**2 - 1``), whose
squared norm under the standard Gaussian is ``n!``.  The physicists' version
differs by a factor ``2**(n/2)`` and rescaled argument; it is never used.

Gaussian draws come from numpy's ``PCG64`` bit generator and the
``Generator.standard_normal`` (ziggurat) transform.  A stream is identified by
``(seed, stream)``; distinct streams are independent children of the same
``SeedSequence`` so parallel workers never overlap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .multiindex import MultiIndex, UnsupportedIndex, factorial

GENERATOR_ID = f"numpy.random.PCG64+standard_normal/numpy-{np.__version__}"


def hermite_h(n: int, t):
    """``H_n(t)`` by the recursion ``H_{n+1} = t H_n - n H_{n-1}``.

    Works for Python scalars (exact for ints and Fractions) and numpy arrays.
    """
    if n < 0:
        raise ValueError("Hermite order must be nonnegative")
    prev = t * 0 + 1
    if n == 0:
        return prev
    cur = t
    for k in range(1, n):
        prev, cur = cur, t * cur - k * prev
    return cur


def hermite_table(n_max: int, t: np.ndarray) -> np.ndarray:
    """Rows ``H_0(t) .. H_{n_max}(t)`` for an array ``t``."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty((n_max + 1,) + t.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = t
    for k in range(1, n_max):
        out[k + 1] = t * out[k] - k * out[k - 1]
    return out


@dataclass(frozen=True)
class GaussianSample:
    """One draw of the active coordinates ``xi_1 .. xi_K``."""

    coords: tuple[float, ...]
    rng_seed: int = 0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.coords):
            raise ValueError("non-finite Gaussian coordinate")

    def __len__(self) -> int:
        return len(self.coords)


def _check_support(a: MultiIndex, K: int) -> None:
    if a.max_position > K:
        raise UnsupportedIndex(f"{a} needs {a.max_position} coordinates, sample has {K}")


def xi_alpha(a: MultiIndex, s: GaussianSample) -> float:
    """``xi_alpha = prod_k H_{a_k}(xi_k) / sqrt(a_k!)`` over stored entries."""
    _check_support(a, len(s))
    out = 1.0
    for k, v in a.entries:
        out *= hermite_h(v, s.coords[k - 1]) / math.sqrt(math.factorial(v))
    return out


def hep_alpha(a: MultiIndex, s: GaussianSample) -> float:
    """Unnormalized basis ``Hep_alpha = sqrt(alpha!) xi_alpha``."""
    _check_support(a, len(s))
    out = 1.0
    for k, v in a.entries:
        out *= hermite_h(v, s.coords[k - 1])
    return out


def basis_matrix(alphas: list[MultiIndex], xs: np.ndarray) -> np.ndarray:
    """``xi_alpha`` for every index (rows) at every sample row of ``xs``.

    ``xs`` has shape ``(n, K)``; the result has shape ``(len(alphas), n)``.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    n, K = xs.shape
    deg = max((a.order for a in alphas), default=0)
    tables = [hermite_table(deg, xs[:, k]) for k in range(K)]
    out = np.ones((len(alphas), n))
    for i, a in enumerate(alphas):
        _check_support(a, K)
        for k, v in a.entries:
            out[i] *= tables[k - 1][v]
        out[i] /= math.sqrt(factorial(a))
    return out


def rng(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_array(K: int, n_samples: int, seed: int, stream: int = 0) -> np.ndarray:
    """``(n_samples, K)`` standard normal draws for stream ``(seed, stream)``."""
    if K < 0 or n_samples < 1:
        raise ValueError("need K >= 0 and n_samples >= 1")
    return rng(seed, stream).standard_normal((n_samples, K))


def sample(K: int, n_samples: int, seed: int, stream: int = 0) -> Iterator[GaussianSample]:
    """Reproducible stream of :class:`GaussianSample` values."""
    xs = sample_array(K, n_samples, seed, stream)
    for row in xs:
        yield GaussianSample(tuple(float(x) for x in row), seed)


def sample_chunks(K: int, n_samples: int, seed: int, chunk: int = 200_000) -> Iterator[np.ndarray]:
    """The same draws as :func:`sample_array`, delivered in memory-bounded chunks."""
    g = rng(seed, 0)
    left = n_samples
    while left > 0:
        m = min(chunk, left)
        yield g.standard_normal((m, K))
        left -= m
