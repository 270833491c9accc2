"""Sparse truncated chaos expansions with finite-dimensional coefficients.

The coefficient spaces are modelled as ``R^dX`` (``scalar`` shape) or as
dense ``dX x dU`` matrices (``tensor`` shape, an element of ``X (x) U``).  All
inner products are Euclidean/Frobenius.  Sums over indices are correctly
rounded, so they do not depend on the order in which terms are visited.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import hermite
from .multiindex import (
    ZERO,
    MultiIndex,
    UnsupportedIndex,
    enumerate_box,
    factorial,
    power_weight,
    two_n_weight,
)
from .summation import exact_product, fsum_rows


class ShapeMismatch(ValueError):
    """Coefficient shapes of the operands are incompatible."""


@dataclass(frozen=True)
class CoefShape:
    kind: str  # "scalar" or "tensor"
    dx: int
    du: int | None = None

    def __post_init__(self):
        if self.kind not in ("scalar", "tensor"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.dx < 1:
            raise ValueError("dx must be >= 1")
        if self.kind == "tensor" and (self.du is None or self.du < 1):
            raise ValueError("tensor shape needs du >= 1")
        if self.kind == "scalar" and self.du is not None:
            raise ValueError("scalar shape takes no du")

    @classmethod
    def scalar(cls, dx: int) -> CoefShape:
        return cls("scalar", dx)

    @classmethod
    def tensor(cls, dx: int, du: int) -> CoefShape:
        return cls("tensor", dx, du)

    @property
    def array_shape(self) -> tuple[int, ...]:
        return (self.dx,) if self.kind == "scalar" else (self.dx, self.du)

    @property
    def size(self) -> int:
        return int(np.prod(self.array_shape))

    def to_json(self) -> dict:
        d = {"kind": self.kind, "dx": self.dx}
        if self.kind == "tensor":
            d["du"] = self.du
        return d

    @classmethod
    def from_json(cls, d: Mapping) -> CoefShape:
        return cls(d["kind"], int(d["dx"]), None if d.get("du") is None else int(d["du"]))


@dataclass(frozen=True)
class TruncationBox:
    """Indices with support in ``1..K`` and total degree ``<= N``."""

    K: int
    N: int

    def __post_init__(self):
        if self.K < 0 or self.N < 0:
            raise ValueError("box needs K >= 0 and N >= 0")

    def __contains__(self, a: MultiIndex) -> bool:
        return a.max_position <= self.K and a.order <= self.N

    def indices(self) -> list[MultiIndex]:
        return enumerate_box(self.K, self.N)

    def union(self, other: TruncationBox) -> TruncationBox:
        return TruncationBox(max(self.K, other.K), max(self.N, other.N))

    def to_json(self) -> dict:
        return {"k": self.K, "n": self.N}

    @classmethod
    def from_json(cls, d: Mapping) -> TruncationBox:
        return cls(int(d["k"]), int(d["n"]))

    @classmethod
    def parse(cls, text: str) -> TruncationBox:
        k, n = text.split(",")
        return cls(int(k), int(n))


class ChaosExpansion:
    """Immutable sparse map ``MultiIndex -> coefficient array`` inside a box.

    Coefficients that are exactly zero are dropped; nothing else is pruned.
    """

    __slots__ = ("shape", "box", "_terms")

    def __init__(
        self,
        shape: CoefShape,
        terms: Mapping[MultiIndex, object] | Iterable[tuple[MultiIndex, object]],
        box: TruncationBox,
    ):
        items = terms.items() if isinstance(terms, Mapping) else terms
        store: dict[MultiIndex, np.ndarray] = {}
        want = shape.array_shape
        for a, c in items:
            arr = np.array(c, dtype=np.float64)
            if arr.shape != want:
                raise ShapeMismatch(f"coefficient at {a} has shape {arr.shape}, expected {want}")
            if a not in box:
                raise UnsupportedIndex(f"{a} lies outside box K={box.K}, N={box.N}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite coefficient at {a}")
            if a in store:
                raise ValueError(f"duplicate index {a}")
            if np.any(arr != 0.0):
                arr.setflags(write=False)
                store[a] = arr
        ordered = dict(sorted(store.items(), key=lambda kv: kv[0].sort_key()))
        self.shape = shape
        self.box = box
        self._terms = MappingProxyType(ordered)

    @property
    def terms(self) -> Mapping[MultiIndex, np.ndarray]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __contains__(self, a: MultiIndex) -> bool:
        return a in self._terms

    def coef(self, a: MultiIndex) -> np.ndarray:
        c = self._terms.get(a)
        return np.zeros(self.shape.array_shape) if c is None else c

    def support(self) -> list[MultiIndex]:
        return list(self._terms)

    def max_order(self) -> int:
        return max((a.order for a in self._terms), default=0)

    def max_position(self) -> int:
        return max((a.max_position for a in self._terms), default=0)

    def equals(self, other: ChaosExpansion) -> bool:
        """Bitwise equality of shape, support and coefficients."""
        if self.shape != other.shape or self.support() != other.support():
            return False
        return all(np.array_equal(c, other._terms[a]) for a, c in self._terms.items())

    def max_abs_diff(self, other: ChaosExpansion) -> float:
        keys = set(self._terms) | set(other._terms)
        return max((float(np.max(np.abs(self.coef(a) - other.coef(a)))) for a in keys), default=0.0)

    def restricted(self, box: TruncationBox) -> ChaosExpansion:
        return ChaosExpansion(self.shape, ((a, c) for a, c in self._terms.items() if a in box), box)

    def with_box(self, box: TruncationBox) -> ChaosExpansion:
        return ChaosExpansion(self.shape, self._terms, box)

    def scaled(self, s: float) -> ChaosExpansion:
        return ChaosExpansion(self.shape, ((a, s * c) for a, c in self._terms.items()), self.box)

    def __add__(self, other: ChaosExpansion) -> ChaosExpansion:
        if self.shape != other.shape:
            raise ShapeMismatch(f"{self.shape} + {other.shape}")
        box = self.box.union(other.box)
        keys = set(self._terms) | set(other._terms)
        return ChaosExpansion(self.shape, ((a, self.coef(a) + other.coef(a)) for a in keys), box)

    def as_tensor(self) -> ChaosExpansion:
        """View a ``scalar(dU)`` expansion as ``R (x) U``, i.e. ``tensor(1, dU)``."""
        if self.shape.kind != "scalar":
            raise ShapeMismatch("as_tensor expects a scalar-shaped expansion")
        shape = CoefShape.tensor(1, self.shape.dx)
        return ChaosExpansion(shape, ((a, c[None, :]) for a, c in self._terms.items()), self.box)

    def __repr__(self) -> str:
        return f"ChaosExpansion({self.shape.kind}{self.shape.array_shape}, {len(self)} terms, box={self.box})"

    # serialization -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "shape": self.shape.to_json(),
            "box": self.box.to_json(),
            "terms": [{"alpha": a.to_json(), "coef": c.tolist()} for a, c in self._terms.items()],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> ChaosExpansion:
        shape = CoefShape.from_json(d["shape"])
        box = TruncationBox.from_json(d["box"])
        return cls(shape, ((MultiIndex.from_json(t["alpha"]), t["coef"]) for t in d["terms"]), box)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), allow_nan=False)

    @classmethod
    def loads(cls, text: str) -> ChaosExpansion:
        return cls.from_json(json.loads(text))


def zero_expansion(shape: CoefShape, box: TruncationBox) -> ChaosExpansion:
    return ChaosExpansion(shape, {}, box)


def constant(c, box: TruncationBox | None = None) -> ChaosExpansion:
    """Deterministic element ``c * xi_(0)`` with scalar shape."""
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    return ChaosExpansion(CoefShape.scalar(c.shape[0]), {ZERO: c}, box or TruncationBox(0, 0))


def basis_element(a: MultiIndex, dx: int = 1, value: float = 1.0) -> ChaosExpansion:
    """``value * xi_a`` as a scalar-shaped expansion (all components equal)."""
    return ChaosExpansion(
        CoefShape.scalar(dx), {a: np.full(dx, value)}, TruncationBox(a.max_position, a.order)
    )


def white_noise(K: int) -> ChaosExpansion:
    """Truncated white noise ``sum_{k<=K} xi_k u_k`` with values in ``R^K``."""
    if K < 1:
        raise ValueError("white noise needs K >= 1")
    eye = np.eye(K)
    return ChaosExpansion(
        CoefShape.scalar(K), {MultiIndex.unit(k + 1): eye[k] for k in range(K)}, TruncationBox(K, 1)
    )


# weights -------------------------------------------------------------------


class WeightSystem:
    """Rule ``alpha -> r_alpha > 0``."""

    def weight(self, a: MultiIndex) -> float:
        raise NotImplementedError

    def __call__(self, a: MultiIndex) -> float:
        return self.weight(a)

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SequencePower(WeightSystem):
    """``r_alpha = q^(p*alpha) = prod_k q_k ** (p * alpha_k)``."""

    q: tuple[float, ...]
    p: float = 1.0

    def __init__(self, q: Sequence[float], p: float = 1.0):
        q = tuple(float(x) for x in q)
        if not all(x > 0 and math.isfinite(x) for x in q):
            raise ValueError("sequence weights need positive finite q_k")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", float(p))

    def weight(self, a: MultiIndex) -> float:
        return power_weight(self.q, self.p, a)

    def describe(self) -> dict:
        return {"kind": "sequence", "q": list(self.q), "p": self.p}


@dataclass(frozen=True)
class Kondratiev(WeightSystem):
    """``r_alpha = (alpha!)^(rho/2) (2N)^(ell*alpha)`` with ``rho`` in [-1, 1]."""

    rho: float
    ell: float

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    def weight(self, a: MultiIndex) -> float:
        f = factorial(a)
        fw = float(f) ** (self.rho / 2) if f < 2**1000 else math.exp(self.rho / 2 * math.log(f))
        return fw * two_n_weight(self.ell, a)

    def describe(self) -> dict:
        return {"kind": "kondratiev", "rho": self.rho, "ell": self.ell}


class Custom(WeightSystem):
    """Explicit weights; indices missing from the table fall back to ``default``."""

    def __init__(self, table: Mapping[MultiIndex, float] | Callable[[MultiIndex], float], default: float | None = None):
        self._fn = table if callable(table) else None
        self._table = None if callable(table) else dict(table)
        self.default = default

    def weight(self, a: MultiIndex) -> float:
        if self._fn is not None:
            r = float(self._fn(a))
        elif a in self._table:
            r = float(self._table[a])
        elif self.default is not None:
            r = float(self.default)
        else:
            raise UnsupportedIndex(f"no weight for {a}")
        if not (r > 0 and math.isfinite(r)):
            raise ValueError(f"weight at {a} is not positive and finite: {r}")
        return r

    def describe(self) -> dict:
        if self._table is None:
            return {"kind": "custom", "rule": getattr(self._fn, "__name__", "callable")}
        return {"kind": "custom", "weights": [[a.to_json(), r] for a, r in self._table.items()]}

    @classmethod
    def min_of(cls, w1: WeightSystem, w2: WeightSystem) -> Custom:
        """``r_alpha = min(r1_alpha, r2_alpha)``: both spaces embed in the result."""
        rule = lambda a: min(w1.weight(a), w2.weight(a))  # noqa: E731
        rule.__name__ = "min"
        return cls(rule)


class Unit(WeightSystem):
    def weight(self, a: MultiIndex) -> float:
        return 1.0

    def describe(self) -> dict:
        return {"kind": "unit"}


UNIT = Unit()


def weight(w: WeightSystem, a: MultiIndex) -> float:
    return w.weight(a)


def weighted_norm_sq(v: ChaosExpansion, w: WeightSystem = UNIT) -> float:
    terms = []
    for a, c in v.terms.items():
        x = w.weight(a) * c.ravel()
        terms.extend((x * x).tolist())
    return math.fsum(terms)


def weighted_norm(v: ChaosExpansion, w: WeightSystem = UNIT) -> float:
    """``sqrt(sum_alpha r_alpha^2 |v_alpha|^2)`` (Euclidean/Frobenius inside)."""
    return math.sqrt(weighted_norm_sq(v, w))


def duality_pairing(u: ChaosExpansion, v: ChaosExpansion) -> float:
    """``sum_alpha (u_alpha, v_alpha)`` over the shared support, correctly rounded."""
    if u.shape != v.shape:
        raise ShapeMismatch(f"pairing {u.shape} with {v.shape}")
    parts = [
        exact_product(c.ravel(), v.terms[a].ravel()).ravel()
        for a, c in u.terms.items()
        if a in v.terms
    ]
    if not parts:
        return 0.0
    return float(fsum_rows(np.concatenate(parts)[None, :])[0])


def evaluate(v: ChaosExpansion, s: hermite.GaussianSample) -> np.ndarray:
    """``sum_alpha v_alpha xi_alpha(s)``."""
    if v.max_position() > len(s):
        raise UnsupportedIndex(f"expansion uses {v.max_position()} coordinates, sample has {len(s)}")
    acc = [c * hermite.xi_alpha(a, s) for a, c in v.terms.items()]
    if not acc:
        return np.zeros(v.shape.array_shape)
    stacked = np.stack(acc).reshape(len(acc), -1)
    return fsum_rows(stacked.T).reshape(v.shape.array_shape)


def evaluate_batch(v: ChaosExpansion, xs: np.ndarray) -> np.ndarray:
    """Vectorised evaluation at sample rows ``xs`` (shape ``(n, K)``).

    Returns shape ``(n, *coef_shape)``.
    """
    xs = np.atleast_2d(xs)
    if v.max_position() > xs.shape[1]:
        raise UnsupportedIndex(f"expansion uses {v.max_position()} coordinates, samples have {xs.shape[1]}")
    alphas = v.support()
    if not alphas:
        return np.zeros((xs.shape[0],) + v.shape.array_shape)
    basis = hermite.basis_matrix(alphas, xs)  # (m, n)
    coefs = np.stack([v.terms[a].ravel() for a in alphas])  # (m, size)
    return (basis.T @ coefs).reshape((xs.shape[0],) + v.shape.array_shape)


def suggest_weights(f: ChaosExpansion) -> Custom:
    """Weights ``(2N)^(-alpha) / (1 + |f_alpha|)`` making ``f`` square summable."""
    table = {}
    for a in f.box.indices():
        table[a] = two_n_weight(-1.0, a) / (1.0 + float(np.linalg.norm(f.coef(a))))
    return Custom(table)


def random_expansion(
    rng: np.random.Generator,
    shape: CoefShape,
    box: TruncationBox,
    w: WeightSystem | None = None,
    density: float = 1.0,
) -> ChaosExpansion:
    """Coefficients i.i.d. uniform on [-1, 1] divided by ``w``'s weight.

    Every index then contributes O(1) to the ``w``-weighted squared norm.
    """
    terms = {}
    for a in box.indices():
        c = rng.uniform(-1.0, 1.0, size=shape.array_shape)
        keep = rng.random() < density
        if keep:
            terms[a] = c / (w.weight(a) if w is not None else 1.0)
    return ChaosExpansion(shape, terms, box)


def from_hep(coefs: ChaosExpansion) -> ChaosExpansion:
    """Convert unnormalized-basis coefficients (``sum c_a Hep_a``) to the xi-basis."""
    return ChaosExpansion(
        coefs.shape, ((a, math.sqrt(factorial(a)) * c) for a, c in coefs.terms.items()), coefs.box
    )


def to_hep(v: ChaosExpansion) -> ChaosExpansion:
    """Convert xi-basis coefficients to unnormalized-basis coefficients."""
    return ChaosExpansion(
        v.shape, ((a, c / math.sqrt(factorial(a))) for a, c in v.terms.items()), v.box
    )


def load(path) -> ChaosExpansion:
    with open(path) as fh:
        return ChaosExpansion.loads(fh.read())


def save(v: ChaosExpansion, path) -> None:
    with open(path, "w") as fh:
        fh.write(v.dumps())
        fh.write("\n")
