"""Executable checks for the series identities, norm inequalities, duality
relations and Monte Carlo consistency of the chaos operators.

Every inequality check returns a :class:`BoundReport`.  A report passes when
``lhs <= rhs * (1 + 1e-9)``.  Where a printed constant differs from the one the
argument actually delivers, the report passes on the proven constant and keeps
the printed form in ``metadata`` (``printed_constant``, ``printed_rhs``,
``printed_pass``) so the discrepancy stays visible.

Norm names used below:

* ``seq(q)``      weights ``q^alpha``; ``seq(q)^-1`` weights ``q^-alpha``
* ``kond(rho, l)`` weights ``(alpha!)^(rho/2) (2N)^(l alpha)``
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import hermite
from .chaos import (
    UNIT,
    ChaosExpansion,
    CoefShape,
    Kondratiev,
    SequencePower,
    TruncationBox,
    WeightSystem,
    duality_pairing,
    evaluate_batch,
    random_expansion,
    weighted_norm,
    white_noise,
)
from .multiindex import (
    MultiIndex,
    binomial,
    enumerate_box,
    factorial,
    sub_checked,
)
from .operators import malliavin_d, ornstein_uhlenbeck, skorokhod

REL_TOL = 1e-9
SERIES_TOL = 1e-8
DUALITY_TOL = 1e-10


class WeightViolation(ValueError):
    """A weight sequence violates the hypothesis of the check (e.g. q_k <= 1)."""


class InvalidP(ValueError):
    """Smoothness shift p must exceed 1/2."""


class RelationViolated(ValueError):
    """Weight sequences do not satisfy the required algebraic relation."""


# reports ---------------------------------------------------------------------


@dataclass
class BoundReport:
    theorem_id: str
    lhs: float
    constant: float
    rhs: float
    metadata: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + REL_TOL * self.rhs

    def to_json(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "lhs": self.lhs,
            "constant": self.constant,
            "rhs": self.rhs,
            "margin": self.margin,
            "pass": self.passed,
            "metadata": self.metadata,
        }


@dataclass
class SeriesReport:
    identity_id: str
    partial_sums: list[float]
    closed_form: float
    converged: bool
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.converged and all(
            b >= a for a, b in zip(self.partial_sums, self.partial_sums[1:])
        )

    def to_json(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


@dataclass
class CheckReport:
    """Generic two-value comparison (duality, Monte Carlo, trends)."""

    check_id: str
    passed: bool
    values: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"check_id": self.check_id, "pass": self.passed, "values": self.values, "metadata": self.metadata}


def _norm(v: ChaosExpansion, w: WeightSystem) -> float:
    return weighted_norm(v, w)


# constants -------------------------------------------------------------------


def product_inv_one_minus(x: Sequence[float]) -> float:
    """``prod_k 1/(1 - x_k)`` for a finite sequence with ``0 <= x_k < 1``."""
    return math.exp(-math.fsum(math.log1p(-t) for t in x))


def two_n_product_bounds(p: float, M: int = 4096) -> tuple[float, float]:
    """Certified bracket for ``prod_{k>=1} 1/(1 - (2k)^(-2p))``, ``p > 1/2``.

    The first ``M`` factors are summed in log form; the remaining tail obeys
    ``-log(1-x) <= x/(1-x)`` and ``sum_{k>M} (2k)^(-2p) <= 2^(-2p) M^(1-2p)/(2p-1)``.
    """
    if p <= 0.5:
        raise InvalidP(f"p must exceed 1/2, got {p}")
    xs = [(2.0 * k) ** (-2 * p) for k in range(1, M + 1)]
    head = -math.fsum(math.log1p(-t) for t in xs)
    x_next = (2.0 * (M + 1)) ** (-2 * p)
    tail = (2.0 ** (-2 * p)) * M ** (1 - 2 * p) / (2 * p - 1) / (1 - x_next)
    lo = math.exp(head) * (1 - 1e-12)
    hi = math.exp(head + tail) * (1 + 1e-12)
    return lo, hi


def two_n_product_finite(p: float, K: int) -> float:
    return product_inv_one_minus([(2.0 * k) ** (-2 * p) for k in range(1, K + 1)])


def box_product_sum(factor: Callable[[int, int], float], K: int, N: int) -> float:
    """``sum_{alpha in box(K, N)} prod_k factor(k, alpha_k)`` by a degree DP.

    Equivalent to direct summation over the box but linear in ``K`` instead of
    exponential.
    """
    poly = [0.0] * (N + 1)
    poly[0] = 1.0
    for k in range(1, K + 1):
        col = [factor(k, n) for n in range(N + 1)]
        nxt = [0.0] * (N + 1)
        for d in range(N + 1):
            if poly[d] == 0.0:
                continue
            for n in range(N + 1 - d):
                nxt[d + n] += poly[d] * col[n]
        poly = nxt
    return math.fsum(poly)


def box_direct_sum(term: Callable[[MultiIndex], float], K: int, N: int) -> float:
    return math.fsum(term(a) for a in enumerate_box(K, N))


# series identities -------------------------------------------------------------


def _series(identity_id, sums, closed, boxes, tol=SERIES_TOL, **meta) -> SeriesReport:
    gap = abs(sums[-1] - closed) / abs(closed) if sums else math.inf
    meta.update({"boxes": [b.to_json() for b in boxes], "final_rel_gap": gap, "tol": tol})
    return SeriesReport(identity_id, sums, closed, gap < tol, meta)


def check_exp_sum(r: Sequence[float], boxes: Sequence[TruncationBox]) -> SeriesReport:
    """``sum_alpha r^alpha / alpha! = exp(sum_k r_k)`` over growing boxes."""
    r = [float(x) for x in r]
    sums = []
    for b in boxes:
        K = min(b.K, len(r))
        sums.append(box_product_sum(lambda k, n: r[k - 1] ** n / math.factorial(n), K, b.N))
    closed = math.exp(math.fsum(r))
    return _series("exp-sum", sums, closed, boxes, r=r)


def check_geom_sum(
    r: Sequence[float], a: MultiIndex, boxes: Sequence[TruncationBox]
) -> SeriesReport:
    """``sum_b C(a+b, b) r^b = prod_k 1/(1-r_k) * (1-r)^(-a)``."""
    r = [float(x) for x in r]
    if any(not 0 <= x < 1 for x in r):
        raise WeightViolation("geometric sum needs 0 <= r_k < 1")
    if a.max_position > len(r):
        raise WeightViolation(f"{a} uses positions beyond len(r)={len(r)}")
    ad = a.dense(len(r))
    sums = []
    for b in boxes:
        K = min(b.K, len(r))
        sums.append(box_product_sum(lambda k, n: math.comb(ad[k - 1] + n, n) * r[k - 1] ** n, K, b.N))
    closed = product_inv_one_minus(r) * math.prod((1 - x) ** (-ak) for x, ak in zip(r, ad))
    return _series("geom-sum", sums, closed, boxes, r=r, alpha=a.to_json())


def check_two_n_sum(ell: float, boxes: Sequence[TruncationBox]) -> SeriesReport:
    """``sum_alpha (2N)^(-ell alpha)`` is finite for ``ell > 1``.

    Partial sums over boxes of dimension ``K`` are compared with the finite
    product over ``k <= K``; the infinite product is reported with its
    certified bracket and must dominate every partial sum.
    """
    if ell <= 1:
        raise InvalidP(f"need ell > 1, got {ell}")
    sums = [
        box_product_sum(lambda k, n: (2.0 * k) ** (-ell * n), b.K, b.N) for b in boxes
    ]
    K = boxes[-1].K
    closed = two_n_product_finite(ell / 2, K)
    lo, hi = two_n_product_bounds(ell / 2)
    rep = _series("two-n-sum", sums, closed, boxes, ell=ell, infinite_lower=lo, infinite_upper=hi)
    rep.converged = rep.converged and all(s <= hi for s in sums)
    return rep


def check_binom_sum(r: Sequence[float], a: MultiIndex) -> SeriesReport:
    """``sum_{b<=a} C(a, b) r^b = (1+r)^a``; exact rational and float comparison."""
    r = [float(x) for x in r]
    if a.max_position > len(r):
        raise WeightViolation(f"{a} uses positions beyond len(r)={len(r)}")
    subs = [b for b in enumerate_box(a.max_position, a.order) if sub_checked(a, b)]
    rq = [Fraction(x) for x in r]

    def mono(b, vals):
        out = 1
        for k, v in b.entries:
            out *= vals[k - 1] ** v
        return out

    exact_lhs = sum(binomial(a, b) * mono(b, rq) for b in subs)
    exact_rhs = mono(a, [1 + x for x in rq])
    float_lhs = math.fsum(binomial(a, b) * mono(b, r) for b in subs)
    closed = float(exact_rhs)
    gap = abs(float_lhs - closed) / abs(closed)
    return SeriesReport(
        "binom-sum",
        [float_lhs],
        closed,
        gap < 1e-12 and exact_lhs == exact_rhs,
        {"r": r, "alpha": a.to_json(), "exact_equal": exact_lhs == exact_rhs, "final_rel_gap": gap, "tol": 1e-12},
    )


# derivative well-definedness bounds ------------------------------------------------


def _ratio_sups(w: WeightSystem, box: TruncationBox) -> tuple[dict, dict]:
    """``b_a = sup_b r_{a+b}/r_b`` and ``c_a = sup_b r_b/r_{a+b}`` over pairs inside the box."""
    idx = box.indices()
    r = {a: w.weight(a) for a in idx}
    b_sup, c_sup = {}, {}
    for a in idx:
        bs, cs = [], []
        for b in idx:
            ab = a + b
            if ab in box:
                bs.append(r[ab] / r[b])
                cs.append(r[b] / r[ab])
        b_sup[a] = max(bs)
        c_sup[a] = max(cs)
    return b_sup, c_sup


def check_md_sufficient(
    u: ChaosExpansion, v: ChaosExpansion, w: WeightSystem, box: TruncationBox | None = None
) -> list[BoundReport]:
    """Per-index bounds on ``|(D_u v)_a|^2`` under the two ratio conditions.

    Part 1: ``<= 2^|a| b_a^2 (sum 2^|b| r_b^-2 |v_b|^2)(sum r_b^2 |u_b|^2)``.
    Part 2: ``<= 2^|a| c_a^2 (sum r_b^2 |v_b|^2)(sum 2^|b| r_b^-2 |u_b|^2)``.
    The sups ``b_a``, ``c_a`` are taken over the box containing the operands.
    Each report carries the index with the largest lhs/rhs, so it passes only
    if every index does.
    """
    box = box or u.box.union(v.box)
    d = malliavin_d(u, v)
    b_sup, c_sup = _ratio_sups(w, box)

    def s(expn, fn):
        return math.fsum(fn(a) * float(np.sum(c * c)) for a, c in expn.terms.items())

    v1 = s(v, lambda a: 2.0 ** a.order / w.weight(a) ** 2)
    u1 = s(u, lambda a: w.weight(a) ** 2)
    v2 = s(v, lambda a: w.weight(a) ** 2)
    u2 = s(u, lambda a: 2.0 ** a.order / w.weight(a) ** 2)
    reports = []
    for part, sup, prod in (("1", b_sup, v1 * u1), ("2", c_sup, v2 * u2)):
        worst = None
        for a in d.box.indices():
            if a not in box:
                continue
            lhs = float(np.sum(d.coef(a) ** 2))
            const = 2.0 ** a.order * sup[a] ** 2
            rhs = const * prod
            ratio = lhs / rhs if rhs > 0 else (math.inf if lhs > 0 else 0.0)
            if worst is None or ratio > worst[0]:
                worst = (ratio, a, lhs, const, rhs)
        _, a, lhs, const, rhs = worst
        rep = BoundReport(
            f"derivative-coefficient/part{part}",
            lhs,
            const,
            rhs,
            {"worst_alpha": a.to_json(), "box": box.to_json(), "weights": w.describe()},
        )
        reports.append(rep)
    return reports


# sequence-space bounds -----------------------------------------------------------


def _check_q(q: Sequence[float]) -> list[float]:
    q = [float(x) for x in q]
    if any(not x > 1 for x in q):
        raise WeightViolation(f"need q_k > 1, got {q}")
    return q


def check_thm_ps(
    u: ChaosExpansion,
    v: ChaosExpansion,
    f: ChaosExpansion,
    q: Sequence[float],
    threads: int = 1,
) -> list[BoundReport]:
    """Cauchy-Schwarz bounds in the spaces ``seq(q)^-1`` and ``seq(sqrt2 q)``.

    * derivative: ``E|D_u v|^2 <= prod q^2/(q^2-1) |u|^2_{seq(q)^-1} |v|^2_{seq(sqrt2 q)}``
    * Skorokhod: ``|d_u f|_{seq(sqrt2 q)^-1} <= |u|_{seq(q)^-1} |f|_{seq(q)^-1}``
    * OU: ``|L_u v|_{seq(sqrt2 q)^-1} <= (prod q^2/(q^2-1))^(1/2) |u|^2_{seq(q)^-1} |v|_{seq(sqrt2 q)}``

    The Skorokhod constant is 1 because ``sum_{b<=a} C(a,b) = 2^|a|`` cancels
    the ``sqrt2`` scaling exactly; the printed alternative
    ``(sum_k 2^k/q_k^2)^(1/2)`` is reported but not used, since for short
    sequences it drops below 1 and then fails on ``u = f = 1``.
    """
    q = _check_q(q)
    K = len(q)
    sq = [math.sqrt(2) * x for x in q]
    c_a = math.sqrt(product_inv_one_minus([1 / x**2 for x in q]))
    c_b_printed = math.sqrt(math.fsum(2.0**k / x**2 for k, x in enumerate(q, start=1)))
    nu = _norm(u, SequencePower(q, -1))
    nv = _norm(v, SequencePower(sq, 1))
    nf = _norm(f, SequencePower(q, -1))
    meta = {"q": q, "K": K}

    d = malliavin_d(u, v, threads=threads)
    lhs_a = _norm(d, UNIT)
    ra = BoundReport("sequence/derivative", lhs_a, c_a, c_a * nu * nv, dict(meta))

    s = skorokhod(u, f, threads=threads)
    lhs_b = _norm(s, SequencePower(sq, -1))
    rb = BoundReport(
        "sequence/skorokhod",
        lhs_b,
        1.0,
        nu * nf,
        dict(meta, printed_constant=c_b_printed, printed_rhs=c_b_printed * nu * nf,
             printed_pass=lhs_b <= c_b_printed * nu * nf * (1 + REL_TOL)),
    )

    L = ornstein_uhlenbeck(u, v, threads=threads)
    lhs_c = _norm(L, SequencePower(sq, -1))
    rc = BoundReport(
        "sequence/ornstein-uhlenbeck",
        lhs_c,
        c_a,
        c_a * nu * nu * nv,
        dict(meta, printed_constant=c_a * c_b_printed, printed_rhs=c_a * c_b_printed * nu * nu * nv,
             printed_pass=lhs_c <= c_a * c_b_printed * nu * nu * nv * (1 + REL_TOL)),
    )
    for rep, x in ((ra, d), (rb, s), (rc, L)):
        rep.metadata["output_box"] = x.box.to_json()
    return [ra, rb, rc]


# Kondratiev bounds -----------------------------------------------------------------


def check_thm_ks(
    u_minus: ChaosExpansion,
    u_plus: ChaosExpansion,
    v: ChaosExpansion,
    f: ChaosExpansion,
    ell: float,
    p: float,
    threads: int = 1,
) -> list[BoundReport]:
    """Kondratiev-space bounds with ``C_p = (prod_k 1/(1-(2k)^(-2p)))^(1/2)``.

    ``u_minus`` is measured in ``kond(-1, -l)`` (derivative side) and
    ``u_plus`` in ``kond(-1, l)`` (integral side).

    * derivative: ``|D_u v|_{kond(1, l-p)} <= C_p |u|_{kond(-1,-l)} |v|_{kond(1,l)}``
    * Skorokhod: ``|d_u f|_{kond(-1, l-p)} <= C_p |u|_{kond(-1,l)} |f|_{kond(-1,l)}``
      (``C_p^2 = sum_alpha (2N)^(-2p alpha)``)
    * OU, as ``d_u`` after ``D_u``:
      ``|L_u v|_{kond(-1,l-p)} <= C_p^2 |u|_{kond(-1,l)} |u|_{kond(-1,-l-p)} |v|_{kond(1,l+p)}``
      with ``u = u_plus`` used in both slots.

    The constant is the certified upper end of the infinite product.  The
    printed derivative form (square root on the left norm) and the printed OU
    right-hand side are kept in metadata.
    """
    if p <= 0.5:
        raise InvalidP(f"p must exceed 1/2, got {p}")
    lo, hi = two_n_product_bounds(p)
    cp = math.sqrt(hi)
    K = max(x.max_position() for x in (u_minus, u_plus, v, f))
    meta = {"ell": ell, "p": p, "constant_sq_bracket": [lo, hi], "finite_K_constant_sq": two_n_product_finite(p, K)}

    d = malliavin_d(u_minus, v, threads=threads)
    lhs_a = _norm(d, Kondratiev(1, ell - p))
    n_um = _norm(u_minus, Kondratiev(-1, -ell))
    n_v = _norm(v, Kondratiev(1, ell))
    rhs_a = cp * n_um * n_v
    ra = BoundReport(
        "kondratiev/derivative", lhs_a, cp, rhs_a,
        dict(meta, printed_lhs=math.sqrt(lhs_a), printed_pass=math.sqrt(lhs_a) <= rhs_a * (1 + REL_TOL)),
    )

    s = skorokhod(u_plus, f, threads=threads)
    lhs_b = _norm(s, Kondratiev(-1, ell - p))
    n_up = _norm(u_plus, Kondratiev(-1, ell))
    n_f = _norm(f, Kondratiev(-1, ell))
    rb = BoundReport("kondratiev/skorokhod", lhs_b, cp, cp * n_up * n_f, dict(meta))

    L = ornstein_uhlenbeck(u_plus, v, threads=threads)
    lhs_c = _norm(L, Kondratiev(-1, ell - p))
    n_u_shift = _norm(u_plus, Kondratiev(-1, -ell - p))
    n_v_shift = _norm(v, Kondratiev(1, ell + p))
    rhs_c = cp * cp * n_up * n_u_shift * n_v_shift
    printed_rhs = cp * cp * _norm(u_plus, Kondratiev(-1, -ell)) ** 2 * n_v
    rc = BoundReport(
        "kondratiev/ornstein-uhlenbeck", lhs_c, cp * cp, rhs_c,
        dict(meta, printed_rhs=printed_rhs, printed_pass=lhs_c <= printed_rhs * (1 + REL_TOL)),
    )
    return [ra, rb, rc]


# split-weight sequence bounds -----------------------------------------------------


def split_weights(p: Sequence[float], c: Sequence[float]) -> tuple[list[float], list[float], list[float]]:
    """``(p, q, r)`` with ``r^2 = c p^2`` and ``q^2 = p^2/(1/c - 1)``, ``0 < c < 1``.

    Then ``1/p^2 + 1/q^2 = 1/r^2`` and ``r^2/p^2 = c``.
    """
    p = [float(x) for x in p]
    c = [float(x) for x in c]
    if len(p) != len(c) or any(not 0 < x < 1 for x in c) or any(not x > 0 for x in p):
        raise RelationViolated("need positive p and 0 < c_k < 1 of equal length")
    r = [math.sqrt(ck) * pk for pk, ck in zip(p, c)]
    q = [pk / math.sqrt(1 / ck - 1) for pk, ck in zip(p, c)]
    return p, q, r


def from_squared_scale(*seqs: Sequence[float]) -> list[list[float]]:
    """Convert weights written on the ``p^n``-scale (``sum p^n u_n^2``) to the
    ``P^(2n)`` convention used by the norms here: ``P = sqrt(p)``."""
    return [[math.sqrt(float(x)) for x in s] for s in seqs]


def _rel_ok(lhs: float, rhs: float, tol: float = 1e-12) -> bool:
    return abs(lhs - rhs) <= tol * max(abs(lhs), abs(rhs))


def check_split_relation(p, q, r) -> None:
    for pk, qk, rk in zip(p, q, r):
        if not _rel_ok(1 / pk**2 + 1 / qk**2, 1 / rk**2):
            raise RelationViolated(f"1/p^2 + 1/q^2 != 1/r^2 at p={pk}, q={qk}, r={rk}")
    if not (len(p) == len(q) == len(r)):
        raise RelationViolated("p, q, r must have equal length")


def check_thm_ps1(
    u: ChaosExpansion,
    f: ChaosExpansion,
    v: ChaosExpansion,
    p: Sequence[float],
    q: Sequence[float],
    r: Sequence[float],
    threads: int = 1,
) -> list[BoundReport]:
    """Bounds for weights tied by ``1/p^2 + 1/q^2 = 1/r^2``.

    * Skorokhod: ``|d_u f|_{seq(r)} <= |u|_{seq(p)} |f|_{seq(q)}``
    * derivative: ``|D_u v|_{seq(q)^-1} <= C |u|_{seq(p)} |v|_{seq(r)^-1}``,
      ``C = (prod p^2/(p^2 - r^2))^(1/2)``
    """
    check_split_relation(p, q, r)
    meta = {"p": list(p), "q": list(q), "r": list(r)}
    s = skorokhod(u, f, threads=threads)
    lhs_a = _norm(s, SequencePower(r, 1))
    n_u = _norm(u, SequencePower(p, 1))
    ra = BoundReport("split-sequence/skorokhod", lhs_a, 1.0, n_u * _norm(f, SequencePower(q, 1)), dict(meta))
    cbar = math.sqrt(product_inv_one_minus([rk**2 / pk**2 for pk, rk in zip(p, r)]))
    d = malliavin_d(u, v, threads=threads)
    lhs_b = _norm(d, SequencePower(q, -1))
    rb = BoundReport(
        "split-sequence/derivative", lhs_b, cbar, cbar * n_u * _norm(v, SequencePower(r, -1)), dict(meta)
    )
    return [ra, rb]


def ou_weights(p: Sequence[float], q: Sequence[float]) -> tuple[list[float], list[float], list[float]]:
    """``r`` from ``(1/r^2 - 1/p^2)(q^2 - 1/p^2) = 1`` given ``p^2 q^2 > 1``."""
    p = [float(x) for x in p]
    q = [float(x) for x in q]
    if any(pk * pk * qk * qk <= 1 for pk, qk in zip(p, q)):
        raise RelationViolated("need p_k^2 q_k^2 > 1")
    r = [1 / math.sqrt(1 / pk**2 + 1 / (qk**2 - 1 / pk**2)) for pk, qk in zip(p, q)]
    return p, q, r


def check_ou_relation(p, q, r) -> None:
    if not (len(p) == len(q) == len(r)):
        raise RelationViolated("p, q, r must have equal length")
    for pk, qk, rk in zip(p, q, r):
        if pk * pk * qk * qk <= 1:
            raise RelationViolated(f"p^2 q^2 <= 1 at p={pk}, q={qk}")
        if not _rel_ok((1 / rk**2 - 1 / pk**2) * (qk**2 - 1 / pk**2), 1.0):
            raise RelationViolated(f"(1/r^2 - 1/p^2)(q^2 - 1/p^2) != 1 at p={pk}, q={qk}, r={rk}")


def check_thm_ou(
    u: ChaosExpansion,
    v: ChaosExpansion,
    p: Sequence[float],
    q: Sequence[float],
    r: Sequence[float],
    threads: int = 1,
) -> BoundReport:
    """``|L_u v|_{seq(r)} <= (prod p^2q^2/(p^2q^2-1))^(1/2) |u|^2_{seq(p)} |v|_{seq(q)}``."""
    check_ou_relation(p, q, r)
    L = ornstein_uhlenbeck(u, v, threads=threads)
    lhs = _norm(L, SequencePower(r, 1))
    const = math.sqrt(product_inv_one_minus([1 / (pk * pk * qk * qk) for pk, qk in zip(p, q)]))
    nu = _norm(u, SequencePower(p, 1))
    rhs = const * nu * nu * _norm(v, SequencePower(q, 1))
    return BoundReport("sequence/ou-composite", lhs, const, rhs, {"p": list(p), "q": list(q), "r": list(r)})


def lhs_monotone(op: Callable, u: ChaosExpansion, x: ChaosExpansion, w: WeightSystem, boxes) -> tuple[list[float], bool]:
    """Weighted norm of ``op(u, x, out=box)`` over nested boxes; must not decrease."""
    vals = [_norm(op(u, x, out=b), w) for b in boxes]
    return vals, all(b >= a for a, b in zip(vals, vals[1:]))


# duality -----------------------------------------------------------------------------


def check_duality(u: ChaosExpansion, f: ChaosExpansion, v: ChaosExpansion, variant: str = "l2", **params) -> CheckReport:
    """``<d_u f, v> = <f, D_u v>`` with plain coefficient pairings.

    Output boxes are the full support hulls, so no term is lost to
    truncation; the weighted-space variants differ only in which norms the
    inputs are required to have, and these are reported.
    """
    s = skorokhod(u, f)
    d = malliavin_d(u, v)
    left = duality_pairing(s, v)
    right = duality_pairing(f, d)
    scale = max(abs(left), abs(right))
    gap = abs(left - right) / scale if scale > 0 else 0.0
    norms = {}
    if variant == "kondratiev":
        ell, p = params["ell"], params["p"]
        norms = {
            "u_kond(-1,-l-p)": _norm(u, Kondratiev(-1, -ell - p)),
            "v_kond(1,l+p)": _norm(v, Kondratiev(1, ell + p)),
            "f_kond(-1,l)": _norm(f, Kondratiev(-1, ell)),
        }
    elif variant == "sequence":
        p, q, r = params["p"], params["q"], params["r"]
        check_split_relation(p, q, r)
        norms = {
            "u_seq(p)": _norm(u, SequencePower(p, 1)),
            "f_seq(q)": _norm(f, SequencePower(q, 1)),
            "v_seq(r)^-1": _norm(v, SequencePower(r, -1)),
        }
    elif variant != "l2":
        raise ValueError(f"unknown duality variant {variant!r}")
    return CheckReport(
        f"duality/{variant}",
        gap < DUALITY_TOL,
        {"delta_pairing": left, "derivative_pairing": right, "rel_gap": gap},
        dict({k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in params.items()}, norms=norms),
    )


# Monte Carlo -------------------------------------------------------------------------


def _mc_mean(values: np.ndarray) -> tuple[float, float]:
    n = values.shape[0]
    m = math.fsum(values.tolist()) / n
    var = math.fsum(((values - m) ** 2).tolist()) / (n - 1)
    return m, math.sqrt(var / n)


def mc_orthonormality(box: TruncationBox, n_samples: int, seed: int, chunk: int = 200_000) -> CheckReport:
    """Empirical Gram matrix of ``xi_alpha`` over a box vs the identity (5 SE)."""
    alphas = box.indices()
    m = len(alphas)
    sums = np.zeros((m, m))
    sq = np.zeros((m, m))
    for xs in hermite.sample_chunks(box.K, n_samples, seed, chunk):
        B = hermite.basis_matrix(alphas, xs)
        sums += B @ B.T
        sq += (B * B) @ (B * B).T
    mean = sums / n_samples
    var = (sq / n_samples - mean**2) * n_samples / (n_samples - 1)
    se = np.sqrt(np.maximum(var, 0) / n_samples)
    z = np.abs(mean - np.eye(m)) / np.where(se > 0, se, np.inf)
    worst = float(np.max(z))
    return CheckReport(
        "mc/orthonormality",
        worst < 5.0,
        {"max_z": worst, "max_abs_dev": float(np.max(np.abs(mean - np.eye(m))))},
        {"box": box.to_json(), "n": n_samples, "seed": seed, "generator": hermite.GENERATOR_ID},
    )


def mc_parseval(v: ChaosExpansion, n_samples: int, seed: int, chunk: int = 200_000) -> CheckReport:
    """``E|v|^2`` by sampling vs ``sum_alpha |v_alpha|^2`` (5 SE)."""
    K = max(v.box.K, 1)
    vals = []
    for xs in hermite.sample_chunks(K, n_samples, seed, chunk):
        y = evaluate_batch(v, xs).reshape(xs.shape[0], -1)
        vals.append(np.sum(y * y, axis=1))
    est, se = _mc_mean(np.concatenate(vals))
    exact = weighted_norm(v) ** 2
    return CheckReport(
        "mc/parseval",
        abs(est - exact) <= 5 * se,
        {"estimate": est, "se": se, "exact": exact},
        {"n": n_samples, "seed": seed, "generator": hermite.GENERATOR_ID},
    )


def mc_adjointness(
    u: ChaosExpansion, f: ChaosExpansion, v: ChaosExpansion, n_samples: int, seed: int, chunk: int = 200_000
) -> CheckReport:
    """``E (v, d_u f)_X`` vs ``E (f, D_u v)_{X(x)U}`` from the same samples.

    Both expectations are sample means; the test passes if they differ by
    less than five combined standard errors ``sqrt(se1^2 + se2^2)``.
    """
    s = skorokhod(u, f)
    d = malliavin_d(u, v)
    K = max(x.max_position() for x in (s, d, f, v)) or 1
    left, right = [], []
    for xs in hermite.sample_chunks(K, n_samples, seed, chunk):
        n = xs.shape[0]
        a = evaluate_batch(v, xs).reshape(n, -1) * evaluate_batch(s, xs).reshape(n, -1)
        b = evaluate_batch(f, xs).reshape(n, -1) * evaluate_batch(d, xs).reshape(n, -1)
        left.append(a.sum(axis=1))
        right.append(b.sum(axis=1))
    m1, se1 = _mc_mean(np.concatenate(left))
    m2, se2 = _mc_mean(np.concatenate(right))
    comb = math.sqrt(se1 * se1 + se2 * se2)
    exact = duality_pairing(s, v)
    diff = abs(m1 - m2)
    ok = diff <= 5 * comb if comb > 0 else diff <= 1e-12 * max(1.0, abs(exact))
    return CheckReport(
        "mc/adjointness",
        ok,
        {"delta_side": m1, "delta_se": se1, "derivative_side": m2, "derivative_se": se2,
         "combined_se": comb, "coefficient_pairing": exact},
        {"n": n_samples, "seed": seed, "generator": hermite.GENERATOR_ID, "dims": K},
    )


# weight-space inclusion and example trends -----------------------------------------------


def check_factorial_bound(K: int, N: int) -> tuple[bool, list]:
    """``(2N)^(2 alpha) alpha! >= |alpha|!`` on every index of the box (exact)."""
    bad = []
    for a in enumerate_box(K, N):
        lhs = factorial(a)
        for k, v in a.entries:
            lhs *= (2 * k) ** (2 * v)
        if lhs < math.factorial(a.order):
            bad.append(a.to_json())
    return not bad, bad


def check_pk_inclusion(
    K: int, rho: float, ell: float, q: Sequence[float], N_list: Sequence[int]
) -> CheckReport:
    """Sup over growing boxes of ``kond(-rho,-l)`` weight over ``min(q)^|alpha|``.

    A bounded sup shows ``seq(q)`` embeds in ``kond(-rho,-l)`` on ``K``
    coordinates.  Also reports ``C(r) = sup_n 1/(r^(2n) (n!)^rho)`` and the
    factorial inequality used by the embedding argument.
    """
    if not rho > 0 or ell < rho:
        raise WeightViolation("need rho > 0 and ell >= rho")
    q = [float(x) for x in q][:K] if len(q) >= K else [float(x) for x in q] + [float(q[-1])] * (K - len(q))
    rmin = min(q)
    kw = Kondratiev(-rho, -ell)
    sw = SequencePower([rmin] * K, 1)
    sups = []
    for N in N_list:
        sups.append(max(kw.weight(a) / sw.weight(a) for a in enumerate_box(K, N)))
    # 1/(r^(2n) (n!)^rho) peaks where r^2 (n+1)^rho first exceeds 1
    n, c_r = 0, 1.0
    while True:
        n += 1
        term = math.exp(-(2 * n * math.log(rmin) + rho * math.lgamma(n + 1)))
        c_r = max(c_r, term)
        if rmin * rmin * (n + 1) ** rho > 1 and n > 1:
            break
    fac_ok, bad = check_factorial_bound(K, max(N_list))
    stable = len(sups) < 2 or sups[-1] == sups[-2]
    nondecreasing = all(b >= a for a, b in zip(sups, sups[1:]))
    return CheckReport(
        "weights/inclusion",
        nondecreasing and stable and fac_ok and sups[-1] <= c_r * (1 + 1e-12),
        {"sups": sups, "C_r": c_r, "stable": stable, "factorial_bound_holds": fac_ok},
        {"K": K, "rho": rho, "ell": ell, "q": q, "N_list": list(N_list), "counterexamples": bad},
    )


def white_noise_delta_trend(K_values: Sequence[int], ells: Sequence[float]) -> CheckReport:
    """Squared ``kond(-1, l)`` norm of ``d_W(W)`` on ``K`` coordinates.

    The coefficient is ``sqrt2`` at each ``2 eps(k)``, so the squared norm is
    ``sum_{k<=K} (2k)^(4l)``; it stays bounded in ``K`` iff ``l < -1/4``.
    Finite truncations cannot certify a limit; only the trend is reported.
    """
    table = {}
    for ell in ells:
        vals = []
        for K in K_values:
            W = white_noise(K)
            s = skorokhod(W, W.as_tensor())
            vals.append(weighted_norm(s, Kondratiev(-1, ell)) ** 2)
        formula = [math.fsum((2.0 * k) ** (4 * ell) for k in range(1, K + 1)) for K in K_values]
        table[str(ell)] = {"norm_sq": vals, "closed_form": formula, "bounded_in_limit": ell < -0.25}
    ok = all(
        all(abs(a - b) <= 1e-12 * b for a, b in zip(t["norm_sq"], t["closed_form"])) for t in table.values()
    )
    return CheckReport("example/white-noise-trend", ok, table, {"K_values": list(K_values)})


# random instances and suites ----------------------------------------------------------

SUITES = ("series", "md-sufficient", "ps", "ks", "ps1", "ou", "duality", "mc", "pk")


def instance_rng(seed: int, suite: str, i: int) -> np.random.Generator:
    code = SUITES.index(suite) if suite in SUITES else 99
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, code, i])))


def _scalar(g, dx, box, w=None):
    return random_expansion(g, CoefShape.scalar(dx), box, w)


def _tensor(g, dx, du, box, w=None):
    return random_expansion(g, CoefShape.tensor(dx, du), box, w)


def instance_ps(seed: int, i: int, K: int = 3, N: int = 4):
    g = instance_rng(seed, "ps", i)
    q = [2.0**k * g.uniform(1.0, 1.5) for k in range(1, K + 1)]
    sq = [math.sqrt(2) * x for x in q]
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    u = _scalar(g, du, box, SequencePower(q, -1))
    v = _scalar(g, 2, box, SequencePower(sq, 1))
    f = _tensor(g, 2, du, box, SequencePower(q, -1))
    return u, v, f, q


def instance_ks(seed: int, i: int, K: int = 3, N: int = 4):
    g = instance_rng(seed, "ks", i)
    ell = float(g.uniform(-1.0, 1.0))
    p = float(g.choice([0.75, 1.0, 1.5, 2.0]))
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    u_minus = _scalar(g, du, box, Kondratiev(-1, -ell))
    u_plus = _scalar(g, du, box, Kondratiev(-1, ell))
    v = _scalar(g, 2, box, Kondratiev(1, ell + p))
    f = _tensor(g, 2, du, box, Kondratiev(-1, ell))
    return u_minus, u_plus, v, f, ell, p


def instance_ps1(seed: int, i: int, K: int = 3, N: int = 4):
    g = instance_rng(seed, "ps1", i)
    p0 = [float(g.uniform(0.5, 3.0)) for _ in range(K)]
    c = [4.0 ** (-k) for k in range(1, K + 1)]
    p, q, r = split_weights(p0, c)
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    u = _scalar(g, du, box, SequencePower(p, 1))
    f = _tensor(g, 2, du, box, SequencePower(q, 1))
    v = _scalar(g, 2, box, SequencePower(r, -1))
    return u, f, v, p, q, r


def instance_ou(seed: int, i: int, K: int = 3, N: int = 3):
    g = instance_rng(seed, "ou", i)
    p0 = [float(g.uniform(0.5, 2.0)) for _ in range(K)]
    q0 = [float(g.uniform(1.0, 3.0)) / pk for pk in p0]
    p, q, r = ou_weights(p0, q0)
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    u = _scalar(g, du, box, SequencePower(p, 1))
    v = _scalar(g, 2, box, SequencePower(q, 1))
    return u, v, p, q, r


def instance_md(seed: int, i: int, K: int = 3, N: int = 4):
    g = instance_rng(seed, "md-sufficient", i)
    q = [float(g.uniform(1.0, 3.0)) for _ in range(K)]
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    return _scalar(g, du, box), _scalar(g, 2, box), SequencePower(q, -1), box


def _run_instances(fn, n, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, range(n)))
    return [fn(i) for i in range(n)]


def suite_series() -> list:
    reps = [
        check_exp_sum([2.0**-k for k in range(1, 9)], [TruncationBox(8, n) for n in (6, 12, 18, 24)]),
        check_exp_sum([1.0], [TruncationBox(1, n) for n in (5, 10, 20, 30)]),
        check_exp_sum([], [TruncationBox(0, 0)]),
        check_geom_sum([4.0**-k for k in range(1, 9)], MultiIndex(), [TruncationBox(8, n) for n in (6, 12, 18, 24)]),
        check_geom_sum([0.5], MultiIndex.unit(1), [TruncationBox(1, n) for n in (10, 20, 40, 60)]),
        check_geom_sum([0.3, 0.2, 0.1], MultiIndex([(1, 2), (3, 1)]), [TruncationBox(3, n) for n in (10, 20, 40)]),
        check_two_n_sum(2.0, [TruncationBox(6, n) for n in (4, 8, 16, 32)]),
        check_binom_sum([3.0], MultiIndex.unit(1, 2)),
        check_binom_sum([0.5], MultiIndex()),
        check_binom_sum([0.25, 1.5, 2.0], MultiIndex([(1, 3), (2, 2), (3, 4)])),
    ]
    return reps


def run_suite(name: str, seed: int, n_instances: int = 100, threads: int = 1, mc_samples: int = 1_000_000) -> dict:
    """Run one named suite and return a JSON-ready summary."""
    if name == "series":
        reps = suite_series()
    elif name == "md-sufficient":
        reps = [r for rs in _run_instances(lambda i: check_md_sufficient(*instance_md(seed, i)), n_instances, threads) for r in rs]
    elif name == "ps":
        reps = [r for rs in _run_instances(lambda i: check_thm_ps(*instance_ps(seed, i)), n_instances, threads) for r in rs]
    elif name == "ks":
        reps = [r for rs in _run_instances(lambda i: check_thm_ks(*instance_ks(seed, i)), n_instances, threads) for r in rs]
    elif name == "ps1":
        reps = [r for rs in _run_instances(lambda i: check_thm_ps1(*instance_ps1(seed, i)), n_instances, threads) for r in rs]
    elif name == "ou":
        reps = _run_instances(lambda i: check_thm_ou(*instance_ou(seed, i)), n_instances, threads)
    elif name == "duality":
        reps = _run_instances(lambda i: duality_instance(seed, i), 3 * n_instances, threads)
    elif name == "mc":
        reps = mc_suite(seed, mc_samples)
    elif name == "pk":
        reps = [
            check_pk_inclusion(1, 1.0, 1.0, [2.0], [4, 8, 16, 32]),
            check_pk_inclusion(2, 1.0, 1.0, [2.0, 3.0], [4, 8, 16]),
            check_pk_inclusion(2, 0.5, 1.0, [1.5, 4.0], [4, 8, 16]),
            white_noise_delta_trend([1, 2, 4, 8, 16, 32], [-1.0, -0.5, -0.25, 0.0]),
        ]
    else:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    items = [r.to_json() for r in reps]
    return {"suite": name, "seed": seed, "n_reports": len(items), "all_pass": all(x["pass"] for x in items), "reports": items}


def duality_instance(seed: int, j: int) -> CheckReport:
    variant = ("l2", "kondratiev", "sequence")[j % 3]
    i = j // 3
    g = instance_rng(seed, "duality", j)
    K, N = 3, 3
    box = TruncationBox(K, N)
    du = int(g.integers(1, 3))
    if variant == "l2":
        return check_duality(_scalar(g, du, box), _tensor(g, 2, du, box), _scalar(g, 2, box), "l2", instance=i)
    if variant == "kondratiev":
        ell = float(g.uniform(-1, 1))
        p = float(g.choice([0.75, 1.0, 2.0]))
        u = _scalar(g, du, box, Kondratiev(-1, -ell - p))
        f = _tensor(g, 2, du, box, Kondratiev(-1, ell))
        v = _scalar(g, 2, box, Kondratiev(1, ell + p))
        return check_duality(u, f, v, "kondratiev", ell=ell, p=p, instance=i)
    p, q, r = split_weights([float(g.uniform(0.5, 3)) for _ in range(K)], [4.0 ** (-k) for k in range(1, K + 1)])
    u = _scalar(g, du, box, SequencePower(p, 1))
    f = _tensor(g, 2, du, box, SequencePower(q, 1))
    v = _scalar(g, 2, box, SequencePower(r, -1))
    return check_duality(u, f, v, "sequence", p=p, q=q, r=r, instance=i)


def mc_instance(seed: int):
    """Small fixed-size random triple for the Monte Carlo adjointness check."""
    g = instance_rng(seed, "mc", 0)
    u = _scalar(g, 2, TruncationBox(2, 1))
    f = _tensor(g, 1, 2, TruncationBox(2, 2))
    v = _scalar(g, 1, TruncationBox(2, 2))
    return u, f, v


def mc_suite(seed: int, n: int) -> list[CheckReport]:
    u, f, v = mc_instance(seed)
    W = white_noise(2)
    h = ChaosExpansion(CoefShape.tensor(1, 2), {MultiIndex(): [[0.7, 0.0]]}, TruncationBox(0, 0))
    e1 = ChaosExpansion(CoefShape.scalar(1), {MultiIndex.unit(1): [1.0]}, TruncationBox(1, 1))
    return [
        mc_orthonormality(TruncationBox(2, 3), n, seed),
        mc_parseval(v, n, seed + 1),
        mc_adjointness(W, h, e1, n, seed + 2),
        mc_adjointness(u, f, v, n, seed + 3),
    ]
