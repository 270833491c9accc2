"""Malliavin derivative, Skorokhod integral, Ornstein-Uhlenbeck operator and
Wick product on truncated chaos expansions.

Coefficient formulas (``C`` is the multi-index binomial, ``u`` the driver):

* derivative   ``(D_u v)_a   = sum_b sqrt(C(a+b, b)) v_{a+b} (x) u_b``
* Skorokhod    ``(d_u f)_a   = sum_{b<=a} sqrt(C(a, b)) (f_b, u_{a-b})_U``
* OU operator  ``(L_u v)_a   = sum_{b<=a} sum_g sqrt(C(a,b) C(b+g,b)) v_{b+g} (u_g, u_{a-b})_U``
* Wick product ``(f <> e)_a  = sum_{b<=a} sqrt(C(a, b)) f_{a-b} e_b``

The Skorokhod sum is finite for every fixed output index whatever the
operands.  The derivative and OU sums run over all ``b``; they are finite
here only because inputs are truncated, and their untruncated limits exist
only under extra decay conditions on ``v``.

Only coefficients inside the caller's output box are computed.  Use
:func:`required_box` to get the box that holds the full algebraic support.

Each output coefficient is the correctly rounded exact sum of its terms, so
results do not depend on term order or on ``threads``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .chaos import ChaosExpansion, CoefShape, ShapeMismatch, TruncationBox
from .multiindex import (
    BigRatio,
    MultiIndex,
    factorial,
    sub_checked,
)
from .summation import exact_product, fsum_rows

_EXACT_FLOAT_LIMIT = 2.0**53


# dense index helpers -------------------------------------------------------


def _dense(alphas: Sequence[MultiIndex], K: int) -> np.ndarray:
    out = np.zeros((len(alphas), K), dtype=np.int64)
    for i, a in enumerate(alphas):
        for k, v in a.entries:
            out[i, k - 1] = v
    return out


def _comb_table(n_max: int) -> np.ndarray:
    t = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        for k in range(n + 1):
            t[n, k] = math.comb(n, k)
    return t


def _binom_prod(table: np.ndarray, top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    """Entrywise-binomial products over the last axis (as floats)."""
    if top.shape[-1] == 0:
        return np.ones(top.shape[:-1])
    return np.prod(table[top, bottom], axis=-1)


def _exact_binom(top_row: np.ndarray, bottom_row: np.ndarray) -> int:
    out = 1
    for n, k in zip(top_row.tolist(), bottom_row.tolist()):
        out *= math.comb(n, k)
    return out


def _sqrt_lgamma(pairs: list[tuple[np.ndarray, np.ndarray]]) -> float:
    acc = []
    for top, bottom in pairs:
        for n, k in zip(top.tolist(), bottom.tolist()):
            acc.append(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1))
    return math.exp(0.5 * math.fsum(acc))


def _sqrt_weights(table, pairs_dense: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """``sqrt(prod_i C(top_i, bottom_i))`` row by row.

    Products below 2**53 are exact in floating point and take a vectorised
    path; larger ones are recomputed as exact integers, and anything at or
    above 2**63 uses a log-gamma sum.
    """
    prod = np.ones(pairs_dense[0][0].shape[0])
    for top, bottom in pairs_dense:
        prod = prod * _binom_prod(table, top, bottom)
    out = np.sqrt(prod)
    big = np.nonzero(~(prod < _EXACT_FLOAT_LIMIT))[0]
    for i in big.tolist():
        c = 1
        for top, bottom in pairs_dense:
            c *= _exact_binom(top[i], bottom[i])
        if c < 2**63:
            out[i] = math.sqrt(c)
        else:
            out[i] = _sqrt_lgamma([(top[i], bottom[i]) for top, bottom in pairs_dense])
    return out


def _group_sum(
    codes: np.ndarray,
    comps: np.ndarray,
    coef_shape: tuple[int, ...],
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Correctly rounded sums of term components grouped by output row.

    ``codes`` (P, K) holds the output index for each of P terms, ``comps`` has
    shape (C, P, *coef_shape) or (C, P, *coef_shape, R) where the trailing R
    axis (if present) is summed too.  Returns unique codes and coefficients.
    """
    P = codes.shape[0]
    if P == 0:
        return codes[:0], np.zeros((0,) + coef_shape)
    uniq, inverse = np.unique(codes, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    E = int(np.prod(coef_shape, dtype=int))
    # (P, E, rest) so one output entry owns a contiguous block
    comps = np.moveaxis(comps, 0, -1).reshape(P, E, -1)

    def one(g: int) -> np.ndarray:
        sel = order[bounds[g] : bounds[g + 1]]
        block = comps[sel].transpose(1, 0, 2).reshape(E, -1)
        return fsum_rows(block)

    if threads > 1 and len(uniq) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(len(uniq))))
    else:
        rows = [one(g) for g in range(len(uniq))]
    return uniq, np.stack(rows).reshape((len(uniq),) + coef_shape)


def _assemble(shape: CoefShape, out: TruncationBox, codes: np.ndarray, coefs: np.ndarray) -> ChaosExpansion:
    terms = []
    for row, c in zip(codes, coefs):
        terms.append((MultiIndex.from_dense(row.tolist()), c))
    return ChaosExpansion(shape, terms, out)


def _in_box(alpha_dense: np.ndarray, out: TruncationBox) -> np.ndarray:
    K = alpha_dense.shape[-1]
    ok = alpha_dense.sum(axis=-1) <= out.N
    if K > out.K:
        ok &= np.all(alpha_dense[..., out.K :] == 0, axis=-1)
    return ok


def _workspace_K(*exps: ChaosExpansion) -> int:
    return max([e.max_position() for e in exps] + [0])


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


# support hull ----------------------------------------------------------------


def required_box(kind: str, u: ChaosExpansion, operand: ChaosExpansion) -> TruncationBox:
    """Smallest box holding every index the exact (untruncated) result can reach."""
    K = max(u.max_position(), operand.max_position())
    if kind in ("d", "derivative"):
        N = operand.max_order() - min((a.order for a in u.support()), default=0)
        return TruncationBox(operand.max_position(), max(N, 0))
    if kind in ("delta", "skorokhod", "ou", "ornstein_uhlenbeck", "wick"):
        return TruncationBox(K, operand.max_order() + u.max_order())
    raise ValueError(f"unknown operator kind {kind!r}")


# operators -------------------------------------------------------------------


def malliavin_d(
    u: ChaosExpansion, v: ChaosExpansion, out: TruncationBox | None = None, threads: int = 1
) -> ChaosExpansion:
    """Derivative of the ``X``-valued ``v`` along the ``U``-valued driver ``u``.

    Result has shape ``tensor(dX, dU)``.  Terms are enumerated from the
    support of ``v``: for each stored ``g`` and each driver index ``b <= g``
    the term lands at ``a = g - b``.
    """
    _require(u.shape.kind == "scalar", f"driver must be scalar-shaped, got {u.shape}")
    _require(v.shape.kind == "scalar", f"operand must be scalar-shaped, got {v.shape}")
    shape = CoefShape.tensor(v.shape.dx, u.shape.dx)
    out = required_box("d", u, v) if out is None else out
    K = _workspace_K(u, v)
    if not len(u) or not len(v):
        return ChaosExpansion(shape, {}, out)
    V = _dense(v.support(), K)
    U = _dense(u.support(), K)
    A = V[:, None, :] - U[None, :, :]
    ok = np.all(A >= 0, axis=-1) & _in_box(A, out)
    iv, iu = np.nonzero(ok)
    table = _comb_table(int(V.max(initial=0)))
    s = _sqrt_weights(table, [(V[iv], U[iu])])
    vc = np.stack(list(v.terms.values()))[iv]  # (P, dX)
    uc = np.stack(list(u.terms.values()))[iu]  # (P, dU)
    comps = exact_product(s[:, None, None], vc[:, :, None], uc[:, None, :])  # (4, P, dX, dU)
    codes, coefs = _group_sum(A[iv, iu], comps, shape.array_shape, threads)
    return _assemble(shape, out, codes, coefs)


def skorokhod(
    u: ChaosExpansion, f: ChaosExpansion, out: TruncationBox | None = None, threads: int = 1
) -> ChaosExpansion:
    """Skorokhod integral of the ``X (x) U``-valued ``f`` against ``u``.

    Result has shape ``scalar(dX)``.  Every output coefficient is a finite sum.
    """
    _require(u.shape.kind == "scalar", f"driver must be scalar-shaped, got {u.shape}")
    _require(f.shape.kind == "tensor", f"integrand must be tensor-shaped, got {f.shape}")
    _require(f.shape.du == u.shape.dx, f"integrand du={f.shape.du} but driver dU={u.shape.dx}")
    shape = CoefShape.scalar(f.shape.dx)
    out = required_box("delta", u, f) if out is None else out
    K = _workspace_K(u, f)
    if not len(u) or not len(f):
        return ChaosExpansion(shape, {}, out)
    F = _dense(f.support(), K)
    U = _dense(u.support(), K)
    A = F[:, None, :] + U[None, :, :]
    ok = _in_box(A, out)
    jf, ju = np.nonzero(ok)
    alpha = A[jf, ju]
    table = _comb_table(int(alpha.max(initial=0)))
    s = _sqrt_weights(table, [(alpha, F[jf])])
    fc = np.stack(list(f.terms.values()))[jf]  # (P, dX, dU)
    uc = np.stack(list(u.terms.values()))[ju]  # (P, dU)
    comps = exact_product(s[:, None, None], fc, uc[:, None, :])  # (4, P, dX, dU)
    codes, coefs = _group_sum(alpha, comps, shape.array_shape, threads)
    return _assemble(shape, out, codes, coefs)


def _gram(u: ChaosExpansion) -> np.ndarray:
    """Correctly rounded inner products ``(u_g, u_h)_U`` over the support."""
    uc = np.stack(list(u.terms.values()))
    comps = exact_product(uc[:, None, :], uc[None, :, :])  # (2, n, n, dU)
    n = uc.shape[0]
    flat = np.moveaxis(comps, 0, -1).reshape(n * n, -1)
    return fsum_rows(flat).reshape(n, n)


def ornstein_uhlenbeck(
    u: ChaosExpansion, v: ChaosExpansion, out: TruncationBox | None = None, threads: int = 1
) -> ChaosExpansion:
    """OU operator ``L_u v`` with the double sum taken in one pass.

    Each term carries the single square root ``sqrt(C(a,b) C(b+g,b))``; with
    a white-noise driver this is an exact integer, so ``L`` reduces to
    multiplication by ``|a|`` without rounding.
    """
    _require(u.shape.kind == "scalar", f"driver must be scalar-shaped, got {u.shape}")
    _require(v.shape.kind == "scalar", f"operand must be scalar-shaped, got {v.shape}")
    shape = CoefShape.scalar(v.shape.dx)
    out = required_box("ou", u, v) if out is None else out
    K = _workspace_K(u, v)
    if not len(u) or not len(v):
        return ChaosExpansion(shape, {}, out)
    V = _dense(v.support(), K)
    U = _dense(u.support(), K)
    G = _gram(u)
    # b = eta - g for g in supp u, eta in supp v, g <= eta
    B = V[None, :, :] - U[:, None, :]  # (nu_g, nv, K)
    ig, iv = np.nonzero(np.all(B >= 0, axis=-1))
    Bv = B[ig, iv]  # (Q, K)
    # a = b + h for h in supp u
    A = Bv[:, None, :] + U[None, :, :]  # (Q, nu_h, K)
    G_pair = G[ig][:, :]  # (Q, nu_h)
    ok = _in_box(A, out) & (G_pair != 0.0)
    iq, ih = np.nonzero(ok)
    alpha = A[iq, ih]
    beta = Bv[iq]
    eta = V[iv[iq]]
    table = _comb_table(int(max(alpha.max(initial=0), eta.max(initial=0))))
    s = _sqrt_weights(table, [(alpha, beta), (eta, beta)])
    vc = np.stack(list(v.terms.values()))[iv[iq]]  # (P, dX)
    g = G_pair[iq, ih]
    comps = exact_product(s[:, None], vc, g[:, None])  # (4, P, dX)
    codes, coefs = _group_sum(alpha, comps, shape.array_shape, threads)
    return _assemble(shape, out, codes, coefs)


def wick(
    f: ChaosExpansion,
    eta: ChaosExpansion,
    out: TruncationBox | None = None,
    basis: str = "xi",
    threads: int = 1,
) -> ChaosExpansion:
    """Wick product of an ``X``-valued ``f`` with a real-valued ``eta``.

    With ``basis="hep"`` both operands and the result hold coefficients in
    the unnormalized basis ``Hep_a = sqrt(a!) xi_a``.  The square-root
    weight then becomes ``sqrt(C(a,b) (a-b)! b! / a!)``, which is reduced as
    an exact ratio (it is identically one) before any rounding.
    """
    _require(eta.shape == CoefShape.scalar(1), f"eta must be real-valued, got {eta.shape}")
    _require(f.shape.kind == "scalar", f"f must be scalar-shaped, got {f.shape}")
    if basis not in ("xi", "hep"):
        raise ValueError(f"unknown basis {basis!r}")
    shape = f.shape
    out = required_box("wick", eta, f) if out is None else out
    K = _workspace_K(f, eta)
    if not len(f) or not len(eta):
        return ChaosExpansion(shape, {}, out)
    F = _dense(f.support(), K)
    E = _dense(eta.support(), K)
    A = F[:, None, :] + E[None, :, :]
    jf, je = np.nonzero(_in_box(A, out))
    alpha = A[jf, je]
    if basis == "xi":
        table = _comb_table(int(alpha.max(initial=0)))
        s = _sqrt_weights(table, [(alpha, E[je])])
    else:
        fs, es = f.support(), eta.support()
        s = np.empty(len(jf))
        for i, (a, b) in enumerate(zip(jf.tolist(), je.tolist())):
            ga, gb = fs[a], es[b]
            top = ga + gb
            c = _exact_binom(_dense([top], K)[0], _dense([gb], K)[0])
            r = BigRatio(c * factorial(ga) * factorial(gb), factorial(top))
            s[i] = math.sqrt(r)
    fc = np.stack(list(f.terms.values()))[jf]  # (P, dX)
    ec = np.stack(list(eta.terms.values()))[je]  # (P, 1)
    comps = exact_product(s[:, None], fc, ec)
    codes, coefs = _group_sum(alpha, comps, shape.array_shape, threads)
    return _assemble(shape, out, codes, coefs)


# white-noise driver, direct formulas ----------------------------------------


def _wn_dims(v: ChaosExpansion, K: int | None) -> int:
    return v.box.K if K is None else K


def white_noise_d(v: ChaosExpansion, out: TruncationBox | None = None, K: int | None = None) -> ChaosExpansion:
    """``(D v)_a = sum_k sqrt(a_k + 1) v_{a+eps(k)} (x) u_k`` with ``dU = K``."""
    _require(v.shape.kind == "scalar", f"operand must be scalar-shaped, got {v.shape}")
    K = _wn_dims(v, K)
    out = TruncationBox(K, max(v.max_order() - 1, 0)) if out is None else out
    terms = {}
    for a in out.indices():
        c = np.zeros((v.shape.dx, K))
        for k in range(1, K + 1):
            up = a + MultiIndex.unit(k)
            if up in v.terms:
                c[:, k - 1] = math.sqrt(a[k] + 1) * v.terms[up]
        terms[a] = c
    return ChaosExpansion(CoefShape.tensor(v.shape.dx, K), terms, out)


def white_noise_delta(f: ChaosExpansion, out: TruncationBox | None = None) -> ChaosExpansion:
    """``(d f)_a = sum_k sqrt(a_k) f_{k, a-eps(k)}``; ``f``'s column k is ``f_k``."""
    _require(f.shape.kind == "tensor", f"integrand must be tensor-shaped, got {f.shape}")
    K = f.shape.du
    out = TruncationBox(max(K, f.max_position()), f.max_order() + 1) if out is None else out
    terms = {}
    for a in out.indices():
        parts = []
        for k, ak in a.entries:
            if k > K:
                continue
            down = sub_checked(a, MultiIndex.unit(k))
            if down in f.terms:
                parts.append(exact_product(math.sqrt(ak), f.terms[down][:, k - 1]))
        if parts:
            stacked = np.concatenate(parts, axis=0)  # (m, dX)
            terms[a] = fsum_rows(stacked.T)
    return ChaosExpansion(CoefShape.scalar(f.shape.dx), terms, out)


def white_noise_ou(v: ChaosExpansion, out: TruncationBox | None = None) -> ChaosExpansion:
    """``(L v)_a = |a| v_a`` (the number operator)."""
    _require(v.shape.kind == "scalar", f"operand must be scalar-shaped, got {v.shape}")
    out = v.box if out is None else out
    return ChaosExpansion(v.shape, ((a, a.order * c) for a, c in v.terms.items() if a in out), out)


# one-dimensional sequences ---------------------------------------------------


def _fsum_products(pairs) -> float:
    comps = [exact_product(*fs).ravel() for fs in pairs]
    if not comps:
        return 0.0
    return math.fsum(np.concatenate(comps).tolist())


def oned_d(u: Sequence[float], v: Sequence[float]) -> list[float]:
    """``(D_u v)_n = sum_k sqrt((n+k)! / (n! k!)) v_{n+k} u_k``, n < len(v)."""
    return [
        _fsum_products(
            (math.sqrt(math.comb(n + k, k)), v[n + k], u[k])
            for k in range(len(u))
            if n + k < len(v)
        )
        for n in range(len(v))
    ]


def oned_delta(u: Sequence[float], f: Sequence[float]) -> list[float]:
    """``(d_u f)_n = sum_{k<=n} sqrt(n! / (k! (n-k)!)) f_k u_{n-k}``."""
    n_max = len(f) + len(u) - 2
    return [
        _fsum_products(
            (math.sqrt(math.comb(n, k)), f[k], u[n - k])
            for k in range(min(n, len(f) - 1) + 1)
            if n - k < len(u)
        )
        for n in range(n_max + 1)
    ]


def oned_ou(u: Sequence[float], v: Sequence[float]) -> list[float]:
    """``(L_u v)_n = sum_{k<=n} sum_m sqrt(C(n,k) C(k+m,k)) v_{k+m} u_m u_{n-k}``."""
    n_max = len(v) + len(u) - 2
    out = []
    for n in range(n_max + 1):
        terms = []
        for k in range(n + 1):
            if n - k >= len(u) or k >= len(v):
                continue
            for m in range(len(u)):
                if k + m >= len(v):
                    break
                w = math.sqrt(math.comb(n, k) * math.comb(k + m, k))
                terms.append((w, v[k + m], u[m] * u[n - k]))
        out.append(_fsum_products(terms))
    return out


def sequence_to_expansion(seq: Sequence[float], box_n: int | None = None) -> ChaosExpansion:
    """Real 1-D sequence ``(c_0, c_1, ...)`` as a ``scalar(1)`` expansion in K=1."""
    n = len(seq) - 1 if box_n is None else box_n
    return ChaosExpansion(
        CoefShape.scalar(1),
        ((MultiIndex.unit(1, i), [float(c)]) for i, c in enumerate(seq)),
        TruncationBox(1, max(n, 0)),
    )


def expansion_to_sequence(v: ChaosExpansion, length: int) -> list[float]:
    if v.shape.size != 1:
        raise ShapeMismatch("expected a real-valued expansion")
    return [float(v.coef(MultiIndex.unit(1, i)).ravel()[0]) for i in range(length)]
