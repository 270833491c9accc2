"""Command-line entry point: ``chaoskit <subcommand> ...``.

Exit codes: 0 success, 1 usage or input error, 2 shape or weight-relation
violation, 3 verification failure.  Every file written gets a sibling
``<file>.manifest.json`` with the command line, parsed configuration, seeds
and versions; the primary output itself never contains timestamps, so a
re-run from the manifest reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, hermite, operators, verify
from .chaos import (
    UNIT,
    ChaosExpansion,
    Kondratiev,
    SequencePower,
    ShapeMismatch,
    TruncationBox,
    duality_pairing,
    evaluate_batch,
    load,
    weighted_norm,
    white_noise,
)
from .multiindex import MultiIndex, UnsupportedIndex, enumerate_box

EXIT_USAGE = 1
EXIT_SHAPE = 2
EXIT_VERIFY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


# output helpers --------------------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, allow_nan=False, sort_keys=False, default=_json_default)


def _json_default(o):
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(path: Path, args, argv: list[str], started: float, seeds: dict | None = None) -> Path:
    man = {
        "command": ["chaoskit", *argv],
        "config": _config(args),
        "seeds": seeds if seeds is not None else {"seed": args.seed},
        "version": __version__,
        "numpy": np.__version__,
        "generator": hermite.GENERATOR_ID,
        "wall_clock": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "elapsed_s": round(time.time() - started, 6),
    }
    mpath = path.with_name(path.name + ".manifest.json")
    mpath.write_text(_dumps(man) + "\n")
    return mpath


def _emit(ctx, text: str, payload, out: str | None = None) -> None:
    """Write ``payload`` as JSON to ``out`` (with manifest) and print to stdout."""
    args = ctx["args"]
    if out:
        p = Path(out)
        p.write_text(_dumps(payload) + "\n")
        write_manifest(p, args, ctx["argv"], ctx["started"], ctx.get("seeds"))
    if args.quiet:
        return
    if args.json:
        print(_dumps(payload))
    else:
        print(text)


def _load(path: str) -> ChaosExpansion:
    try:
        return load(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}")
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise UsageError(f"malformed expansion file {path}: {e}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")


def _box(text: str | None) -> TruncationBox | None:
    if text is None:
        return None
    try:
        return TruncationBox.parse(text)
    except ValueError:
        raise UsageError(f"expected K,N for a box, got {text!r}")


def _fmt_coef(c: np.ndarray) -> str:
    return json.dumps(c.tolist())


def _expansion_text(v: ChaosExpansion) -> str:
    lines = [f"# {v.shape.kind} {v.shape.array_shape} box K={v.box.K} N={v.box.N} terms={len(v)}"]
    lines += [f"{a!r}\t{_fmt_coef(c)}" for a, c in v.terms.items()]
    return "\n".join(lines)


# subcommands ------------------------------------------------------------------------


def cmd_enumerate(ctx):
    a = ctx["args"]
    idx = enumerate_box(a.k, a.n)
    payload = [x.to_json() for x in idx]
    text = "\n".join(json.dumps(x.to_json()) for x in idx)
    _emit(ctx, text, payload, a.o)


def cmd_mc_sample(ctx):
    a = ctx["args"]
    if a.n < 1 or a.dims < 0:
        raise UsageError("need --n >= 1 and --dims >= 0")
    lines = []
    for xs in hermite.sample_chunks(a.dims, a.n, a.seed):
        lines.extend(json.dumps(row) for row in xs.tolist())
    text = "\n".join(lines)
    if a.o:
        p = Path(a.o)
        p.write_text(text + "\n")
        write_manifest(p, a, ctx["argv"], ctx["started"])
    if not a.quiet:
        print(text)


def cmd_eval(ctx):
    a = ctx["args"]
    v = _load(a.input)
    if a.point is not None:
        xs = np.array([_floats(a.point)])
    else:
        xs = hermite.sample_array(max(v.box.K, v.max_position()), a.samples, a.seed)
    if xs.shape[1] < v.max_position():
        raise UnsupportedIndex(f"expansion needs {v.max_position()} coordinates, got {xs.shape[1]}")
    vals = evaluate_batch(v, xs)
    payload = {"points": xs.tolist(), "values": vals.tolist()}
    text = "\n".join(json.dumps(row) for row in vals.tolist())
    _emit(ctx, text, payload, a.o)


def cmd_apply(ctx):
    a = ctx["args"]
    u = _load(a.u)
    x = _load(a.input)
    if a.as_tensor:
        x = x.as_tensor()
    out = _box(a.out_box)
    if a.op == "d":
        r = operators.malliavin_d(u, x, out, threads=a.threads)
    elif a.op == "delta":
        r = operators.skorokhod(u, x, out, threads=a.threads)
    elif a.op == "ou":
        r = operators.ornstein_uhlenbeck(u, x, out, threads=a.threads)
    else:
        r = operators.wick(x, u, out, threads=a.threads)
    _emit(ctx, _expansion_text(r), r.to_json(), a.o)


def cmd_wick(ctx):
    a = ctx["args"]
    f = _load(a.f)
    eta = _load(a.eta)
    r = operators.wick(f, eta, _box(a.out_box), basis=a.basis, threads=a.threads)
    _emit(ctx, _expansion_text(r), r.to_json(), a.o)


def _weight(a):
    if a.weight == "unit":
        return UNIT
    if a.weight == "seq":
        if a.q is None:
            raise UsageError("--weight seq needs --q")
        return SequencePower(_floats(a.q), a.p)
    return Kondratiev(a.rho, a.ell)


def cmd_norm(ctx):
    a = ctx["args"]
    v = _load(a.input)
    w = _weight(a)
    val = weighted_norm(v, w)
    _emit(ctx, repr(val), {"norm": val, "weights": w.describe()}, a.o)


def cmd_pairing(ctx):
    a = ctx["args"]
    val = float(duality_pairing(_load(a.a), _load(a.b)))
    _emit(ctx, repr(val), {"pairing": val}, a.o)


def cmd_verify(ctx):
    a = ctx["args"]
    if a.seed is None:
        raise UsageError("verify requires --seed")
    suites = verify.SUITES if a.suite == "all" else (a.suite,)
    results = [
        verify.run_suite(s, a.seed, n_instances=a.instances, threads=a.threads, mc_samples=a.mc_samples)
        for s in suites
    ]
    ok = all(r["all_pass"] for r in results)
    payload = {"seed": a.seed, "generator": hermite.GENERATOR_ID, "all_pass": ok, "suites": results}
    text = "\n".join(
        f"{r['suite']}: {'PASS' if r['all_pass'] else 'FAIL'} "
        f"({sum(x['pass'] for x in r['reports'])}/{r['n_reports']})"
        for r in results
    )
    report = a.report or (a.json if isinstance(a.json, str) else None)
    if report:
        p = Path(report)
        p.write_text(_dumps(payload) + "\n")
        write_manifest(p, a, ctx["argv"], ctx["started"])
    if not a.quiet:
        print(_dumps(payload) if a.json is True else text)
    return 0 if ok else EXIT_VERIFY


def example_white_noise(K: int) -> dict:
    """Skorokhod integral and OU image of truncated white noise on ``K``
    coordinates, plus the growing ``(0)`` coefficient of ``D_W(W)``."""
    if K < 1:
        raise UsageError("K must be >= 1")
    W = white_noise(K)
    s = operators.skorokhod(W, W.as_tensor())
    L = operators.ornstein_uhlenbeck(W, W)
    traces = []
    for k in range(1, K + 1):
        Wk = white_noise(k)
        d0 = operators.malliavin_d(Wk, Wk).coef(MultiIndex())
        traces.append(float(np.trace(d0)))
    expected = {MultiIndex.unit(k, 2): math.sqrt(2.0) for k in range(1, K + 1)}
    delta_ok = set(s.support()) == set(expected) and all(
        s.coef(a)[0] == val for a, val in expected.items()
    )
    return {
        "K": K,
        "skorokhod": s.to_json(),
        "skorokhod_matches_sqrt2_at_2eps": delta_ok,
        "ou_equals_input": L.equals(W),
        "derivative_zero_coefficient_trace": traces,
        "derivative_trace_monotone": all(b > a for a, b in zip(traces, traces[1:])),
        "derivative_status": "divergent" if traces == [float(k) for k in range(1, K + 1)] else "unexpected",
    }


def cmd_example_white_noise(ctx):
    a = ctx["args"]
    res = example_white_noise(a.k)
    s = ChaosExpansion.from_json(res["skorokhod"])
    lines = ["Skorokhod integral of white noise against itself:", _expansion_text(s)]
    lines.append(f"sqrt(2) at every 2eps(k): {res['skorokhod_matches_sqrt2_at_2eps']}")
    lines.append(f"OU image equals white noise: {res['ou_equals_input']}")
    lines.append("trace of the (0) coefficient of D_W(W) for K=1..: " + json.dumps(res["derivative_zero_coefficient_trace"]))
    lines.append(f"status: {res['derivative_status']} (grows like K)")
    _emit(ctx, "\n".join(lines), res, a.o)


def _random_seq(g, n_max, scale):
    # sum scale^n x_n^2 <= sum 2^-n
    return [float(g.uniform(-1, 1)) * (2.0 * scale) ** (-n / 2) for n in range(n_max + 1)]


def _wsum(seq, s):
    return math.fsum(x * x * s**n for n, x in enumerate(seq))


def example_1d(split=(1.0, 1.0, 0.5), ou=(1.0, 2.0, 0.5), n_max: int = 20, seed: int = 0) -> dict:
    """One-dimensional demonstration on the ``sum p^n x_n^2`` weight scale.

    Split case ``1/p + 1/q = 1/r``: ``sum r^n (d_u f)_n^2`` and
    ``sum (D_u v)_n^2 / q^n`` are bounded by products of input sums.
    OU case ``(1/r - 1/p)(q - 1/p) = 1``: ``sum r^n (L_u v)_n^2`` is bounded.
    """
    p, q, r = split
    if abs(1 / p + 1 / q - 1 / r) > 1e-12 * (1 / r):
        raise verify.RelationViolated(f"1/p + 1/q != 1/r for p={p}, q={q}, r={r}")
    po, qo, ro = ou
    if po * qo <= 1 or abs((1 / ro - 1 / po) * (qo - 1 / po) - 1) > 1e-12:
        raise verify.RelationViolated(f"(1/r - 1/p)(q - 1/p) != 1 for p={po}, q={qo}, r={ro}")
    g = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    u = _random_seq(g, n_max, p)
    f = _random_seq(g, n_max, q)
    v = _random_seq(g, n_max, 1 / r)
    delta = operators.oned_delta(u, f)
    d = operators.oned_d(u, v)
    su, sf, sv = _wsum(u, p), _wsum(f, q), _wsum(v, 1 / r)
    cbar_sq = p / (p - r)
    split_rep = {
        "p": p, "q": q, "r": r,
        "sum_p_u": su, "sum_q_f": sf, "sum_v_over_r": sv,
        "skorokhod_sum_r": _wsum(delta, r), "skorokhod_bound": su * sf,
        "derivative_sum_over_q": _wsum(d, 1 / q), "derivative_bound": cbar_sq * su * sv,
    }
    split_rep["skorokhod_margin"] = split_rep["skorokhod_bound"] - split_rep["skorokhod_sum_r"]
    split_rep["derivative_margin"] = split_rep["derivative_bound"] - split_rep["derivative_sum_over_q"]

    uo = _random_seq(g, n_max, po)
    vo = _random_seq(g, n_max, qo)
    L = operators.oned_ou(uo, vo)
    suo, svo = _wsum(uo, po), _wsum(vo, qo)
    c_ou = po * qo / (po * qo - 1)
    ou_rep = {
        "p": po, "q": qo, "r": ro,
        "sum_p_u": suo, "sum_q_v": svo,
        "ou_sum_r": _wsum(L, ro), "ou_bound": c_ou * suo * suo * svo,
    }
    ou_rep["ou_margin"] = ou_rep["ou_bound"] - ou_rep["ou_sum_r"]

    xi = [0.0, 1.0]
    dx = operators.oned_d(xi, v)
    sx = operators.oned_delta(xi, f)
    lx = operators.oned_ou(xi, v)
    closed = {
        "derivative": all(dx[n] == (math.sqrt(n + 1) * v[n + 1] if n + 1 < len(v) else 0.0) for n in range(len(dx))),
        "skorokhod": all(sx[n] == (math.sqrt(n) * f[n - 1] if 1 <= n <= len(f) else 0.0) for n in range(len(sx))),
        "ou": all(lx[n] == (n * v[n] if n < len(v) else 0.0) for n in range(len(lx))),
    }
    return {"n_max": n_max, "seed": seed, "split": split_rep, "ou": ou_rep, "xi_closed_forms": closed}


def cmd_example_1d(ctx):
    a = ctx["args"]
    split = tuple(_floats(a.split))
    ou = tuple(_floats(a.ou))
    if len(split) != 3 or len(ou) != 3:
        raise UsageError("--split and --ou take three numbers P,Q,R")
    res = example_1d(split, ou, a.n_max, a.seed)
    s, o = res["split"], res["ou"]
    text = "\n".join([
        f"split weights p={s['p']} q={s['q']} r={s['r']}:",
        f"  sum r^n (d_u f)_n^2 = {s['skorokhod_sum_r']!r} <= {s['skorokhod_bound']!r}",
        f"  sum (D_u v)_n^2/q^n = {s['derivative_sum_over_q']!r} <= {s['derivative_bound']!r}",
        f"OU weights p={o['p']} q={o['q']} r={o['r']}:",
        f"  sum r^n (L_u v)_n^2 = {o['ou_sum_r']!r} <= {o['ou_bound']!r}",
        "u = xi closed forms: " + json.dumps(res["xi_closed_forms"]),
    ])
    _emit(ctx, text, res, a.o)


# parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def flags(suppress: bool, json_path: bool = False) -> _Parser:
        # subcommand copies must not overwrite values given before the subcommand
        common = _Parser(add_help=False)
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        common.add_argument("--seed", type=int, default=dflt(None), help="seed for all randomness")
        common.add_argument("--threads", type=int, default=dflt(1), help="worker threads (results do not depend on it)")
        if json_path:
            common.add_argument(
                "--json", nargs="?", const=True, default=dflt(False), metavar="PATH",
                help="print JSON, or write the JSON report to PATH",
            )
        else:
            common.add_argument("--json", action="store_true", default=dflt(False), help="print JSON instead of text")
        common.add_argument("--quiet", action="store_true", default=dflt(False), help="print nothing on success")
        return common

    common = flags(suppress=True)
    ap = _Parser(prog="chaoskit", description="Operators on truncated Wiener chaos expansions.", parents=[flags(False)])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, parents=None, **kw):
        p = sub.add_parser(name, help=help_text, description=help_text, parents=parents or [common], **kw)
        p.set_defaults(func=func)
        return p

    p = add("enumerate", cmd_enumerate, "List indices with support in 1..K and degree <= N in graded order.")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--o")

    p = add("mc-sample", cmd_mc_sample, "Standard normal draws, one JSON array of K numbers per line.")
    p.add_argument("--dims", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--o")

    p = add("eval", cmd_eval, "Evaluate sum_a v_a xi_a at a point or at seeded samples.")
    p.add_argument("--in", dest="input", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--point", help="comma-separated coordinates xi_1,...,xi_K")
    g.add_argument("--samples", type=int)
    p.add_argument("--o")

    p = add(
        "apply",
        cmd_apply,
        "Apply an operator with driver u. "
        "d: (D_u v)_a = sum_b sqrt(C(a+b,b)) v_{a+b} (x) u_b; "
        "delta: (d_u f)_a = sum_{b<=a} sqrt(C(a,b)) (f_b, u_{a-b}); "
        "ou: (L_u v)_a = sum_{b<=a} sum_g sqrt(C(a,b) C(b+g,b)) v_{b+g} (u_g, u_{a-b}); "
        "wick: (v <> u)_a = sum_{b<=a} sqrt(C(a,b)) v_{a-b} u_b.",
    )
    p.add_argument("--op", choices=("d", "delta", "ou", "wick"), required=True)
    p.add_argument("--u", required=True, help="driver expansion (JSON)")
    p.add_argument("--in", dest="input", required=True, help="operand expansion (JSON)")
    p.add_argument("--out-box", help="K,N output box (default: full support hull)")
    p.add_argument("--as-tensor", action="store_true", help="read a scalar(dU) operand as tensor(1, dU)")
    p.add_argument("--o")

    p = add(
        "wick",
        cmd_wick,
        "Wick product (f <> eta)_a = sum_{b<=a} sqrt(C(a,b)) f_{a-b} eta_b; "
        "with --basis hep the coefficients refer to Hep_a = sqrt(a!) xi_a and Hep_a <> Hep_b = Hep_{a+b}.",
    )
    p.add_argument("--f", required=True)
    p.add_argument("--eta", required=True)
    p.add_argument("--basis", choices=("xi", "hep"), default="xi")
    p.add_argument("--out-box")
    p.add_argument("--o")

    p = add("norm", cmd_norm, "Weighted norm sqrt(sum_a r_a^2 |v_a|^2).")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--weight", choices=("unit", "seq", "kond"), default="unit")
    p.add_argument("--q", help="sequence q_1,...,q_K for r_a = q^(p a)")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--ell", type=float, default=0.0)
    p.add_argument("--o")

    p = add("pairing", cmd_pairing, "Duality pairing sum_a (u_a, v_a) over the shared support.")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--o")

    p = add(
        "verify", cmd_verify, "Run a verification suite; exit 3 if any check fails.",
        parents=[flags(True, json_path=True)],
    )
    p.add_argument("--suite", choices=(*verify.SUITES, "all"), required=True)
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--mc-samples", type=int, default=1_000_000)

    p = add(
        "example-white-noise",
        cmd_example_white_noise,
        "d_W(W) = sum_k sqrt(2) xi_{2eps(k)}, L_W(W) = W, and the divergent (0) coefficient sum_k u_k (x) u_k of D_W(W).",
    )
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--o")

    p = add(
        "example-1d",
        cmd_example_1d,
        "One coordinate: weighted sums of d_u f, D_u v, L_u v on the sum p^n x_n^2 scale.",
    )
    p.add_argument("--split", default="1,1,0.5", help="P,Q,R with 1/P + 1/Q = 1/R")
    p.add_argument("--ou", default="1,2,0.5", help="P,Q,R with (1/R - 1/P)(Q - 1/P) = 1")
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--o")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "verify" and args.seed is None:
        args.seed = 0
    ctx = {"args": args, "argv": argv, "started": time.time()}
    try:
        rc = args.func(ctx)
    except UsageError as e:
        sys.stderr.write(f"error: usage: {e}\n")
        return EXIT_USAGE
    except (ShapeMismatch, UnsupportedIndex) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_SHAPE
    except (verify.RelationViolated, verify.WeightViolation, verify.InvalidP) as e:
        sys.stderr.write(f"error: {type(e).__name__}: {e}\n")
        return EXIT_SHAPE
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
