"""Command-line front end: ``tractoria compute | verify | list-metrics``."""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time

import numpy as np

from .curvature import lower_riemann, weyl_symmetry_residual
from .jets import JetError, ncoeffs
from .metrics import BUILTINS, MetricError, MetricEvaluationError, builtin_metric, parse_metric
from .obstruction import obstruction
from .tractor import scale_at

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# derivative order of each tensor in the metric; the obstruction is n
ORDERS = {
    "metric": 0,
    "christoffel": 1,
    "riemann": 2,
    "ricci": 2,
    "scalar": 2,
    "schouten": 2,
    "J": 2,
    "weyl": 2,
    "cotton": 3,
    "bach": 4,
    "obstruction": None,
}

# conformal weight of the reported (all-lower) components; Christoffel symbols are not tensorial
WEIGHTS = {
    "metric": 2,
    "christoffel": None,
    "riemann": 2,
    "ricci": 0,
    "scalar": -2,
    "schouten": 0,
    "J": -2,
    "weyl": 2,
    "cotton": 0,
    "bach": -2,
}

# seconds per (coefficient x n^4), calibrated on the dimension-8 obstruction
_COST = 7e-7


class UsageError(Exception):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TRACTORIA_THREADS", "1")))
    except ValueError:
        return 1


def load_metric(source: str):
    """``builtin:<name>?k=v,...`` or ``file:<path>``."""
    if source.startswith("builtin:"):
        body = source[len("builtin:") :]
        name, _, query = body.partition("?")
        params = {}
        if query:
            # values may contain commas (e.g. pow(x0, 2)), so split only before "key="
            for item in re.split(r",(?=\s*\w+\s*=)", query):
                key, eq, value = item.partition("=")
                if not eq:
                    raise UsageError(f"malformed metric parameter {item!r}")
                params[key.strip()] = value.strip()
        return builtin_metric(name, params)
    if source.startswith("file:"):
        path = source[len("file:") :]
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        return parse_metric(text)
    raise UsageError("metric source must start with 'builtin:' or 'file:'")


def parse_point(text: str, dim: int) -> list[float]:
    try:
        pt = [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"bad point {text!r}") from None
    if len(pt) != dim:
        raise UsageError(f"point has {len(pt)} coordinates, metric has dimension {dim}")
    if not all(math.isfinite(x) for x in pt):
        raise UsageError("point coordinates must be finite")
    return pt


def tensor_order(tensor: str, n: int) -> int:
    return n if tensor == "obstruction" else ORDERS[tensor]


def auto_degree(tensor: str, n: int, diagnostics: bool) -> int:
    d = tensor_order(tensor, n)
    # divergence diagnostics need one more order, except in dimension 8 where they are off by default
    if diagnostics and tensor == "obstruction" and n in (4, 6):
        d += 1
    return d


def estimate_seconds(n: int, degree: int) -> float:
    return _COST * ncoeffs(n, degree) * n**4


def _clean(x):
    if isinstance(x, np.ndarray) and x.ndim:
        return [_clean(y) for y in x]
    v = float(x)
    return v + 0.0  # no negative zeros in the output


def _components(tensor: str, scale):
    b = scale.bundle
    if tensor == "metric":
        return b.g.values()
    if tensor == "christoffel":
        # first kind, all lower: g_ad Gamma^d_bc
        return np.einsum("ad,dbc->abc", b.g.values(), b.Gamma[..., 0])
    if tensor == "riemann":
        return lower_riemann(b.R, b.g)[..., 0]
    table = {"ricci": "Ric", "scalar": "Sc", "schouten": "P", "J": "J", "weyl": "C", "cotton": "A", "bach": "B"}
    t = getattr(b, table[tensor])
    if t is None:
        raise JetError(f"jet degree too low for {tensor}")
    return t.values()


def _diagnostics(tensor: str, vals: np.ndarray, scale, tol: float) -> dict:
    scl = max(1.0, float(np.abs(vals).max(initial=0.0)))
    gi = scale.g_inv[..., 0]
    diag: dict = {}
    if vals.ndim == 2:
        diag["symmetry_residual"] = float(np.abs(vals - vals.T).max())
    if tensor in ("riemann", "weyl"):
        diag["symmetry_residual"] = weyl_symmetry_residual(vals)
    if tensor == "weyl":
        diag["trace_residual"] = float(np.abs(np.einsum("ac,abcd->bd", gi, vals)).max())
    if tensor == "cotton":
        skew = vals + vals.transpose(0, 2, 1)
        cyc = vals + vals.transpose(1, 2, 0) + vals.transpose(2, 0, 1)
        diag["symmetry_residual"] = float(max(np.abs(skew).max(), np.abs(cyc).max()))
        diag["trace_residual"] = float(np.abs(np.einsum("ab,abc->c", gi, vals)).max())
    if tensor == "bach":
        diag["trace_residual"] = abs(float(np.einsum("ab,ab->", gi, vals)))
    diag["scale"] = scl
    diag["tolerance"] = tol * scl
    diag["passed"] = all(v <= tol * scl for k, v in diag.items() if k.endswith("_residual"))
    return diag


def cmd_compute(args) -> tuple[int, str]:
    spec = load_metric(args.metric)
    n = spec.dim
    point = parse_point(args.point, n)
    diagnostics = args.diagnostics == "on"
    order = tensor_order(args.tensor, n)
    if args.tensor == "obstruction" and n not in (4, 6, 8):
        raise UsageError(f"the obstruction is implemented for n = 4, 6, 8 (got {n})")
    if args.degree == "auto":
        degree = auto_degree(args.tensor, n, diagnostics)
    else:
        try:
            degree = int(args.degree)
        except ValueError:
            raise UsageError(f"degree must be an integer or 'auto', got {args.degree!r}") from None
        if degree < order:
            raise UsageError(f"{args.tensor} needs a jet degree of at least {order}")
    est = estimate_seconds(n, degree)
    if args.time_budget is not None and est > args.time_budget:
        raise UsageError(
            f"estimated cost {est:.0f}s exceeds the time budget of {args.time_budget:g}s; "
            "lower the degree or raise --time-budget"
        )
    # the bundle always builds Christoffel symbols, which need one derivative
    scale = scale_at(spec, point, max(degree, 1))
    tol = 1e-4 if n == 8 else 1e-7
    if args.tensor == "obstruction":
        want_div = diagnostics and degree > n
        result = obstruction(scale, args.route, want_div)
        vals = result.B.values()
        diag = {k: float(v) for k, v in result.diagnostics.items()}
        bound = tol * diag["scale"]
        diag["tolerance"] = bound
        passed = all(v <= bound for k, v in diag.items() if k.endswith("_residual") and k != "upper_slot_residual")
        if "upper_slot_residual" in diag:
            passed = passed and diag["upper_slot_residual"] <= tol * diag["upper_slot_scale"]
        diag["passed"] = passed
        weight = 2 - n
    else:
        vals = np.asarray(_components(args.tensor, scale), dtype=float)
        diag = _diagnostics(args.tensor, vals, scale, tol)
        weight = WEIGHTS[args.tensor]
    if not np.all(np.isfinite(vals)):
        raise JetError("non-finite components")
    doc = {
        "tensor": args.tensor,
        "dim": n,
        "metric": spec.name,
        "point": point,
        "degree": degree,
        "index_convention": "all indices lowered, row-major nesting",
        "weight": weight,
        "components": _clean(np.asarray(vals)),
    }
    if args.tensor == "obstruction":
        doc["route"] = args.route
    if diagnostics:
        doc["diagnostics"] = diag
    return EXIT_OK, json.dumps(doc)


def cmd_verify(args) -> tuple[int, str]:
    from .verify import SUITES, _flatten

    checks = SUITES[args.suite](args.seed)
    results = []
    t0 = time.perf_counter()
    skipped = 0
    workers = _threads()
    if workers > 1 and args.time_budget is None:
        from .verify import run_suite

        results = run_suite(args.suite, args.seed, workers)
    else:
        for fn in checks:
            if args.time_budget is not None and time.perf_counter() - t0 > args.time_budget:
                skipped += 1
                continue
            results += _flatten(fn())
    wall = time.perf_counter() - t0
    ok = all(r.passed for r in results) and skipped == 0
    lines = []
    width = max((len(r.name) for r in results), default=10)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        lines.append(f"{mark}  {r.name:<{width}}  residual={r.residual:.3e}  tol={r.tolerance:.3e}  {r.wall:7.2f}s")
    if skipped:
        lines.append(f"SKIP  {skipped} checks not run: time budget of {args.time_budget:g}s exhausted")
    lines.append(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {wall:.1f}s")
    doc = {
        "suite": args.suite,
        "seed": args.seed,
        "passed": ok,
        "skipped": skipped,
        "wall": wall,
        "checks": [r.to_dict() for r in results],
    }
    text = json.dumps(doc) if args.format == "json" else "\n".join(lines) + "\n" + json.dumps(doc)
    return (EXIT_OK if ok else EXIT_VERIFY), text


def cmd_list(args) -> tuple[int, str]:
    if args.format == "json":
        return EXIT_OK, json.dumps(BUILTINS)
    width = max(len(k) for k in BUILTINS)
    return EXIT_OK, "\n".join(f"{k:<{width}}  {v}" for k, v in BUILTINS.items())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tractoria", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", help="curvature or obstruction components at a point")
    c.add_argument("--tensor", required=True, choices=sorted(ORDERS))
    c.add_argument("--metric", required=True, help="builtin:<name>?k=v,... or file:<path>")
    c.add_argument("--point", required=True, help="comma-separated coordinates")
    c.add_argument("--degree", default="auto", help="jet degree or 'auto'")
    c.add_argument("--diagnostics", choices=("on", "off"), default="on")
    c.add_argument("--route", choices=("direct", "tractor"), default="direct")
    c.add_argument("--format", choices=("json",), default="json")
    c.add_argument("--time-budget", type=float, default=600.0, help="refuse jobs estimated to take longer (seconds)")
    c.set_defaults(func=cmd_compute)

    v = sub.add_parser("verify", help="run the verification battery")
    v.add_argument("--suite", choices=("fast", "full", "dim8"), default="fast")
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--format", choices=("table", "json"), default="table")
    v.add_argument("--time-budget", type=float, default=None, help="skip remaining checks after this many seconds")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("list-metrics", help="describe the builtin metrics")
    m.add_argument("--format", choices=("text", "json"), default="text")
    m.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code, text = args.func(args)
    except MetricEvaluationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, MetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (JetError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
