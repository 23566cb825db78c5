"""Closed-form metrics: expression grammar, builtin registry, and jet lifting."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curvature import TensorJet
from .jets import JetError, jet_space

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class MetricError(ValueError):
    """Invalid metric description."""


class MetricEvaluationError(MetricError):
    """The metric is well formed but unusable at the requested point."""


class ExprSyntaxError(MetricError):
    """Malformed expression; ``column`` is the 0-based offset of the problem."""

    def __init__(self, message: str, column: int, text: str = ""):
        super().__init__(f"{message} at column {column}")
        self.column = column
        self.text = text


@dataclass(frozen=True)
class ExprNode:
    """Expression tree node.

    ``kind`` is one of ``const``, ``coord``, ``add``, ``sub``, ``mul``, ``div``,
    ``neg``, ``pow`` (``value`` holds the rational exponent) or ``call``
    (``value`` holds the function name).
    """

    kind: str
    children: tuple = ()
    value: object = None

    def __str__(self) -> str:
        return to_string(self)


def const(v) -> ExprNode:
    return ExprNode("const", (), float(v))


def coord(i: int) -> ExprNode:
    return ExprNode("coord", (), int(i))


def binary(op: str, a: ExprNode, b: ExprNode) -> ExprNode:
    return ExprNode(op, (a, b))


def call(fn: str, a: ExprNode) -> ExprNode:
    return ExprNode("call", (a,), fn)


def power(a: ExprNode, r) -> ExprNode:
    return ExprNode("pow", (a,), Fraction(r))


# -- tokenizer / parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos, toks = 0, []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, nvars: int | None):
        self.text = text
        self.nvars = nvars
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {value!r}, found {what}", tok[2], self.text)
        return self.take()

    def parse(self) -> ExprNode:
        node = self.sum()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2], self.text)
        return node

    def sum(self):
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = binary("add" if op == "+" else "sub", node, self.product())
        return node

    def product(self):
        node = self.power()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = binary("mul" if op == "*" else "div", node, self.power())
        return node

    def power(self):
        node = self.unary()
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("^", "**"):
            self.take()
            exp_tok = self.peek()
            exponent = self.power()
            node = power(node, _rational(exponent, exp_tok[2], self.text))
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return ExprNode("neg", (self.unary(),))
        if tok[0] == "op" and tok[1] == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.take()
        kind, text, col = tok
        if kind == "num":
            return const(float(text))
        if kind == "op" and text == "(":
            node = self.sum()
            self.expect(")")
            return node
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                self.take()
                if text in FUNCTIONS:
                    arg = self.sum()
                    self.expect(")")
                    return call(text, arg)
                if text == "pow":
                    base = self.sum()
                    self.expect(",")
                    exp_tok = self.peek()
                    exponent = self.sum()
                    self.expect(")")
                    return power(base, _rational(exponent, exp_tok[2], self.text))
                raise ExprSyntaxError(f"unknown function {text!r}", col, self.text)
            if text == "pi":
                return const(math.pi)
            m = re.fullmatch(r"x(\d+)", text)
            if m:
                i = int(m.group(1))
                if self.nvars is not None and i >= self.nvars:
                    raise ExprSyntaxError(f"coordinate {text} outside chart of dimension {self.nvars}", col, self.text)
                return coord(i)
            raise ExprSyntaxError(f"unknown identifier {text!r}", col, self.text)
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"expected an expression, found {what}", col, self.text)


def _rational(node: ExprNode, column: int, text: str) -> Fraction:
    if _has_coords(node):
        raise ExprSyntaxError("exponent must be a constant", column, text)
    value = evaluate(node, ())
    return Fraction(value).limit_denominator(10**6)


def _has_coords(node: ExprNode) -> bool:
    return node.kind == "coord" or any(_has_coords(c) for c in node.children)


def parse_expr(text: str, nvars: int | None = None) -> ExprNode:
    """Parse one expression string (coordinates ``x0``, ``x1``, ...)."""
    return _Parser(text, nvars).parse()


def max_coord(node: ExprNode) -> int:
    own = node.value if node.kind == "coord" else -1
    return max([own] + [max_coord(c) for c in node.children])


# -- printing and evaluation --------------------------------------------------

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _fmt_rational(r: Fraction) -> str:
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


def to_string(node: ExprNode) -> str:
    """Fully parenthesized text that parses back to an identical tree."""
    k = node.kind
    if k == "const":
        v = node.value
        return repr(v) if v >= 0 else f"(-{-v!r})"
    if k == "coord":
        return f"x{node.value}"
    if k in _INFIX:
        a, b = node.children
        return f"({to_string(a)} {_INFIX[k]} {to_string(b)})"
    if k == "neg":
        return f"(-{to_string(node.children[0])})"
    if k == "pow":
        return f"pow({to_string(node.children[0])}, {_fmt_rational(node.value)})"
    if k == "call":
        return f"{node.value}({to_string(node.children[0])})"
    raise MetricError(f"unknown node kind {k!r}")


def evaluate(node: ExprNode, x) -> float:
    """Floating-point value at the coordinate vector ``x``."""
    k = node.kind
    if k == "const":
        return node.value
    if k == "coord":
        return float(x[node.value])
    if k == "neg":
        return -evaluate(node.children[0], x)
    if k in _INFIX:
        a, b = (evaluate(c, x) for c in node.children)
        return {"add": a + b, "sub": a - b, "mul": a * b, "div": a / b if b else math.nan}[k]
    if k == "pow":
        base = evaluate(node.children[0], x)
        r = node.value
        if r.denominator == 1:
            return base ** int(r) if base != 0 or r >= 0 else math.nan
        return base ** float(r) if base > 0 else math.nan
    if k == "call":
        v = evaluate(node.children[0], x)
        fn = node.value
        if fn in ("log", "sqrt") and v <= 0 and not (fn == "sqrt" and v == 0):
            return math.nan
        return getattr(math, fn)(v)
    raise MetricError(f"unknown node kind {k!r}")


def lift_expr(node: ExprNode, point, degree: int) -> np.ndarray:
    """Jet (coefficient vector) of the expression expanded at ``point``."""
    space = jet_space(len(point))
    if max_coord(node) >= len(point):
        raise MetricError("expression uses a coordinate outside the chart")

    def rec(nd: ExprNode) -> np.ndarray:
        k = nd.kind
        if k == "const":
            return space.constant(nd.value, degree)
        if k == "coord":
            return space.variable(nd.value, float(point[nd.value]), degree)
        if k == "neg":
            return -rec(nd.children[0])
        if k == "add":
            return rec(nd.children[0]) + rec(nd.children[1])
        if k == "sub":
            return rec(nd.children[0]) - rec(nd.children[1])
        if k == "mul":
            return space.mul(rec(nd.children[0]), rec(nd.children[1]))
        if k == "div":
            return space.mul(rec(nd.children[0]), space.reciprocal(rec(nd.children[1])))
        if k == "pow":
            return space.apply("pow", rec(nd.children[0]), float(nd.value))
        if k == "call":
            return space.apply(nd.value, rec(nd.children[0]))
        raise MetricError(f"unknown node kind {k!r}")

    return rec(node)


# -- metric specs ---------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpec:
    dim: int
    entries: tuple  # n x n tuple of ExprNode
    signature: tuple = ()
    name: str | None = None

    def entry(self, i: int, j: int) -> ExprNode:
        return self.entries[i][j]

    def to_json(self) -> str:
        doc = {
            "dim": self.dim,
            "entries": [[to_string(e) for e in row] for row in self.entries],
        }
        if self.signature:
            doc["signature"] = list(self.signature)
        if self.name:
            doc["name"] = self.name
        return json.dumps(doc)


@dataclass(frozen=True)
class ConformalFactor:
    omega: ExprNode = field(default_factory=lambda: const(0.0))

    @classmethod
    def parse(cls, text: str, nvars: int | None = None) -> ConformalFactor:
        return cls(parse_expr(text, nvars))


def _check_symmetric(dim: int, entries) -> None:
    rng = np.random.default_rng(0)
    probes = [np.zeros(dim)] + [0.1 * rng.standard_normal(dim) for _ in range(3)]
    for i in range(dim):
        for j in range(i + 1, dim):
            a, b = entries[i][j], entries[j][i]
            if a is b or a == b or to_string(a) == to_string(b):
                continue
            for x in probes:
                va, vb = evaluate(a, x), evaluate(b, x)
                if not math.isclose(va, vb, rel_tol=1e-12, abs_tol=1e-12):
                    raise MetricError(f"asymmetric entries ({i},{j}) and ({j},{i})")


def make_metric(entries, name: str | None = None, signature=()) -> MetricSpec:
    """Build a spec from a square matrix of strings or ExprNodes."""
    dim = len(entries)
    if dim < 3:
        raise MetricError("metric dimension must be at least 3")
    rows = []
    parsed: dict = {}  # mirrored entries are usually the same text
    for i, row in enumerate(entries):
        if len(row) != dim:
            raise MetricError(f"row {i} has {len(row)} entries, expected {dim}")
        out = []
        for j, e in enumerate(row):
            if isinstance(e, ExprNode):
                node = e
                if max_coord(node) >= dim:
                    raise MetricError(f"entry ({i},{j}) uses a coordinate outside the chart")
            else:
                try:
                    text = str(e)
                    if text not in parsed:
                        parsed[text] = parse_expr(text, dim)
                    node = parsed[text]
                except ExprSyntaxError as exc:
                    raise ExprSyntaxError(
                        f"entry ({i},{j}): {exc.args[0].rsplit(' at column', 1)[0]}",
                        exc.column,
                        exc.text,
                    ) from None
            out.append(node)
        rows.append(tuple(out))
    _check_symmetric(dim, rows)
    if signature and (len(signature) != dim or any(s not in (1, -1) for s in signature)):
        raise MetricError("signature must list dim entries of +1 or -1")
    return MetricSpec(dim, tuple(rows), tuple(signature), name)


def parse_metric(text: str) -> MetricSpec:
    """Parse the JSON metric format ``{"dim", "entries", "signature"?, "name"?}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MetricError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise MetricError("metric document must be a JSON object")
    unknown = set(doc) - {"dim", "entries", "signature", "name"}
    if unknown:
        raise MetricError(f"unknown keys: {sorted(unknown)}")
    dim = doc.get("dim")
    if not isinstance(dim, int) or dim < 3:
        raise MetricError("'dim' must be an integer >= 3")
    entries = doc.get("entries")
    if not isinstance(entries, list) or len(entries) != dim:
        raise MetricError(f"'entries' must be a list of {dim} rows")
    for i, row in enumerate(entries):
        if not isinstance(row, list) or len(row) != dim:
            raise MetricError(f"row {i} of 'entries' must have {dim} items")
        for j, e in enumerate(row):
            if not isinstance(e, (str, int, float)) or isinstance(e, bool):
                raise MetricError(f"entry ({i},{j}) must be a string or number")
    entries = [[e if isinstance(e, str) else repr(float(e)) for e in row] for row in entries]
    return make_metric(entries, doc.get("name"), tuple(doc.get("signature") or ()))


def rescale_metric(spec: MetricSpec, omega: ConformalFactor) -> MetricSpec:
    """Entries of ``exp(2*omega) * g`` as expression trees."""
    if max_coord(omega.omega) >= spec.dim:
        raise MetricError("conformal factor uses a coordinate outside the chart")
    factor = call("exp", binary("mul", const(2.0), omega.omega))
    rows = tuple(tuple(binary("mul", factor, e) for e in row) for row in spec.entries)
    return MetricSpec(spec.dim, rows, spec.signature, spec.name)


# -- builtins -------------------------------------------------------------------


class SplitMix64:
    """The SplitMix64 generator (Steele, Lea and Flood 2014).

    Chosen because it is tiny and bit-exactly specified, so seeded metrics can
    be regenerated by any implementation.  ``uniform`` maps the top 53 bits to
    ``[0, 1)``.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next() >> 11) * 2.0**-53


def _sum_squares(vars_) -> str:
    return " + ".join(f"x{i}*x{i}" for i in vars_) if vars_ else "0"


def _sphere_factor(r: float, vars_) -> str:
    r2 = repr(float(r) ** 2)
    return f"4*{float(r) ** 4!r}/pow({r2} + {_sum_squares(vars_)}, 2)"


def _flat(n: int):
    return [["1" if i == j else "0" for j in range(n)] for i in range(n)]


def _poly_string(n: int, degree: int, coeffs) -> str:
    space = jet_space(n)
    space._ensure(degree)
    parts = []
    for k, c in enumerate(coeffs):
        mono = "*".join(f"x{i}" for i, e in enumerate(space.exponents[k]) for _ in range(int(e)))
        parts.append(f"({c!r})" + (f"*{mono}" if mono else ""))
    return _balanced_sum(parts)


def _balanced_sum(parts: list) -> str:
    # a flat "a + b + c ..." parses to a chain as deep as the term count; halving keeps trees shallow
    if len(parts) <= 2:
        return " + ".join(parts)
    mid = len(parts) // 2
    return f"({_balanced_sum(parts[:mid])}) + ({_balanced_sum(parts[mid:])})"


def _poly_perturbation(n: int, seed: int, eps: float, degree: int, entries: int | None):
    rng = SplitMix64(seed)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if entries is not None:
        if not 0 <= entries <= len(pairs):
            raise MetricError(f"entries must lie in [0, {len(pairs)}]")
        keys = [rng.uniform() for _ in pairs]
        chosen = {p for _, p in sorted(zip(keys, pairs))[:entries]}
    else:
        chosen = set(pairs)
    nmono = math.comb(n + degree, degree)
    rows = _flat(n)
    for i, j in pairs:
        if (i, j) not in chosen:
            continue
        coeffs = [2.0 * rng.uniform() - 1.0 for _ in range(nmono)]
        poly = _poly_string(n, degree, coeffs)
        text = f"{rows[i][j]} + {float(eps)!r}*({poly})"
        rows[i][j] = rows[j][i] = text
    return rows


def _int_param(params, key, default=None):
    if key not in params:
        if default is None:
            raise MetricError(f"missing parameter {key!r}")
        return default
    try:
        return int(params[key])
    except (TypeError, ValueError):
        raise MetricError(f"parameter {key!r} must be an integer") from None


def _float_param(params, key, default=None):
    if key not in params:
        if default is None:
            raise MetricError(f"missing parameter {key!r}")
        return default
    try:
        return float(params[key])
    except (TypeError, ValueError):
        raise MetricError(f"parameter {key!r} must be a number") from None


BUILTINS = {
    "flat": "flat(n): Euclidean metric",
    "sphere_stereo": "sphere_stereo(n, r=1): round n-sphere of radius r, stereographic chart",
    "conformally_flat": "conformally_flat(n, omega): exp(2*omega) times the Euclidean metric",
    "einstein_product": "einstein_product(p, q): S^p(1) x S^q(r), r^2 = (q-1)/(p-1)",
    "poly_perturbation": "poly_perturbation(n, seed, eps, d, entries=all): identity + eps*random polynomials",
}


def builtin_metric(name: str, params: dict | None = None) -> MetricSpec:
    params = dict(params or {})
    if name not in BUILTINS:
        raise MetricError(f"unknown builtin metric {name!r}")
    if name == "einstein_product":
        p, q = _int_param(params, "p"), _int_param(params, "q")
        if p < 2 or q < 2:
            raise MetricError("einstein_product needs p, q >= 2")
        r = math.sqrt((q - 1) / (p - 1))
        n = p + q
        rows = _flat(n)
        f1 = _sphere_factor(1.0, range(p))
        f2 = _sphere_factor(r, range(p, n))
        for i in range(n):
            rows[i][i] = f1 if i < p else f2
        return make_metric(rows, f"einstein_product(p={p},q={q})")
    n = _int_param(params, "n")
    if n < 3:
        raise MetricError("n must be at least 3")
    if name == "flat":
        return make_metric(_flat(n), f"flat(n={n})")
    if name == "sphere_stereo":
        r = _float_param(params, "r", 1.0)
        if r <= 0:
            raise MetricError("radius must be positive")
        rows = _flat(n)
        for i in range(n):
            rows[i][i] = _sphere_factor(r, range(n))
        return make_metric(rows, f"sphere_stereo(n={n},r={r!r})")
    if name == "conformally_flat":
        omega = params.get("omega")
        if omega is None:
            raise MetricError("missing parameter 'omega'")
        factor = ConformalFactor.parse(str(omega), n)
        spec = rescale_metric(make_metric(_flat(n)), factor)
        return MetricSpec(n, spec.entries, (), f"conformally_flat(n={n},omega={omega})")
    seed = _int_param(params, "seed")
    eps = _float_param(params, "eps")
    degree = _int_param(params, "d")
    entries = _int_param(params, "entries", -1)
    if degree < 0:
        raise MetricError("polynomial degree must be non-negative")
    rows = _poly_perturbation(n, seed, eps, degree, None if entries < 0 else entries)
    return make_metric(rows, f"poly_perturbation(n={n},seed={seed},eps={eps!r},d={degree})")


# -- lifting --------------------------------------------------------------------


def jet_inverse(mat: np.ndarray, nvars: int) -> np.ndarray:
    """Inverse of a square matrix of jets by Gauss-Jordan elimination with pivoting."""
    space = jet_space(nvars)
    n = mat.shape[0]
    d = space.degree_of(mat)
    aug = np.concatenate([mat, space.constant(np.eye(n), d)], axis=1)
    for col in range(n):
        cand = np.abs(aug[col:, col, 0])
        r = col + int(np.argmax(cand))
        row_scale = np.abs(aug[r, :n, 0]).max()
        if cand.max() < 1e-10 * max(row_scale, 1e-300):
            raise MetricEvaluationError("metric is singular at the point")
        if r != col:
            aug[[col, r]] = aug[[r, col]]
        inv_p = space.reciprocal(aug[col, col])
        aug[col] = space.mul(inv_p[None], aug[col])
        others = [i for i in range(n) if i != col]
        if others:
            factors = aug[others, col]
            aug[others] -= space.mul(factors[:, None], aug[col][None])
    return aug[:, n:]


def lift_metric(spec: MetricSpec, point, degree: int):
    """Metric and inverse metric as weight-0 TensorJets expanded at ``point``."""
    point = np.asarray(point, dtype=float)
    if point.shape != (spec.dim,):
        raise MetricError(f"point must have {spec.dim} coordinates")
    if degree < 0:
        raise MetricError("degree must be non-negative")
    n = spec.dim
    space = jet_space(n)
    g = space.zeros((n, n), degree)
    cache = {}
    for i in range(n):
        for j in range(i, n):
            node = spec.entries[i][j]
            key = to_string(node)
            if key not in cache:
                try:
                    cache[key] = lift_expr(node, point, degree)
                except JetError as exc:
                    raise MetricError(f"entry ({i},{j}): {exc}") from None
            g[i, j] = g[j, i] = cache[key]
    if not np.all(np.isfinite(g)):
        raise MetricEvaluationError("metric entries are not finite at the point")
    ginv = jet_inverse(g, n)
    ginv = 0.5 * (ginv + ginv.transpose(1, 0, 2))
    return (
        TensorJet(g, (False, False), 0, frozenset({"sym01"})),
        TensorJet(ginv, (True, True), 0, frozenset({"sym01"})),
    )
