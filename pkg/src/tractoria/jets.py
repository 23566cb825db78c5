"""Truncated multivariate Taylor series (jets).

A jet of degree ``d`` in ``n`` variables is stored as a dense float64 vector of
plain monomial coefficients ``c_alpha`` (``f ~ sum c_alpha (x - p)^alpha``) in
graded-lexicographic order.  Because the order is graded, truncating to a lower
degree is a prefix slice.

Most of the package works with *jet arrays*: numpy arrays whose last axis holds
the coefficients and whose leading axes index tensor components.  The
:class:`JetSpace` object owns the monomial tables for one chart dimension and
provides the batched operations (products, contractions, partials, univariate
functions).  :class:`Jet` is a thin scalar wrapper for interactive use.
"""

from __future__ import annotations

import itertools
import math
from functools import cache

import numpy as np
import scipy.sparse as sp


class JetError(ValueError):
    """Invalid jet operation (dimension mismatch, exhausted degree, ...)."""


class JetDomainError(JetError):
    """A univariate function was applied outside its domain of analyticity."""


def ncoeffs(nvars: int, degree: int) -> int:
    """Number of monomials of total degree <= ``degree`` in ``nvars`` variables."""
    if degree < 0:
        return 0
    return math.comb(nvars + degree, degree)


class JetSpace:
    """Monomial tables and batched arithmetic for jets in ``nvars`` variables."""

    def __init__(self, nvars: int, max_degree: int = 4):
        if nvars < 1:
            raise JetError("jets need at least one variable")
        self.nvars = nvars
        self.max_degree = -1
        self._block_cache: dict = {}
        self._ensure(max_degree)

    # -- tables -------------------------------------------------------------

    def _ensure(self, degree: int) -> None:
        if degree <= self.max_degree:
            return
        degree = max(degree, self.max_degree + 2)
        n = self.nvars
        rows = []
        for d in range(degree + 1):
            for combo in itertools.combinations_with_replacement(range(n), d):
                rows.append(np.bincount(np.asarray(combo, dtype=np.int64), minlength=n))
        exps = np.array(rows, dtype=np.int64).reshape(-1, n)
        self.exponents = exps
        self.total = exps.sum(axis=1)
        self.offsets = np.array([ncoeffs(n, d - 1) for d in range(degree + 2)])
        base = degree + 1
        self._base = base
        self.keys = exps @ (base ** np.arange(n, dtype=np.int64))
        self._key_order = np.argsort(self.keys, kind="stable")
        self._sorted_keys = self.keys[self._key_order]
        self._ncoef_to_degree = {ncoeffs(n, d): d for d in range(degree + 1)}
        self.max_degree = degree
        self._block_cache.clear()
        self._partial_cache: dict = {}
        self._factorials = np.array([math.prod(math.factorial(int(e)) for e in row) for row in exps], dtype=float)

    def size(self, degree: int) -> int:
        return ncoeffs(self.nvars, degree)

    def degree_of(self, arr: np.ndarray) -> int:
        try:
            return self._ncoef_to_degree[arr.shape[-1]]
        except KeyError:
            ncoef = arr.shape[-1]
            d = 0
            while ncoeffs(self.nvars, d) < ncoef:
                d += 1
            if ncoeffs(self.nvars, d) != ncoef:
                raise JetError(f"{ncoef} coefficients is not a full jet in {self.nvars} variables")
            self._ensure(d)
            return d

    def index_of(self, alpha) -> int:
        alpha = np.asarray(alpha, dtype=np.int64)
        if alpha.shape != (self.nvars,) or (alpha < 0).any():
            raise JetError(f"bad multi-index {tuple(alpha.tolist())}")
        self._ensure(int(alpha.sum()))
        key = int(alpha @ (self._base ** np.arange(self.nvars, dtype=np.int64)))
        pos = int(np.searchsorted(self._sorted_keys, key))
        return int(self._key_order[pos])

    def _lookup(self, keys: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self._sorted_keys, keys)
        return self._key_order[pos]

    # -- constructors -------------------------------------------------------

    def zeros(self, shape, degree: int) -> np.ndarray:
        self._ensure(degree)
        return np.zeros(tuple(shape) + (self.size(degree),))

    def constant(self, values, degree: int) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = self.zeros(values.shape, degree)
        out[..., 0] = values
        return out

    def variable(self, i: int, value: float, degree: int) -> np.ndarray:
        """Jet of the coordinate function ``x_i`` expanded at ``x_i = value``."""
        out = self.constant(value, degree)
        if degree >= 1:
            out[1 + i] = 1.0
        return out

    def truncate(self, arr: np.ndarray, degree: int) -> np.ndarray:
        have = self.degree_of(arr)
        if degree > have:
            raise JetError(f"cannot raise jet degree from {have} to {degree}")
        return arr[..., : self.size(degree)]

    def common(self, *arrays: np.ndarray) -> tuple[np.ndarray, ...]:
        """Truncate all arrays to their smallest degree."""
        d = min(self.degree_of(a) for a in arrays)
        return tuple(self.truncate(a, d) for a in arrays)

    # -- products -----------------------------------------------------------

    def _shift(self, alpha: int, degree: int) -> np.ndarray:
        """Positions of ``x^alpha * x^beta`` for every ``|beta| <= degree - |alpha|``."""
        key = (alpha, degree)
        hit = self._block_cache.get(key)
        if hit is None:
            m = self.size(degree - int(self.total[alpha]))
            hit = self._lookup(self.keys[alpha] + self.keys[:m])
            self._block_cache[key] = hit
        return hit

    def _pairs(self, degree: int):
        """All monomial pairs ``(i, j)`` with ``|i| + |j| <= degree`` and the scatter onto ``i + j``."""
        key = ("pairs", degree)
        hit = self._block_cache.get(key)
        if hit is None:
            m = self.size(degree)
            tot = self.total[:m]
            i, j = np.nonzero(tot[:, None] + tot[None, :] <= degree)
            t = self._lookup(self.keys[i] + self.keys[j])
            scatter = sp.csr_matrix((np.ones(t.size), (np.arange(t.size), t)), shape=(t.size, m))
            hit = (i, j, scatter, t)
            self._block_cache[key] = hit
        return hit

    def einsum(self, subscripts: str, a: np.ndarray, b: np.ndarray, degree: int | None = None):
        """Contraction of two jet arrays with truncated Cauchy product on coefficients.

        ``subscripts`` uses numpy notation for the component axes only, e.g.
        ``"ab,bc->ac"``; the coefficient axis is implicit.
        """
        ins, out = subscripts.replace(" ", "").split("->")
        sa, sb = ins.split(",")
        da, db = self.degree_of(a), self.degree_of(b)
        d = min(da, db) if degree is None else degree
        if d > min(da, db):
            raise JetError("requested degree exceeds operand degree")
        if d < 0:
            raise JetError("degree exhausted")
        self._ensure(d)
        n_out = self.size(d)
        a, b = a[..., :n_out], b[..., :n_out]
        used = set(sa + sb + out)
        cj = next(c for c in "ijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in used)
        dims = {}
        for letters, arr in ((sa, a), (sb, b)):
            for c, size in zip(letters, arr.shape[:-1]):
                dims[c] = size
        out_shape = tuple(dims[c] for c in out)
        live_a = np.flatnonzero(np.abs(a).reshape(-1, n_out).max(axis=0))
        live_b = np.flatnonzero(np.abs(b).reshape(-1, n_out).max(axis=0))
        if live_a.size == 0 or live_b.size == 0:
            return np.zeros(out_shape + (n_out,))
        # rough cost model in array-element units; a numpy call costs ~1e4
        work = math.prod(dims.values())
        npairs = ncoeffs(2 * self.nvars, d)
        shift_a = live_a.size * (1e4 + work * npairs / n_out)
        shift_b = live_b.size * (1e4 + work * npairs / n_out)
        if 3.0 * npairs * work < min(shift_a, shift_b) and npairs * work < 4e8:
            return self._einsum_pairs(sa, sb, out, a, b, d, out_shape, cj)
        if shift_b < shift_a:
            a, b, sa, sb, live_a = b, a, sb, sa, live_b
        # accumulate with the coefficient axis first so each scatter moves whole rows
        acc = np.zeros((n_out,) + out_shape)
        bt = np.ascontiguousarray(np.moveaxis(b, -1, 0))
        expr = f"{sa},{cj}{sb}->{cj}{out}"
        path = None
        for alpha in live_a.tolist():
            tgt = self._shift(alpha, d)
            m = tgt.size
            if path is None or m != path[0]:
                path = (m, np.einsum_path(expr, a[..., alpha], bt[:m], optimize="optimal")[0])
            part = np.einsum(expr, a[..., alpha], bt[:m], optimize=path[1])
            if alpha == 0:
                acc[:m] += part
            else:
                acc[tgt] += part
        return np.ascontiguousarray(np.moveaxis(acc, 0, -1))

    def _einsum_pairs(self, sa, sb, out, a, b, d, out_shape, cj):
        i, j, scatter, t = self._pairs(d)
        if a.ndim == 1 and b.ndim == 1:
            # scalar product: a weighted bincount beats building sparse slices
            return np.bincount(t, weights=a[i] * b[j], minlength=self.size(d))
        out_size = max(1, math.prod(out_shape))
        result = np.zeros((out_size, self.size(d)))
        work = max(1, a[..., 0].size * b[..., 0].size)
        step = max(1, int(2e7 // work))
        expr = f"{sa}{cj},{sb}{cj}->{out}{cj}"
        for k0 in range(0, i.size, step):
            k1 = min(i.size, k0 + step)
            t = np.einsum(expr, a[..., i[k0:k1]], b[..., j[k0:k1]], optimize=True)
            result += (scatter[k0:k1].T @ t.reshape(out_size, -1).T).T
        return result.reshape(out_shape + (self.size(d),))

    def mul(self, a: np.ndarray, b: np.ndarray, degree: int | None = None) -> np.ndarray:
        """Elementwise (broadcasting) jet product."""
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
        a = np.broadcast_to(a, shape + a.shape[-1:])
        b = np.broadcast_to(b, shape + b.shape[-1:])
        letters = "abcdefgh"[: len(shape)]
        if len(shape) > 8:
            a = a.reshape((-1, a.shape[-1]))
            b = b.reshape((-1, b.shape[-1]))
            return self.einsum("a,a->a", a, b, degree).reshape(shape + (-1,))
        return self.einsum(f"{letters},{letters}->{letters}", a, b, degree)

    # -- calculus -----------------------------------------------------------

    def _partial_map(self, i: int, degree: int):
        key = (i, degree)
        hit = self._partial_cache.get(key)
        if hit is None:
            m = self.size(degree - 1)
            exps = self.exponents[:m].copy()
            factor = exps[:, i] + 1.0
            exps[:, i] += 1
            src = self._lookup(exps @ (self._base ** np.arange(self.nvars, dtype=np.int64)))
            hit = (src, factor)
            self._partial_cache[key] = hit
        return hit

    def partial(self, arr: np.ndarray, i: int) -> np.ndarray:
        d = self.degree_of(arr)
        if d < 1:
            raise JetError("partial derivative of a degree-0 jet loses all information")
        if not 0 <= i < self.nvars:
            raise JetError(f"coordinate index {i} out of range")
        src, factor = self._partial_map(i, d)
        return arr[..., src] * factor

    def grad(self, arr: np.ndarray) -> np.ndarray:
        """All first partials, stacked on a new leading axis."""
        return np.stack([self.partial(arr, i) for i in range(self.nvars)])

    def derivative_values(self, arr: np.ndarray) -> np.ndarray:
        """Coefficients scaled by alpha!, i.e. the partial derivatives at the base point."""
        d = self.degree_of(arr)
        return arr * self._factorials[: self.size(d)]

    # -- univariate functions -----------------------------------------------

    def compose(self, arr: np.ndarray, taylor: np.ndarray) -> np.ndarray:
        """Evaluate ``sum_k taylor[k] * h**k`` with ``h = arr - arr(0)``.

        ``taylor`` has shape ``(d+1,) + arr.shape[:-1]`` (per-element series).
        """
        d = self.degree_of(arr)
        h = arr.copy()
        h[..., 0] = 0.0
        out = self.constant(taylor[d], d)
        for k in range(d - 1, -1, -1):
            out = self.mul(out, h)
            out[..., 0] += taylor[k]
        return out

    def apply(self, name: str, arr: np.ndarray, r: float | None = None) -> np.ndarray:
        """Apply ``exp``, ``log``, ``sin``, ``cos``, ``sqrt`` or ``pow`` elementwise."""
        d = self.degree_of(arr)
        a0 = np.asarray(arr[..., 0], dtype=float)
        k = np.arange(d + 1).reshape((-1,) + (1,) * a0.ndim)
        fact = np.array([math.factorial(j) for j in range(d + 1)], dtype=float).reshape(k.shape)
        if name == "exp":
            taylor = np.exp(a0)[None] / fact
        elif name == "log":
            if np.any(a0 <= 0):
                raise JetDomainError("log needs a positive constant term")
            kk = np.maximum(k, 1)
            taylor = np.where(k == 0, np.log(a0)[None], (-1.0) ** (kk + 1) / (kk * a0[None] ** kk))
        elif name in ("sin", "cos"):
            phase = 0.0 if name == "sin" else math.pi / 2
            taylor = np.sin(a0[None] + phase + k * math.pi / 2) / fact
        elif name == "sqrt":
            return self.apply("pow", arr, 0.5)
        elif name == "pow":
            if r is None:
                raise JetError("pow needs an exponent")
            r = float(r)
            if r == int(r) and r >= 0:
                out = self.constant(np.ones(a0.shape), d)
                for _ in range(int(r)):
                    out = self.mul(out, arr)
                return out
            if r == int(r):
                if np.any(a0 == 0):
                    raise JetDomainError("negative power of a jet with zero constant term")
            elif np.any(a0 <= 0):
                raise JetDomainError("fractional power needs a positive constant term")
            coef = np.array([_binom(r, j) for j in range(d + 1)]).reshape(k.shape)
            taylor = coef * a0[None] ** (r - k)
        else:
            raise JetError(f"unknown function {name!r}")
        return self.compose(arr, taylor)

    def reciprocal(self, arr: np.ndarray) -> np.ndarray:
        return self.apply("pow", arr, -1.0)


def _binom(r: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= (r - j) / (j + 1)
    return out


@cache
def jet_space(nvars: int) -> JetSpace:
    """Shared :class:`JetSpace` for ``nvars`` variables."""
    return JetSpace(nvars)


class Jet:
    """Scalar jet: ``dim`` variables, truncation ``degree``, monomial ``coeffs``."""

    __slots__ = ("coeffs", "degree", "dim")

    def __init__(self, dim: int, degree: int, coeffs=None):
        space = jet_space(dim)
        space._ensure(degree)
        size = space.size(degree)
        if coeffs is None:
            arr = np.zeros(size)
        else:
            arr = np.array(coeffs, dtype=float)
            if arr.shape != (size,):
                raise JetError(f"expected {size} coefficients, got {arr.shape}")
        arr.flags.writeable = False
        self.dim, self.degree, self.coeffs = dim, degree, arr

    @classmethod
    def from_terms(cls, dim: int, degree: int, terms: dict) -> Jet:
        """Build from ``{multi-index: coefficient}``; terms above ``degree`` are dropped."""
        space = jet_space(dim)
        arr = np.zeros(space.size(degree))
        for alpha, c in terms.items():
            if sum(alpha) <= degree:
                arr[space.index_of(alpha)] += c
        return cls(dim, degree, arr)

    @classmethod
    def constant(cls, dim: int, degree: int, value: float) -> Jet:
        return cls(dim, degree, jet_space(dim).constant(value, degree))

    @classmethod
    def variable(cls, dim: int, degree: int, i: int, value: float = 0.0) -> Jet:
        return cls(dim, degree, jet_space(dim).variable(i, value, degree))

    @property
    def space(self) -> JetSpace:
        return jet_space(self.dim)

    def terms(self) -> dict:
        exps = self.space.exponents
        return {tuple(int(e) for e in exps[k]): float(c) for k, c in enumerate(self.coeffs) if c != 0.0}

    def _coerce(self, other) -> Jet:
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise JetError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        return Jet.constant(self.dim, self.degree, float(other))

    def _pair(self, other):
        other = self._coerce(other)
        d = min(self.degree, other.degree)
        n = self.space.size(d)
        return self.coeffs[:n], other.coeffs[:n], d

    def __add__(self, other):
        a, b, d = self._pair(other)
        return Jet(self.dim, d, a + b)

    __radd__ = __add__

    def __sub__(self, other):
        a, b, d = self._pair(other)
        return Jet(self.dim, d, a - b)

    def __rsub__(self, other):
        a, b, d = self._pair(other)
        return Jet(self.dim, d, b - a)

    def __neg__(self):
        return Jet(self.dim, self.degree, -self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.dim, self.degree, self.coeffs * float(other))
        return jet_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.dim, self.degree, self.coeffs / float(other))
        return jet_mul(self, jet_apply_univariate("pow", other, -1.0))

    def __rtruediv__(self, other):
        return jet_apply_univariate("pow", self, -1.0) * float(other)

    def __pow__(self, r):
        return jet_apply_univariate("pow", self, r)

    def __repr__(self):
        return f"Jet(dim={self.dim}, degree={self.degree}, terms={self.terms()})"


def jet_mul(a: Jet, b: Jet) -> Jet:
    if a.dim != b.dim:
        raise JetError(f"dimension mismatch: {a.dim} vs {b.dim}")
    d = min(a.degree, b.degree)
    space = a.space
    n = space.size(d)
    return Jet(a.dim, d, space.mul(a.coeffs[:n], b.coeffs[:n]))


def jet_apply_univariate(name: str, a: Jet, r: float | None = None) -> Jet:
    return Jet(a.dim, a.degree, a.space.apply(name, a.coeffs, r))


def jet_partial(a: Jet, i: int) -> Jet:
    return Jet(a.dim, a.degree - 1, a.space.partial(a.coeffs, i))


def jet_derivative_value(a: Jet, alpha) -> float:
    alpha = tuple(int(x) for x in alpha)
    if len(alpha) != a.dim:
        raise JetError(f"multi-index length {len(alpha)} != dim {a.dim}")
    if sum(alpha) > a.degree:
        raise JetError(f"|alpha| = {sum(alpha)} exceeds jet degree {a.degree}")
    idx = a.space.index_of(alpha)
    return float(a.coeffs[idx] * math.prod(math.factorial(k) for k in alpha))
