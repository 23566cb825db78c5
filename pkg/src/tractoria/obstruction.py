"""The obstruction tensor in dimensions 4, 6 and 8 by two independent routes.

The *direct* routes evaluate closed Levi-Civita formulas written in a small
index notation (see :func:`evaluate_terms`).  The *tractor* routes build the
W-tractor, apply the relevant conformal Laplacian operator and read off the
bottom slot.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .curvature import LETTERS, TensorJet, perm
from .jets import JetError
from .tractor import Scale, box1_alpha, box2_dim8, dim8_terms, extract

# Factor syntax: Name, base indices, then optional "|" and derivative indices.
# Index groups start with "_" (lower) or "^" (upper).  Derivative indices are
# applied in the order written, so "B_ab|_cd" is nabla_d nabla_c B_ab.
_FACTOR = re.compile(r"^([A-Za-z]+)((?:[_^][a-z]+)*)(\|((?:[_^][a-z]+)*))?$")

BACH_DIM6_TERMS = (
    "1/16 B_ab|_c^c",
    "-1/4 J B_ab",
    "1/8 B_cd C_a^c_b^d",
    "-1/2 P_cd A_ab^d|^c",
    "1/4 A_cad A^c_b^d",
    "-1/2 A_cad A^d_b^c",
    "-1/4 A_abc J|^c",
    "1/4 P_cd P^d_e C_a^c_b^e",
)

# Dimension-8 tensor S_ab; the obstruction is S_(ab) / 384.
S8_TERMS = (
    "-1 B_ab|_c^c_d^d",
    "+10 B_ab|_c^c J",
    "-28 B_ab|_cd P^cd",
    "+24 B_ac|_bd P^cd",
    "-4 B_cd|_e^e C_a^c_b^d",
    "-24 B_ac|_d P_b^c|^d",
    "-24 B_cd|_a P_b^c|^d",
    "+56 B_ac|_d P_b^d|^c",
    "-6 B_ab|_c J|^c",
    "+12 B_ac|_b J|^c",
    "+24 B_cd|_a P^cd|_b",
    "-32 B_ac|_d P^cd|_b",
    "-4 B_cd|_e C_a^c_b^d|^e",
    "+4 B_ab J|_c^c",
    "-16 B_cd P^cd|_ab",
    "-40 B_cd P_ab|^cd",
    "+56 B_cd P_a^c|_b^d",
    "-8 B_ac B_b^c",
    "+3 B_cd B^cd g_ab",
    "-24 B_ab J J",
    "-64 B_ac P_bd P^cd",
    "+76 B_ab P_cd P^cd",
    "+28 B_cd g_ab P^c_e P^de",
    "+16 B_cd J C_a^c_b^d",
    "+32 B_cd P_ae C_b^cde",
    "-24 B_cd P^c_e C_a^d_b^e",
    "+4 B_cd C_ae^c_i C_b^edi",
    "-8 B_cd C_ae^c_i C_b^ide",
    "-8 A_acb J|_d^dc",
    "-32 A_acb|_de P^cd|^e",
    "-16 A_acd|_e A_b^cd|^e",
    "+16 A_cda|_e A^cd_b|^e",
    "-32 A_acb|_d J|^cd",
    "+32 A_cad|_e P_b^e P^cd",
    "-64 A_abc|_d P^cd J",
    "-128 A_acd|_e P_b^d P^ce",
    "-128 A_cad|_e P_b^d P^ce",
    "-608 A_acb|_d P^c_e P^de",
    "-32 A_cad|_b P^c_e P^de",
    "+32 A_acd|_e P^e_i C_b^cdi",
    "+32 A_cad|_e P^e_i C_b^cdi",
    "+32 A_acd|_e P^d_i C_b^cei",
    "+32 A_cad|_e P^d_i C_b^cei",
    "-64 A_abc|_d P_ei C^cedi",
    "+32 P_cd P_ei C_a^c_b^e|^di",
    "+32 P_cd J|_e C_a^c_b^e|^d",
    "+32 A_cde P^d_i C_a^c_b^e|^i",
    "+32 A_cde P^d_i C_a^c_b^i|^e",
    "+64 A_acd P_ei C_b^cde|^i",
    "+64 A_cad P_ei C_b^cde|^i",
    "+8 J|_c J|_d C_a^c_b^d",
    "-16 P_cd|_e P^c_i|^e C_a^d_b^i",
    "+32 A_cad J|_e C_b^cde",
    "-32 A_cad J|_e C_b^ecd",
    "-16 A_cde A^cd_i C_a^i_b^e",
    "+32 A_cde A^dc_i C_a^i_b^e",
    "-32 A_acd A_e^d_i C_b^eci",
    "-32 A_cad A^d_ei C_b^eci",
    "-32 A_cad A_ei^c C_b^ide",
    "+64 A_cad A_ebi C^cdei",
    "-32 A_cad A_ebi C^cedi",
    "-64 A_acd P_b^d J|^c",
    "-64 A_cad P_b^d J|^c",
    "-32 A_abc J J|^c",
    "-16 A_cda P^cd J|_b",
    "-224 A_acb P^c_d J|^d",
    "-96 A_cad A_e^cd P_b^e",
    "-192 A_cad A^cd_e P_b^e",
    "-224 A_acb P_de P^cd|^e",
    "-96 A_abc A_d^c_e P^de",
    "-320 A_cad A_eb^d P^ce",
    "+736 A_cad A^d_be P^ce",
    "-96 A_acd P_b^d|_e P^ce",
    "-96 A_cad P_b^d|_e P^ce",
    "-192 A_cad A^c_be P^de",
    "+16 P_cd P^c_e C_ai^d_j C_b^iej",
    "-32 P_cd P^c_e C_ai^d_j C_b^jei",
    "-32 P_cd P_ei C_ajb^c C^deij",
    "+4 g_ab P_cd P_ei C^c_j^e_k C^dijk",
    "-4 g_ab P_cd P_ei C^ce_jk C^djik",
    "-32 P_cd P_ei P^ei C_a^c_b^d",
    "+32 P_cd P^c_e J C_a^d_b^e",
    "-224 P_cd P_ei P^ce C_a^d_b^i",
    "+150 g_ab P_cd P_ei P^e_j C^cidj",
    "+150 g_ab P_cd P_ei P^c_j C^deij",
    "-32 P_ac P_de P^c_i C_b^dei",
    "-64 P_ac P_de P^d_i C_b^eci",
)


def k_constant(n: int) -> Fraction:
    """``k(n) = (n-2)(n-4)(-1)^(n/2-3) 2^(n-4) ((n/2-3)!)^2`` for even ``n >= 6``."""
    if n % 2 or n < 6:
        raise ValueError("k(n) is defined for even n >= 6")
    m = n // 2 - 3
    from math import factorial

    return Fraction((n - 2) * (n - 4) * (-1) ** m * 2 ** (n - 4) * factorial(m) ** 2)


def bottom_constant(n: int) -> Fraction:
    """``K(n)``: the operator applied to W equals ``K(n) X_[A Z_B] X_[C Z_D] B``.

    ``K(4) = -8`` and ``K(n) = (n-4) k(n)`` otherwise.
    """
    return Fraction(-8) if n == 4 else (n - 4) * k_constant(n)


# -- index-notation evaluator -------------------------------------------------------


@dataclass(frozen=True)
class Factor:
    name: str
    base: tuple  # ((letter, is_up), ...)
    derivs: tuple  # in order of application


def _parse_indices(text: str) -> tuple:
    out, up = [], None
    for ch in text:
        if ch in "_^":
            up = ch == "^"
        else:
            out.append((ch, up))
    return tuple(out)


def parse_term(text: str) -> tuple[Fraction, list[Factor]]:
    """``"<coefficient> factor factor ..."`` to a coefficient and factor list."""
    parts = text.split()
    coef = Fraction(parts[0])
    factors = []
    for p in parts[1:]:
        m = _FACTOR.match(p)
        if not m:
            raise ValueError(f"malformed factor {p!r}")
        factors.append(Factor(m.group(1), _parse_indices(m.group(2)), _parse_indices(m.group(4) or "")))
    return coef, factors


_RANKS = {"B": 2, "A": 3, "P": 2, "J": 0, "C": 4, "g": 2}


class TermEvaluator:
    """Evaluates index-notation terms over the curvature of one scale at a fixed degree."""

    def __init__(self, scale: Scale, degree: int, terms=()):
        self.scale = scale
        self.space = scale.space
        self.degree = degree
        self._derivs: dict = {}
        self.term_scale = 0.0
        # differentiate each tensor only from the degree actually needed
        self._order: dict = {}
        for t in terms:
            for f in parse_term(t)[1]:
                self._order[f.name] = max(self._order.get(f.name, 0), len(f.derivs))

    def _base(self, name: str) -> np.ndarray:
        b = self.scale.bundle
        table = {"B": b.B, "A": b.A, "P": b.P, "J": b.J, "C": b.C, "g": b.g}
        t = table[name]
        if t is None:
            raise JetError(f"metric jet degree too low for {name}")
        return t.data

    def _raw(self, name: str, k: int) -> np.ndarray:
        key = (name, k)
        if key not in self._derivs:
            if k == 0:
                base = self._base(name)
                need = self.degree + self._order.get(name, 0)
                if self.space.degree_of(base) > need:
                    base = self.space.truncate(base, need)
                self._derivs[key] = base
            else:
                self._derivs[key] = self.scale.geometry.nabla(self._raw(name, k - 1))
        return self._derivs[key]

    def derivative(self, name: str, k: int) -> np.ndarray:
        arr = self._raw(name, k)
        if self.space.degree_of(arr) < self.degree:
            raise JetError(f"jet degree too low for {k} derivatives of {name}")
        return self.space.truncate(arr, self.degree)

    def factor(self, f: Factor) -> tuple[str, np.ndarray]:
        if len(f.base) != _RANKS[f.name]:
            raise ValueError(f"{f.name} takes {_RANKS[f.name]} indices")
        arr = self.derivative(f.name, len(f.derivs))
        slots = tuple(reversed(f.derivs)) + f.base
        letters = "".join(c for c, _ in slots)
        for pos, (_, up) in enumerate(slots):
            if up:
                arr = self.scale.geometry.raise_index(arr, pos)
        if len(set(letters)) != len(letters):
            # internal trace; one of each pair is already raised
            free = "".join(c for c in letters if letters.count(c) == 1)
            arr = np.einsum(f"{letters}...->{free}...", arr)
            letters = free
        return letters, arr

    def term(self, text: str, out: str) -> np.ndarray:
        coef, factors = parse_term(text)
        ops = [self.factor(f) for f in factors]
        value = _contract(self.space, ops, out)
        value = float(coef) * value
        self.term_scale = max(self.term_scale, float(np.abs(value[..., 0]).max(initial=0.0)))
        return value

    def evaluate(self, terms, out: str = "ab") -> np.ndarray:
        total = 0.0
        for t in terms:
            total = total + self.term(t, out)
        return total


def _contract(space, ops, out: str) -> np.ndarray:
    letters, arr = ops[0]
    if len(ops) == 1:
        if letters == out:
            return arr
        return np.einsum(f"{letters}...->{out}...", arr)
    for k in range(1, len(ops)):
        nxt, arr2 = ops[k]
        later = set(out).union(*(set(l) for l, _ in ops[k + 1 :]))
        keep = "".join(dict.fromkeys(c for c in letters + nxt if c in later))
        arr = space.einsum(f"{letters},{nxt}->{keep}", arr, arr2)
        letters = keep
    if letters != out:
        arr = np.einsum(f"{letters}...->{out}...", arr)
    return arr


def evaluate_terms(scale: Scale, terms, degree: int, out: str = "ab") -> tuple[np.ndarray, float]:
    """Sum of index-notation terms; returns the jet array and the largest term magnitude."""
    ev = TermEvaluator(scale, degree, terms)
    value = ev.evaluate(terms, out)
    return value, ev.term_scale


# -- results -----------------------------------------------------------------------


@dataclass
class ObstructionResult:
    dim: int
    B: TensorJet
    route: str
    diagnostics: dict = field(default_factory=dict)


def divergence(b: TensorJet, scale: Scale) -> TensorJet:
    """``nabla^a B_ab`` in the trivialization of the scale."""
    space = scale.space
    if space.degree_of(b.data) < 1:
        raise JetError("divergence needs a jet of degree >= 1")
    db = scale.geometry.nabla(b.data)  # [c, a, b]
    gi = space.truncate(scale.g_inv, space.degree_of(db))
    return TensorJet(space.einsum("ca,cab->b", gi, db), (False,), b.weight - 2)


def _diagnostics(b: np.ndarray, scale: Scale, term_scale: float, want_divergence: bool) -> dict:
    space = scale.space
    vals = b[..., 0]
    gi = scale.g_inv[..., 0]
    diag = {
        "scale": max(1.0, term_scale),
        "trace_residual": abs(float(np.einsum("ab,ab->", gi, vals))),
        "symmetry_residual": float(np.abs(vals - vals.T).max()),
    }
    if want_divergence and space.degree_of(b) >= 1:
        div = divergence(TensorJet(b, (False, False), 2 - scale.n), scale)
        diag["divergence_residual"] = float(np.abs(div.values()).max())
    return diag


def _require_dim(scale: Scale, n: int) -> None:
    if scale.n != n:
        raise JetError(f"this route needs dimension {n}, got {scale.n}")


def _wrap(b: np.ndarray, scale: Scale, route: str, diag: dict) -> ObstructionResult:
    n = scale.n
    return ObstructionResult(n, TensorJet(b, (False, False), 2 - n, frozenset({"sym01"})), route, diag)


def bach_dim4(scale: Scale) -> tuple[np.ndarray, float]:
    """``nabla^c nabla^d C_acbd + 1/2 Ric^cd C_acbd`` (valid in dimension 4)."""
    b = scale.bundle
    b.require("C", "Ric")
    space, geo = scale.space, scale.geometry
    dc = geo.nabla(b.C.data)  # [d, a, c, b, e]
    ddc = geo.nabla(dc)  # [c', d', a, c, b, d]
    d = space.degree_of(ddc)
    gi = space.truncate(scale.g_inv, d)
    tmp = space.einsum("pc,pqacbd->qabd", gi, ddc)
    first = space.einsum("qd,qabd->ab", gi, tmp)
    ric_up = geo.raise_all(space.truncate(b.Ric.data, d), (0, 1))
    second = 0.5 * space.einsum("cd,acbd->ab", ric_up, space.truncate(b.C.data, d))
    scale_ = max(float(np.abs(first[..., 0]).max()), float(np.abs(second[..., 0]).max()))
    return first + second, scale_


def obstruction4(scale: Scale, divergence_check: bool = True) -> ObstructionResult:
    """``-1/2`` times the Bach tensor, which is computed by the dimension-4 formula."""
    _require_dim(scale, 4)
    bach4, s = bach_dim4(scale)
    out = -0.5 * bach4
    return _wrap(out, scale, "direct", _diagnostics(out, scale, 0.5 * s, divergence_check))


def obstruction6_direct(scale: Scale, divergence_check: bool = True) -> ObstructionResult:
    _require_dim(scale, 6)
    scale.bundle.require("B")
    degree = scale.space.degree_of(scale.bundle.B.data) - 2
    if degree < 0:
        raise JetError("dimension-6 obstruction needs a metric jet of degree >= 6")
    value, ts = evaluate_terms(scale, BACH_DIM6_TERMS, degree)
    value = 0.5 * (value + perm(value, 1, 0))
    return _wrap(value, scale, "direct", _diagnostics(value, scale, ts, divergence_check))


def _bottom_residual(t: np.ndarray, n: int) -> float:
    """Size of everything in a valence-4 tractor outside the X_[A Z_B] X_[C Z_D] pattern."""
    Z, X = slice(1, n + 1), n + 1
    vals = t[..., 0] if t.ndim == 5 else t
    mask = np.ones(vals.shape, dtype=bool)
    for sl in ((X, Z, X, Z), (Z, X, Z, X), (X, Z, Z, X), (Z, X, X, Z)):
        mask[sl] = False
    base = vals[X, Z, X, Z]
    pattern = max(
        float(np.abs(vals[Z, X, Z, X] - base).max()),
        float(np.abs(vals[X, Z, Z, X] + base).max()),
        float(np.abs(vals[Z, X, X, Z] + base).max()),
    )
    return max(float(np.abs(vals[mask]).max(initial=0.0)), pattern)


def obstruction6_tractor(scale: Scale, divergence_check: bool = True) -> ObstructionResult:
    """``(1/16) Y Z Y Z`` read-off of ``(box + 1/4 W##) W``."""
    _require_dim(scale, 6)
    W = scale.W
    lap = box1_alpha(W, 0.5, scale)
    bottom = extract(lap, "YZYZ")
    k = bottom_constant(6)
    value = (4 / float(k)) * bottom
    value = 0.5 * (value + perm(value, 1, 0))
    ts = float(np.abs(lap.data[..., 0]).max()) * 4 / float(k)
    diag = _diagnostics(value, scale, ts, divergence_check)
    diag["upper_slot_residual"] = _bottom_residual(lap.data, 6)
    diag["upper_slot_scale"] = max(1.0, float(np.abs(lap.data[..., 0]).max()))
    return _wrap(value, scale, "tractor", diag)


def obstruction8_direct(scale: Scale, divergence_check: bool = False) -> ObstructionResult:
    _require_dim(scale, 8)
    scale.bundle.require("B")
    degree = scale.space.degree_of(scale.bundle.B.data) - 4
    if degree < 0:
        raise JetError("dimension-8 obstruction needs a metric jet of degree >= 8")
    s, ts = evaluate_terms(scale, S8_TERMS, degree)
    value = (0.5 * (s + perm(s, 1, 0))) / 384.0
    return _wrap(value, scale, "direct", _diagnostics(value, scale, ts / 384.0, divergence_check))


def obstruction8_tractor(scale: Scale, divergence_check: bool = False) -> ObstructionResult:
    """``1/24576`` times the ``Y Z Y Z`` read-off of the eight-term tractor expression."""
    _require_dim(scale, 8)
    W = scale.W
    terms = dim8_terms(W, scale)
    pieces = (
        64 * terms.y_box_d,
        32 * terms.placements,
        terms.y_w_x_w,
        -3 * terms.w_w,
        -4 * terms.dw_dt,
    )
    total = sum(pieces)
    value = extract_bottom(total) / 24576.0
    value = 0.5 * (value + perm(value, 1, 0))
    ts = max(float(np.abs(extract_bottom(p)[..., 0]).max()) for p in pieces) / 24576.0
    diag = _diagnostics(value, scale, ts, divergence_check)
    full = box2_dim8(W, scale, terms)
    diag["upper_slot_residual"] = _bottom_residual(full.data, 8)
    diag["upper_slot_scale"] = max(1.0, float(np.abs(full.data[..., 0]).max()))
    k = bottom_constant(8)
    via_box2 = (4 / float(k)) * extract_bottom(full.data)
    diag["box2_route_difference"] = float(np.abs(via_box2[..., 0] - value[..., 0]).max())
    return _wrap(value, scale, "tractor", diag)


def extract_bottom(t: np.ndarray) -> np.ndarray:
    """``Y^B Z^C_a Y^D Z^E_b T_BCDE`` of a raw valence-4 tractor array."""
    n = t.shape[0] - 2
    Z, X = slice(1, n + 1), n + 1
    return t[X, Z, X, Z]


def obstruction(scale: Scale, route: str = "direct", divergence_check: bool | None = None) -> ObstructionResult:
    """Dispatch on dimension and route."""
    n = scale.n
    if n == 4:
        return obstruction4(scale, True if divergence_check is None else divergence_check)
    table = {
        (6, "direct"): obstruction6_direct,
        (6, "tractor"): obstruction6_tractor,
        (8, "direct"): obstruction8_direct,
        (8, "tractor"): obstruction8_tractor,
    }
    fn = table.get((n, route))
    if fn is None:
        raise JetError(f"no obstruction formula for dimension {n}")
    if divergence_check is None:
        return fn(scale)
    return fn(scale, divergence_check)


__all__ = [
    "BACH_DIM6_TERMS",
    "LETTERS",
    "S8_TERMS",
    "ObstructionResult",
    "bach_dim4",
    "bottom_constant",
    "divergence",
    "evaluate_terms",
    "k_constant",
    "obstruction",
    "obstruction4",
    "obstruction6_direct",
    "obstruction6_tractor",
    "obstruction8_direct",
    "obstruction8_tractor",
    "parse_term",
]
