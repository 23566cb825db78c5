"""Operators from the start of the conformal deformation complex acting on tensors.

All three take a :class:`~tractoria.tractor.Scale` for the metric, its
Levi-Civita connection and Schouten tensor.
"""

from __future__ import annotations

import numpy as np

from .curvature import TensorJet, perm, weyl_symmetry_residual
from .jets import JetError
from .tractor import Scale, _need


def _check_covariant(t: TensorJet, rank: int, what: str) -> None:
    if t.rank != rank or any(t.up):
        raise JetError(f"{what} expects a covariant {rank}-tensor")


def _check_weyl(u: TensorJet, tol: float) -> None:
    vals = u.values()
    scale = max(1.0, float(np.abs(vals).max()))
    res = weyl_symmetry_residual(vals)
    if res > tol * scale:
        raise JetError(f"input lacks Weyl symmetries (residual {res:.3g})")


def project_weyl(u: np.ndarray, scale: Scale) -> np.ndarray:
    """Project a covariant 4-tensor jet onto algebraic Weyl tensors for the scale's metric."""
    space, n = scale.space, scale.n
    t = 0.5 * (u - perm(u, 1, 0, 2, 3))
    t = 0.5 * (t - perm(t, 0, 1, 3, 2))
    t = 0.5 * (t + perm(t, 2, 3, 0, 1))
    # remove the totally skew part, which is all that violates the first Bianchi identity
    t = t - (t + perm(t, 1, 2, 0, 3) + perm(t, 2, 0, 1, 3)) / 3.0
    d = space.degree_of(t)
    g = _need(space, scale.g, d, "metric")
    gi = _need(space, scale.g_inv, d, "inverse metric")
    ric = space.einsum("ac,abcd->bd", gi, t)
    sc = space.einsum("bd,bd->", gi, ric)
    p = (ric - space.einsum(",bd->bd", sc, g) / (2 * (n - 1))) / (n - 2)
    sub = (
        space.einsum("ca,bd->abcd", g, p)
        - space.einsum("cb,ad->abcd", g, p)
        + space.einsum("db,ac->abcd", g, p)
        - space.einsum("da,bc->abcd", g, p)
    )
    return t - sub


def conformal_killing(v: TensorJet, scale: Scale) -> TensorJet:
    """Trace-free symmetric part of ``nabla_a v_b``."""
    _check_covariant(v, 1, "conformal_killing")
    space, n = scale.space, scale.n
    dv = scale.geometry.nabla(v.data)  # [a, b] = nabla_a v_b
    sym = 0.5 * (dv + perm(dv, 1, 0))
    d = space.degree_of(sym)
    g = _need(space, scale.g, d, "metric")
    gi = _need(space, scale.g_inv, d, "inverse metric")
    tr = space.einsum("ab,ab->", gi, sym)
    out = sym - space.einsum(",ab->ab", tr, g) / n
    return TensorJet(out, (False, False), v.weight, frozenset({"sym01"}))


def cstar(u: TensorJet, scale: Scale, tol: float = 1e-8) -> TensorJet:
    """``(nabla^(a nabla^c) + P^ac) U_abcd``, free indices ``b, d``."""
    _check_covariant(u, 4, "cstar")
    _check_weyl(u, tol)
    space, geo = scale.space, scale.geometry
    ddu = geo.nabla(geo.nabla(u.data))  # [f, e, a, b, c, d] = nabla_f nabla_e U_abcd
    d = space.degree_of(ddu)
    gi = _need(space, scale.g_inv, d, "inverse metric")
    # nabla^a nabla^c U_abcd and nabla^c nabla^a U_abcd
    t = space.einsum("af,feabcd->eabcd", gi, ddu)
    ac = space.einsum("ce,eabcd->bd", gi, t)
    t = space.einsum("cf,feabcd->eabcd", gi, ddu)
    ca = space.einsum("ae,eabcd->bd", gi, t)
    p_up = geo.raise_all(_need(space, scale.P, d, "Schouten tensor"), (0, 1))
    zeroth = space.einsum("ac,abcd->bd", p_up, space.truncate(u.data, d))
    out = 0.5 * (ac + ca) + zeroth
    return TensorJet(out, (False, False), u.weight - 4)


def antisymmetrize3(t: np.ndarray) -> np.ndarray:
    """Average over signed permutations of the first three component axes."""
    rest = list(range(3, t.ndim - 1))
    out = 0.0
    for p, sign in (((0, 1, 2), 1), ((1, 2, 0), 1), ((2, 0, 1), 1), ((1, 0, 2), -1), ((0, 2, 1), -1), ((2, 1, 0), -1)):
        out = out + sign * perm(t, *p, *rest)
    return out / 6.0


def weyl_bianchi(u: TensorJet, scale: Scale, tol: float = 1e-8) -> TensorJet:
    """``(n-3) nabla_[a U_bc]de - g_d[a nabla_|s| U_bc]^s_e + g_e[a nabla_|s| U_bc]^s_d``."""
    _check_covariant(u, 4, "weyl_bianchi")
    _check_weyl(u, tol)
    space, n = scale.space, scale.n
    if n < 4:
        raise JetError("weyl_bianchi needs n >= 4")
    du = scale.geometry.nabla(u.data)  # [a, b, c, d, e]
    d = space.degree_of(du)
    g = _need(space, scale.g, d, "metric")
    gi = _need(space, scale.g_inv, d, "inverse metric")
    div = space.einsum("fs,fbcse->bce", gi, du)
    t = (n - 3) * du
    t = t - space.einsum("da,bce->abcde", g, div)
    t = t + space.einsum("ea,bcd->abcde", g, div)
    return TensorJet(antisymmetrize3(t), (False,) * 5, u.weight)


__all__ = ["antisymmetrize3", "conformal_killing", "cstar", "project_weyl", "weyl_bianchi"]
