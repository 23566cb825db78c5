"""Tractor calculus in a scale.

A lowered tractor slot is expanded in the basis ``Y_A, Z_A^b, X_A``.  Axis
entries along a tractor axis are ordered ``[Y, Z_1 .. Z_n, X]``, so a standard
tractor ``V_A = sigma Y_A + mu_b Z_A^b + rho X_A`` is stored as
``[sigma, mu_1, .., mu_n, rho]``.  The inverse tractor metric pairs the ``Y``
entry with the ``X`` entry and the ``Z`` block through ``g^{-1}``; hence
contracting with ``X^A`` reads off the ``Y`` entry and contracting with
``Y^A`` reads off the ``X`` entry.

A component indexed by a slot word (e.g. ``"XZXZ"``) carries density weight
``w + #Y + #Z - #X``, where ``w`` is the weight of the tractor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .curvature import LETTERS, CurvatureBundle, Geometry, TensorJet, perm, weyl_symmetry_residual
from .jets import JetError, jet_space


@dataclass(frozen=True)
class TractorJet:
    """Jet-valued tractor field: ``kinds[k]`` is ``"t"`` (tractor) or ``"d"`` (lower tensor)."""

    data: np.ndarray
    kinds: tuple
    weight: float = 0

    def __post_init__(self):
        if self.data.ndim != len(self.kinds) + 1:
            raise JetError("tractor data rank does not match its slot kinds")

    @property
    def valence(self) -> int:
        return sum(k == "t" for k in self.kinds)

    @property
    def n(self) -> int:
        for k, size in zip(self.kinds, self.data.shape):
            return size - 2 if k == "t" else size
        raise JetError("scalar tractor field has no recorded dimension")

    def values(self) -> np.ndarray:
        return self.data[..., 0]

    def component(self, word: str) -> TensorJet:
        """The component along a slot word over ``Y``, ``Z``, ``X``, as a TensorJet."""
        if len(word) != len(self.kinds) or any(k != "t" for k in self.kinds):
            raise JetError("slot word must cover every tractor slot")
        n = self.n
        sl = tuple(_slot_range(c, n) for c in word)
        arr = self.data[sl]
        w = self.weight + word.count("Y") + word.count("Z") - word.count("X")
        return TensorJet(arr, (False,) * word.count("Z"), w)

    @classmethod
    def from_components(cls, n: int, components: dict, weight: float, degree: int) -> TractorJet:
        """Assemble from ``{slot word: jet array with one axis per Z}``."""
        words = list(components)
        k = len(words[0]) if words else 0
        space = jet_space(n)
        data = space.zeros((n + 2,) * k, degree)
        for word, arr in components.items():
            sl = tuple(_slot_range(c, n) for c in word)
            data[sl] += space.truncate(np.asarray(arr, dtype=float), degree)
        return cls(data, ("t",) * k, weight)


def _slot_range(c: str, n: int):
    if c == "Y":
        return 0
    if c == "X":
        return n + 1
    if c == "Z":
        return slice(1, n + 1)
    raise JetError(f"bad slot letter {c!r}")


def _need(space, arr: np.ndarray, degree: int, what: str) -> np.ndarray:
    if space.degree_of(arr) < degree:
        raise JetError(f"{what} has insufficient jet degree")
    return space.truncate(arr, degree)


class Scale:
    """A choice of metric in the conformal class, with its curvature."""

    def __init__(self, bundle: CurvatureBundle, omega: np.ndarray | None = None):
        self.bundle = bundle
        self.n = bundle.n
        self.space = jet_space(self.n)
        self.geometry = Geometry(bundle.g.data, bundle.g_inv.data, bundle.Gamma, self.n)
        self.omega = omega

    @property
    def g(self) -> np.ndarray:
        return self.bundle.g.data

    @property
    def g_inv(self) -> np.ndarray:
        return self.bundle.g_inv.data

    @property
    def J(self) -> np.ndarray:
        self.bundle.require("J")
        return self.bundle.J.data

    @property
    def P(self) -> np.ndarray:
        self.bundle.require("P")
        return self.bundle.P.data

    @cached_property
    def P_mixed(self) -> np.ndarray:
        """``P_a^c`` as ``[a, c]``."""
        return self.space.einsum("ad,dc->ac", self.P, self.g_inv)

    @cached_property
    def h_inv(self) -> np.ndarray:
        n = self.n
        gi = self.g_inv
        h = self.space.zeros((n + 2, n + 2), self.space.degree_of(gi))
        h[0, n + 1, 0] = h[n + 1, 0, 0] = 1.0
        h[1 : n + 1, 1 : n + 1] = gi
        return h

    @cached_property
    def W(self) -> TractorJet:
        return w_tractor(self)

    # -- connection -------------------------------------------------------

    def _tractor_terms(self, low: np.ndarray, axis: int) -> np.ndarray:
        """Connection terms (including Levi-Civita on the Z block) for one tractor axis."""
        n, space = self.n, self.space
        d = space.degree_of(low)
        gam = _need(space, self.bundle.Gamma, d, "Christoffel symbols")
        p = _need(space, self.P, d, "Schouten tensor")
        pm = _need(space, self.P_mixed, d, "Schouten tensor")
        g = _need(space, self.g, d, "metric")
        v = np.moveaxis(low, axis, 0)
        rest = v.shape[1:-1]
        v = v.reshape((n + 2, -1, v.shape[-1]))
        vy, vz, vx = v[0], v[1 : n + 1], v[n + 1]
        c = np.zeros((n, n + 2) + v.shape[1:])
        c[:, 0] = -vz
        c[:, 1 : n + 1] = (
            -space.einsum("feb,fr->ebr", gam, vz) + space.einsum("eb,r->ebr", p, vy) + space.einsum("eb,r->ebr", g, vx)
        )
        c[:, n + 1] = -space.einsum("ec,cr->er", pm, vz)
        c = c.reshape((n, n + 2) + rest + (c.shape[-1],))
        return np.moveaxis(c, 1, axis + 1)

    def nabla(self, arr: np.ndarray, kinds) -> np.ndarray:
        """Coupled Levi-Civita/tractor derivative; new lower tensor index on axis 0."""
        kinds = tuple(kinds)

        def extra(low):
            out = 0.0
            for k, kind in enumerate(kinds):
                if kind == "t":
                    out = out + self._tractor_terms(low, k)
            return out

        up = [None if k == "t" else False for k in kinds]
        return self.geometry.nabla(arr, up, extra if "t" in kinds else None)

    def laplacian(self, arr: np.ndarray, kinds) -> np.ndarray:
        first = self.nabla(arr, kinds)
        second = self.nabla(first, ("d",) + tuple(kinds))
        gi = _need(self.space, self.g_inv, self.space.degree_of(second), "inverse metric")
        rank = arr.ndim - 1
        idx = LETTERS[2 : rank + 2]
        return self.space.einsum(f"ab,ab{idx}->{idx}", gi, second)


# -- operations ------------------------------------------------------------------


def tractor_contract(u: TractorJet, v: TractorJet, pairs, scale: Scale) -> TractorJet:
    """Contract slot ``i`` of ``u`` with slot ``j`` of ``v`` for each ``(i, j)`` via ``h^{-1}``.

    The result keeps the remaining slots of ``u`` followed by those of ``v``.
    """
    space = scale.space
    pairs = list(pairs)
    for i, j in pairs:
        if u.kinds[i] != "t" or v.kinds[j] != "t":
            raise JetError("only tractor slots can be contracted")
    ku, kv = len(u.kinds), len(v.kinds)
    letters = iter(LETTERS)
    lu = [next(letters) for _ in range(ku)]
    lv = [next(letters) for _ in range(kv)]
    cu, cv = list(u.kinds), list(v.kinds)
    data = u.data
    # raise the contracted slots of u first, then contract with v
    for i, _ in pairs:
        idx = "".join(lu)
        new = idx.replace(lu[i], "z")
        data = space.einsum(f"z{lu[i]},{idx}->{new}", scale.h_inv, data)
    for i, j in pairs:
        lv[j] = lu[i]
    out = [c for k, c in enumerate(lu) if k not in {i for i, _ in pairs}]
    out += [c for k, c in enumerate(lv) if k not in {j for _, j in pairs}]
    kinds = [c for k, c in enumerate(cu) if k not in {i for i, _ in pairs}]
    kinds += [c for k, c in enumerate(cv) if k not in {j for _, j in pairs}]
    res = space.einsum(f"{''.join(lu)},{''.join(lv)}->{''.join(out)}", data, v.data)
    return TractorJet(res, tuple(kinds), u.weight + v.weight)


def tractor_metric(v: TractorJet, scale: Scale) -> TractorJet:
    """``h(V, V)`` for a standard tractor."""
    return tractor_contract(v, v, [(0, 0)], scale)


def tractor_connection(v: TractorJet, scale: Scale) -> TractorJet:
    return TractorJet(scale.nabla(v.data, v.kinds), ("d",) + v.kinds, v.weight)


def box(v: TractorJet, scale: Scale) -> TractorJet:
    """``Delta V + w J V`` with the tractor-coupled Laplacian."""
    lap = scale.laplacian(v.data, v.kinds)
    d = scale.space.degree_of(lap)
    j = _need(scale.space, scale.J, d, "J")
    vd = scale.space.truncate(v.data, d)
    return TractorJet(lap + v.weight * scale.space.mul(j, vd), v.kinds, v.weight - 2)


def tractor_D(v: TractorJet, scale: Scale) -> TractorJet:
    """Tractor-D: ``(n+2w-2) w Y V + (n+2w-2) Z^a nabla_a V - X box V`` (lowered)."""
    n, space = scale.n, scale.space
    w = v.weight
    kinds = v.kinds
    first = scale.nabla(v.data, kinds)
    second = scale.nabla(first, ("d",) + kinds)
    d = space.degree_of(second)
    gi = _need(space, scale.g_inv, d, "inverse metric")
    rank = v.data.ndim - 1
    idx = LETTERS[2 : rank + 2]
    lap = space.einsum(f"ab,ab{idx}->{idx}", gi, second)
    vd = space.truncate(v.data, d)
    boxv = lap + w * space.mul(_need(space, scale.J, d, "J"), vd)
    out = np.zeros((n + 2,) + vd.shape)
    c = n + 2 * w - 2
    out[0] = c * w * vd
    out[1 : n + 1] = c * space.truncate(first, d)
    out[n + 1] = -boxv
    return TractorJet(out, ("t",) + kinds, w - 1)


def insert_x(v: TractorJet, n: int | None = None) -> TractorJet:
    """``X_A V`` (new leading tractor slot), of weight ``w + 1``.

    ``n`` is only needed when ``v`` has no tractor slot to read it from.
    """
    n = v.n if n is None else n
    out = np.zeros((n + 2,) + v.data.shape)
    out[n + 1] = v.data
    return TractorJet(out, ("t",) + v.kinds, v.weight + 1)


def extract(t: TractorJet, word: str) -> np.ndarray:
    """Contract the leading slots with ``Y^A``, ``Z^A_a`` or ``X^A`` per ``word``.

    ``Y`` reads the X entry, ``X`` reads the Y entry and ``Z`` keeps a lower
    tensor index.  Slots beyond ``len(word)`` are left untouched.
    """
    n = t.n
    pick = {"Y": n + 1, "X": 0, "Z": slice(1, n + 1)}
    sl = tuple(pick[c] for c in word)
    return t.data[sl]


def parallel_tractor(scale: Scale, sigma: np.ndarray | None = None) -> TractorJet:
    """``(1/n) D sigma`` for a weight-1 density ``sigma`` (default: 1 in this scale)."""
    n, space = scale.n, scale.space
    if sigma is None:
        sigma = space.constant(1.0, space.degree_of(scale.J) + 2)
    return _scaled(tractor_D(TractorJet(sigma, (), 1), scale), 1.0 / n)


def _scaled(t: TractorJet, c: float) -> TractorJet:
    return TractorJet(c * t.data, t.kinds, t.weight)


def w_tractor(scale: Scale) -> TractorJet:
    """W-tractor from C, A and B per its scale formula; weight -2."""
    b = scale.bundle
    b.require("C", "A", "B")
    n, space = scale.n, scale.space
    d = space.degree_of(b.B.data)
    c = space.truncate(b.C.data, d)
    a = space.truncate(b.A.data, d)
    bach_ = space.truncate(b.B.data, d)
    Z, X = slice(1, n + 1), n + 1
    w = space.zeros((n + 2,) * 4, d)
    k = n - 4
    w[Z, Z, Z, Z] = k * c
    # -2 Z Z X_[C Z_E]^e A_eab  ->  [Za,Zb,X,Ze] = -k A_eab, [Za,Zb,Ze,X] = +k A_eab
    aeab = perm(a, 1, 2, 0)  # [a, b, e] = A_eab
    w[Z, Z, X, Z] = -k * aeab
    w[Z, Z, Z, X] = k * aeab
    # -2 X_[A Z_B]^b Z Z A_bce  ->  [X,Zb,Zc,Ze] = -k A_bce, [Zb,X,Zc,Ze] = +k A_bce
    w[X, Z, Z, Z] = -k * a
    w[Z, X, Z, Z] = k * a
    # 4 X_[A Z_B]^b X_[C Z_E]^e B_eb
    bt = perm(bach_, 1, 0)  # [b, e] = B_eb
    w[X, Z, X, Z] = bt
    w[Z, X, Z, X] = bt
    w[X, Z, Z, X] = -bt
    w[Z, X, X, Z] = -bt
    return TractorJet(w, ("t",) * 4, -2)


def _raise_pair(r: np.ndarray, scale: Scale, slots) -> np.ndarray:
    space = scale.space
    rank = r.ndim - 1
    idx = LETTERS[:rank]
    for s in slots:
        new = idx[:s] + "z" + idx[s + 1 :]
        r = space.einsum(f"z{idx[s]},{new}->{idx}", scale.h_inv, r)
    return r


def hash_double(rlike: TractorJet, t: TractorJet, scale: Scale, excluded: bool = False) -> TractorJet:
    """Double hash action ``R ## T`` of a curvature-like tractor on ``T``.

    Sum over ordered pairs of distinct slots ``i != j`` of
    ``R^P_i^Q_j T(.. P at i .. Q at j ..)`` plus, for each slot ``i``,
    ``R^P_i^Q_P T(.. Q at i ..)``.  With ``excluded`` both operands carry an
    extra leading slot that is contracted between them and takes no part in
    the action (the ``(D_|I| R) ## D^|I| T`` pattern).
    """
    space = scale.space
    if any(k != "t" for k in rlike.kinds) or any(k != "t" for k in t.kinds):
        raise JetError("hash action needs pure tractor fields")
    off = 1 if excluded else 0
    if rlike.data.ndim - 1 != 4 + off:
        raise JetError("hash action needs a valence-4 curvature-like tractor")
    kt = t.data.ndim - 1 - off
    if kt < 1:
        raise JetError("hash action needs a tractor of valence >= 1")
    d = min(space.degree_of(rlike.data), space.degree_of(t.data))
    r = space.truncate(rlike.data, d)
    tt = space.truncate(t.data, d)
    r = _raise_pair(r, scale, (off, off + 2))
    if excluded:
        tt = _raise_pair(tt, scale, (0,))
    tl = LETTERS[:kt]
    pre = "y" if excluded else ""
    out = np.zeros(tt.shape[off:])
    for i in range(kt):
        for j in range(kt):
            if i == j:
                continue
            src = list(tl)
            src[i], src[j] = "p", "q"
            out += space.einsum(f"{pre}p{tl[i]}q{tl[j]},{pre}{''.join(src)}->{tl}", r, tt)
    diag = np.einsum(f"{pre}pzqp...->{pre}zq...", r)
    for i in range(kt):
        src = list(tl)
        src[i] = "q"
        out += space.einsum(f"{pre}{tl[i]}q,{pre}{''.join(src)}->{tl}", diag, tt)
    return TractorJet(out, ("t",) * kt, rlike.weight + t.weight)


def box1_alpha(t: TractorJet, alpha: float, scale: Scale) -> TractorJet:
    """``box + alpha/(n-4) W##`` on tractors of weight ``1 - n/2``."""
    n = scale.n
    if n == 4:
        raise JetError("this operator is not defined in dimension 4")
    if t.weight != 1 - n / 2:
        raise JetError(f"operator acts on weight {1 - n / 2}, got {t.weight}")
    lap = box(t, scale)
    hw = hash_double(scale.W, t, scale)
    d = scale.space.degree_of(lap.data)
    return TractorJet(lap.data + alpha / (n - 4) * scale.space.truncate(hw.data, d), t.kinds, lap.weight)


@dataclass
class Dim8Terms:
    """The separately computed pieces of the dimension-8 operator applied to ``T``."""

    y_box_d: np.ndarray  # Y^A box D_A T
    placements: np.ndarray  # sum over 4 slots of Y^A W_A^P_B^Q D_P T_(Q in slot)
    y_w_x_w: np.ndarray  # Y^A W ## X_A W ## T
    ww_hash: np.ndarray  # (W##W) ## T
    dw_dt: np.ndarray  # (D_|I| W) ## D^|I| T
    w_w: np.ndarray  # W ## W ## T


def dim8_terms(t: TractorJet, scale: Scale) -> Dim8Terms:
    n, space = scale.n, scale.space
    if n != 8:
        raise JetError("the dimension-8 operator needs n = 8")
    if t.valence != 4 or len(t.kinds) != 4 or t.weight != -2:
        raise JetError("the dimension-8 operator acts on valence-4 tractors of weight -2")
    W = scale.W
    dt = tractor_D(t, scale)  # weight -3
    bdt = box(dt, scale)
    d = space.degree_of(bdt.data)
    y_box_d = extract(bdt, "Y")
    # placements: Y^A W_A^P_B^Q D_P T_Q...
    yw = _raise_pair(space.truncate(extract(W, "Y"), d), scale, (0, 2))  # [P, B, Q]
    dtd = space.truncate(dt.data, d)
    tl = "abcd"
    placements = np.zeros(dtd.shape[1:])
    for s in range(4):
        src = list(tl)
        src[s] = "q"
        placements += space.einsum(f"p{tl[s]}q,p{''.join(src)}->{tl}", yw, dtd)
    wd = TractorJet(space.truncate(W.data, d), W.kinds, W.weight)
    td = TractorJet(space.truncate(t.data, d), t.kinds, t.weight)
    w_t = hash_double(wd, td, scale)
    y_w_x_w = extract(hash_double(wd, insert_x(w_t), scale), "Y")
    ww = hash_double(wd, wd, scale)
    ww_hash = hash_double(ww, td, scale).data
    dw = dt if t is W else tractor_D(W, scale)
    dw = TractorJet(space.truncate(dw.data, d), dw.kinds, dw.weight)
    dtt = TractorJet(dtd, dt.kinds, dt.weight)
    dw_dt = hash_double(dw, dtt, scale, excluded=True).data
    w_w = hash_double(wd, w_t, scale).data
    return Dim8Terms(y_box_d, placements, y_w_x_w, ww_hash, dw_dt, w_w)


def box2_dim8(t: TractorJet, scale: Scale, terms: Dim8Terms | None = None) -> TractorJet:
    """Second-order-in-box operator on weight -2, valence-4 tractors in dimension 8."""
    p = terms or dim8_terms(t, scale)
    out = -p.y_box_d - 0.5 * p.placements - p.y_w_x_w / 64.0 + p.ww_hash / 64.0 + p.dw_dt / 16.0 + p.w_w / 32.0
    return TractorJet(out, ("t",) * 4, t.weight - 4)


def di_splitting(u: TensorJet, scale: Scale, tol: float = 1e-8) -> TractorJet:
    """Differential splitting of an algebraic-Weyl-type tensor into a W-like tractor."""
    n, space = scale.n, scale.space
    if u.rank != 4 or any(u.up):
        raise JetError("expected a covariant 4-tensor")
    vals = u.values()
    if weyl_symmetry_residual(vals) > tol * max(1.0, float(np.abs(vals).max(initial=0.0))):
        raise JetError("input lacks Weyl symmetries")
    geo = scale.geometry
    du = geo.nabla(u.data)  # [p, b, c, e, f]
    ddu = geo.nabla(du)  # [q, p, b, c, e, f] = nabla_q nabla_p u_bcef
    d = space.degree_of(ddu)
    gi = _need(space, scale.g_inv, d, "inverse metric")
    du = space.truncate(du, d)
    uu = space.truncate(u.data, d)
    div0 = space.einsum("pb,pbcef->cef", gi, du)  # nabla^b u_bcef
    div1 = space.einsum("pe,pefbc->fbc", gi, du)  # nabla^e u_efbc
    hess = 0.5 * (ddu + perm(ddu, 1, 0, 2, 3, 4, 5))
    tmp = space.einsum("pb,qpbcef->qcef", gi, hess)
    second = space.einsum("qe,qcef->cf", gi, tmp)
    pu = scale.geometry.raise_all(_need(space, scale.P, d, "Schouten tensor"), (0, 1))
    curv = space.einsum("be,bcef->cf", pu, uu)
    val = second + (n - 3) * curv
    Z, X = slice(1, n + 1), n + 1
    k = n - 4
    out = space.zeros((n + 2,) * 4, d)
    out[Z, Z, Z, Z] = k * (n - 3) * uu
    out[Z, Z, X, Z] = -k * perm(div1, 1, 2, 0)  # [b, c, f]
    out[Z, Z, Z, X] = k * perm(div1, 1, 2, 0)
    out[X, Z, Z, Z] = -k * div0
    out[Z, X, Z, Z] = k * div0
    out[X, Z, X, Z] = val
    out[Z, X, Z, X] = val
    out[X, Z, Z, X] = -val
    out[Z, X, X, Z] = -val
    return TractorJet(out, ("t",) * 4, -2)


def rescale_components(v: TractorJet, omega: np.ndarray, scale: Scale) -> TractorJet:
    """Components of the same tractor in the scale ``exp(2 omega) g``.

    ``omega`` is a scalar jet at the base point of degree at least one more
    than the components'.
    """
    n, space = scale.n, scale.space
    if any(k != "t" for k in v.kinds):
        raise JetError("rescaling is implemented for pure tractor fields")
    d = space.degree_of(v.data)
    ups = _need(space, space.grad(omega), d, "conformal factor")  # Upsilon_b
    gi = _need(space, scale.g_inv, d, "inverse metric")
    ups_up = space.einsum("bc,c->b", gi, ups)
    norm = space.einsum("b,b->", ups, ups_up)
    om = _need(space, omega, d, "conformal factor")
    e_plus = space.apply("exp", om)
    e_minus = space.apply("exp", -om)
    lin = space.zeros((n + 2, n + 2), d)
    lin[0, 0] = e_plus
    for b in range(n):
        lin[1 + b, 1 + b] = e_plus
        lin[1 + b, 0] = space.mul(e_plus, ups[b])
        lin[n + 1, 1 + b] = -space.mul(e_minus, ups_up[b])
    lin[n + 1, n + 1] = e_minus
    lin[n + 1, 0] = -0.5 * space.mul(e_minus, norm)
    data = space.truncate(v.data, d)
    k = data.ndim - 1
    idx = LETTERS[:k]
    for s in range(k):
        new = idx[:s] + "z" + idx[s + 1 :]
        data = space.einsum(f"{idx[s]}z,{new}->{idx}", lin, data)
    if v.weight:
        data = space.mul(space.apply("exp", v.weight * om), data)
    return TractorJet(data, v.kinds, v.weight)


def scale_at(spec, point, degree: int) -> Scale:
    """Lift a metric spec at a point to the given jet degree and build its scale."""
    from .curvature import curvature_bundle
    from .metrics import lift_metric

    g, gi = lift_metric(spec, point, degree)
    return Scale(curvature_bundle(g, gi))
