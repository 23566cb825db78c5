"""Levi-Civita pipeline: Christoffel symbols through the Bach tensor.

Conventions
-----------
* ``Gamma[a, b, c]`` is the Christoffel symbol with upper index ``a``.
* ``R[a, b, c, d]`` is ``R_ab^c_d`` with ``[nabla_a, nabla_b] v^c = R_ab^c_d v^d``.
* Derivative arrays put the new derivative index first: ``nabla(T)[e, ...]``
  is ``nabla_e T_...``.
* Raising an index uses the metric representative and lowers the weight by 2,
  so that total order (lower - upper - weight) is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .jets import JetError, jet_space

LETTERS = "abcdefghijklmnopqrstuvw"


@dataclass(frozen=True)
class TensorJet:
    """A tensor field germ: jet-valued components with slot variance and weight.

    ``data`` has shape ``(n,) * rank + (ncoeffs,)``; ``up[k]`` says whether slot
    ``k`` is contravariant.  ``symmetries`` is a hint set with entries such as
    ``"sym01"``, ``"skew01"`` or ``"weyl"``; see :meth:`symmetry_residual`.
    """

    data: np.ndarray
    up: tuple = ()
    weight: int = 0
    symmetries: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.data.ndim != len(self.up) + 1:
            raise JetError(f"data has {self.data.ndim - 1} slots but {len(self.up)} variances")

    @property
    def dim(self) -> int:
        if self.rank:
            return self.data.shape[0]
        raise JetError("dimension of a scalar TensorJet is not recorded in its shape")

    @property
    def rank(self) -> int:
        return len(self.up)

    @property
    def cov(self) -> int:
        return sum(not u for u in self.up)

    @property
    def con(self) -> int:
        return sum(bool(u) for u in self.up)

    @property
    def total_order(self) -> int:
        return self.cov - self.con - self.weight

    def degree(self, nvars: int | None = None) -> int:
        nvars = nvars if nvars is not None else self.dim
        return jet_space(nvars).degree_of(self.data)

    def values(self) -> np.ndarray:
        """Component values at the base point."""
        return self.data[..., 0]

    def with_data(self, data: np.ndarray, **changes) -> TensorJet:
        return replace(self, data=data, **changes)

    def symmetry_residual(self) -> float:
        """Largest violation among the declared symmetry hints (base-point values)."""
        v = self.values()
        worst = 0.0
        for hint in self.symmetries:
            if hint.startswith(("sym", "skew")):
                i, j = int(hint[-2]), int(hint[-1])
                t = np.swapaxes(v, i, j)
                r = v - t if hint.startswith("sym") else v + t
                worst = max(worst, float(np.abs(r).max(initial=0.0)))
            elif hint == "weyl":
                worst = max(worst, weyl_symmetry_residual(v))
        return worst


def weyl_symmetry_residual(u: np.ndarray) -> float:
    """Violation of skew pairs, pair exchange and the first Bianchi identity."""
    r = [
        u + u.transpose(1, 0, 2, 3),
        u + u.transpose(0, 1, 3, 2),
        u - u.transpose(2, 3, 0, 1),
        u + u.transpose(1, 2, 0, 3) + u.transpose(2, 0, 1, 3),
    ]
    return max(float(np.abs(x).max(initial=0.0)) for x in r)


# -- index helpers --------------------------------------------------------------


def perm(arr: np.ndarray, *axes: int) -> np.ndarray:
    """Transpose the component axes of a jet array, keeping the coefficient axis last."""
    return arr.transpose(*axes, len(axes))


def raise_slot(arr: np.ndarray, slot: int, g_inv: np.ndarray, nvars: int) -> np.ndarray:
    """Contract axis ``slot`` of a jet array with the inverse metric."""
    space = jet_space(nvars)
    rank = arr.ndim - 1
    idx = LETTERS[:rank]
    new = idx.replace(idx[slot], "z")
    return space.einsum(f"z{idx[slot]},{idx}->{new}", g_inv, arr)


def trace(arr: np.ndarray, i: int, j: int, g_inv: np.ndarray, nvars: int) -> np.ndarray:
    """Metric trace over axes ``i`` and ``j`` (both lower)."""
    space = jet_space(nvars)
    rank = arr.ndim - 1
    idx = list(LETTERS[:rank])
    idx[j] = "z"
    idx[i] = "y"
    out = "".join(c for k, c in enumerate(idx) if k not in (i, j))
    return space.einsum(f"yz,{''.join(idx)}->{out}", g_inv, arr)


# -- the pipeline ----------------------------------------------------------------


def christoffel(g: TensorJet, g_inv: TensorJet) -> np.ndarray:
    n = g.dim
    space = jet_space(n)
    if g.degree() < 1:
        raise JetError("Christoffel symbols need a metric jet of degree >= 1")
    dg = space.grad(g.data)  # dg[e, b, c] = d_e g_bc
    low = 0.5 * (perm(dg, 1, 0, 2) + perm(dg, 1, 2, 0) - dg)  # low[d, b, c]
    gamma = space.einsum("ad,dbc->abc", g_inv.data, low)
    return 0.5 * (gamma + perm(gamma, 0, 2, 1))


class Geometry:
    """The data a covariant derivative needs: metric, inverse, Christoffel symbols."""

    def __init__(self, g: np.ndarray, g_inv: np.ndarray, gamma: np.ndarray, nvars: int):
        self.n = nvars
        self.space = jet_space(nvars)
        self.g = g
        self.g_inv = g_inv
        self.gamma = gamma

    def nabla(self, arr: np.ndarray, up=None, extra=None) -> np.ndarray:
        """Covariant derivative of a jet array; the new index is axis 0.

        ``up`` flags contravariant tensor slots.  ``extra`` is an optional
        callback ``extra(arr_truncated) -> correction`` used by the tractor
        layer to add its connection terms; it receives the field truncated to
        the output degree and returns an array shaped like the result.
        """
        space = self.space
        rank = arr.ndim - 1
        up = tuple(up) if up is not None else (False,) * rank
        d = space.degree_of(arr)
        if d < 1:
            raise JetError("covariant derivative: jet degree exhausted")
        out = space.grad(arr)
        low = space.truncate(arr, d - 1)
        gam = self.space.truncate(self.gamma, min(d - 1, space.degree_of(self.gamma)))
        if space.degree_of(gam) < d - 1:
            raise JetError("Christoffel symbols have insufficient degree")
        idx = LETTERS[1 : rank + 1]
        for k, is_up in enumerate(up):
            if is_up is None:
                continue
            s = idx[k]
            swapped = idx[:k] + "z" + idx[k + 1 :]
            if is_up:
                # + Gamma^s_{e z} T^{..z..}
                out += space.einsum(f"{s}az,{swapped}->a{idx}", gam, low)
            else:
                # - Gamma^z_{e s} T_{..z..}
                out -= space.einsum(f"za{s},{swapped}->a{idx}", gam, low)
        if extra is not None:
            out += extra(low)
        return out

    def tensor_nabla(self, t: TensorJet) -> TensorJet:
        return TensorJet(self.nabla(t.data, t.up), (False,) + t.up, t.weight)

    def raise_index(self, arr: np.ndarray, slot: int) -> np.ndarray:
        return raise_slot(arr, slot, self.g_inv, self.n)

    def raise_all(self, arr: np.ndarray, slots) -> np.ndarray:
        for s in slots:
            arr = self.raise_index(arr, s)
        return arr


def covariant_derivative(t: TensorJet, gamma: np.ndarray, g_inv: TensorJet) -> TensorJet:
    """Levi-Civita derivative of ``t``; densities get no term in their own scale."""
    n = g_inv.dim
    geo = Geometry(None, g_inv.data, gamma, n)
    return geo.tensor_nabla(t)


def riemann(gamma: np.ndarray) -> TensorJet:
    n = gamma.shape[0]
    space = jet_space(n)
    d = space.degree_of(gamma)
    if d < 1:
        raise JetError("Riemann tensor: Christoffel jet degree exhausted")
    dgam = space.grad(gamma)  # dgam[e, c, b, d] = d_e Gamma^c_bd
    quad = space.einsum("cae,ebd->abcd", gamma, gamma, degree=d - 1)
    lin = perm(dgam, 0, 2, 1, 3)  # [a, b, c, d] = d_a Gamma^c_bd
    r = lin - perm(lin, 1, 0, 2, 3) + quad - perm(quad, 1, 0, 2, 3)
    return TensorJet(r, (False, False, True, False), 0, frozenset({"skew01"}))


def ricci_scalar(r: TensorJet, g_inv: TensorJet):
    n = r.dim
    space = jet_space(n)
    ric = np.einsum("abad...->bd...", r.data)
    ric = 0.5 * (ric + perm(ric, 1, 0))
    sc = space.einsum("bd,bd->", g_inv.data, ric)
    return TensorJet(ric, (False, False), 0, frozenset({"sym01"})), TensorJet(sc, (), -2)


def schouten(ric: TensorJet, sc: TensorJet, g: TensorJet, g_inv: TensorJet):
    n = g.dim
    if n < 3:
        raise JetError("Schouten tensor needs n >= 3")
    space = jet_space(n)
    j = sc.data / (2.0 * (n - 1))
    gd, jd = space.common(g.data, j)
    ricd = space.truncate(ric.data, space.degree_of(jd))
    p = (ricd - space.mul(jd[None, None], gd)) / (n - 2)
    return TensorJet(p, (False, False), 0, frozenset({"sym01"})), TensorJet(j, (), -2)


def lower_riemann(r: TensorJet, g: TensorJet) -> np.ndarray:
    """``R_abcd = g_ce R_ab^e_d``."""
    space = jet_space(r.dim)
    return space.einsum("ce,abed->abcd", g.data, r.data)


def weyl(r: TensorJet, p: TensorJet, g: TensorJet) -> TensorJet:
    n = r.dim
    space = jet_space(n)
    d = min(space.degree_of(r.data), space.degree_of(p.data))
    gd = space.truncate(g.data, d)
    if n == 3:
        return TensorJet(np.zeros((3,) * 4 + (space.size(d),)), (False,) * 4, 2, frozenset({"weyl"}))
    rl = lower_riemann(TensorJet(space.truncate(r.data, d), r.up), TensorJet(gd, (False, False)))
    pd = space.truncate(p.data, d)
    gp = space.einsum("ca,bd->abcd", gd, pd)  # g_ca P_bd
    # 2 g_c[a P_b]d + 2 g_d[b P_a]c
    kul = gp - perm(gp, 1, 0, 2, 3) + perm(gp, 1, 0, 3, 2) - perm(gp, 0, 1, 3, 2)
    c = rl - kul
    return TensorJet(c, (False,) * 4, 2, frozenset({"weyl"}))


def cotton(p: TensorJet, gamma: np.ndarray) -> TensorJet:
    """``A_abc = nabla_b P_ca - nabla_c P_ba``."""
    n = p.dim
    geo = Geometry(None, None, gamma, n)
    dp = geo.nabla(p.data)  # dp[e, c, a] = nabla_e P_ca
    a = perm(dp, 2, 0, 1) - perm(dp, 2, 1, 0)
    return TensorJet(a, (False,) * 3, 0, frozenset({"skew12"}))


def bach(a: TensorJet, p: TensorJet, c: TensorJet, gamma: np.ndarray, g_inv: TensorJet) -> TensorJet:
    """``B_ab = nabla^c A_acb + P^dc C_dacb``."""
    n = a.dim
    space = jet_space(n)
    geo = Geometry(None, g_inv.data, gamma, n)
    da = geo.nabla(a.data)  # da[e, a, c, b] = nabla_e A_acb
    d = space.degree_of(da)
    gi = space.truncate(g_inv.data, d)
    div = space.einsum("ec,eacb->ab", gi, da)
    pu = geo.raise_all(space.truncate(p.data, d), (0, 1))
    pc = space.einsum("dc,dacb->ab", pu, space.truncate(c.data, d))
    b = div + pc
    b = 0.5 * (b + perm(b, 1, 0))
    return TensorJet(b, (False, False), -2, frozenset({"sym01"}))


@dataclass
class CurvatureBundle:
    """Curvature of one metric at one point; fields are ``None`` if the degree ran out."""

    g: TensorJet
    g_inv: TensorJet
    Gamma: np.ndarray
    R: TensorJet | None = None
    Ric: TensorJet | None = None
    Sc: TensorJet | None = None
    P: TensorJet | None = None
    J: TensorJet | None = None
    C: TensorJet | None = None
    A: TensorJet | None = None
    B: TensorJet | None = None

    @property
    def n(self) -> int:
        return self.g.dim

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.g.data, self.g_inv.data, self.Gamma, self.n)

    def require(self, *names: str) -> None:
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise JetError(f"metric jet degree too low for {', '.join(missing)}")


def curvature_bundle(g: TensorJet, g_inv: TensorJet) -> CurvatureBundle:
    """Run the pipeline as far as the metric's jet degree allows."""
    n = g.dim
    deg = g.degree()
    gamma = christoffel(g, g_inv)
    out = CurvatureBundle(g, g_inv, gamma)
    if deg < 2:
        return out
    out.R = riemann(gamma)
    out.Ric, out.Sc = ricci_scalar(out.R, g_inv)
    out.P, out.J = schouten(out.Ric, out.Sc, g, g_inv)
    if n >= 3:
        out.C = weyl(out.R, out.P, g)
    if deg >= 3:
        out.A = cotton(out.P, gamma)
    if deg >= 4:
        out.B = bach(out.A, out.P, out.C, gamma, g_inv)
    return out
