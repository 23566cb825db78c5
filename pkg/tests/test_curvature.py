import math

import numpy as np
import pytest

from tractoria.curvature import (
    TensorJet,
    covariant_derivative,
    curvature_bundle,
    lower_riemann,
    perm,
    weyl_symmetry_residual,
)
from tractoria.jets import JetError, jet_space
from tractoria.metrics import ConformalFactor, builtin_metric, evaluate, lift_metric, rescale_metric
from tractoria.obstruction import bach_dim4
from tractoria.tractor import scale_at

from .conftest import random_scale

OMEGA = "0.3*x0 - 0.2*x1^2 + 0.1*x0*x2"


def amax(a):
    return float(np.abs(np.asarray(a)).max(initial=0.0))


def bundle(spec, point, degree):
    return curvature_bundle(*lift_metric(spec, point, degree))


@pytest.fixture(scope="module")
def random5():
    return random_scale(5, seed=4, degree=4, eps=0.2).bundle


def test_flat_everything_vanishes():
    b = bundle(builtin_metric("flat", {"n": 5}), [0.2] * 5, 4)
    assert amax(b.Gamma) == 0.0
    for name in ("R", "Ric", "Sc", "P", "J", "C", "A", "B"):
        assert amax(getattr(b, name).data) == 0.0, name


@pytest.mark.parametrize("n", [3, 4, 6])
def test_unit_sphere_closed_forms(n):
    b = bundle(builtin_metric("sphere_stereo", {"n": n, "r": 1}), [0.1] + [-0.05] * (n - 1), 3)
    g = b.g.values()
    rl = lower_riemann(b.R, b.g)[..., 0]
    ref = np.einsum("ac,bd->abcd", g, g) - np.einsum("ad,bc->abcd", g, g)
    assert amax(rl - ref) <= 1e-8 * amax(ref)
    assert amax(b.Ric.values() - (n - 1) * g) <= 1e-8 * n
    assert float(b.Sc.values()) == pytest.approx(n * (n - 1), rel=1e-8)
    assert amax(b.P.values() - 0.5 * g) <= 1e-8
    assert float(b.J.values()) == pytest.approx(n / 2, rel=1e-8)
    assert amax(b.C.values()) <= 1e-8
    assert amax(b.A.values()) <= 1e-8


def test_conformally_flat_christoffel():
    # for g = exp(2w) delta: Gamma^a_bc = delta^a_b U_c + delta^a_c U_b - delta_bc U^a, U = dw
    n = 3
    spec = builtin_metric("conformally_flat", {"n": n, "omega": OMEGA})
    x = [0.2, -0.1, 0.3]
    b = bundle(spec, x, 2)
    u = np.array([0.3 + 0.1 * x[2], -0.4 * x[1], 0.1 * x[0]])
    e = np.eye(n)
    ref = np.einsum("ab,c->abc", e, u) + np.einsum("ac,b->abc", e, u) - np.einsum("bc,a->abc", e, u)
    assert amax(b.Gamma[..., 0] - ref) <= 1e-14


def test_metricity(random5):
    geo = random5.geometry
    dg = geo.nabla(random5.g.data)
    assert amax(dg) <= 1e-10 * max(1.0, amax(random5.g.data))


def test_derivative_of_constant_scalar():
    b = bundle(builtin_metric("sphere_stereo", {"n": 3}), [0.1, 0.2, 0.3], 2)
    c = TensorJet(jet_space(3).constant(2.5, 2), (), 0)
    assert amax(covariant_derivative(c, b.Gamma, b.g_inv).data) == 0.0


def test_first_bianchi(random5):
    rl = lower_riemann(random5.R, random5.g)
    cyc = rl + perm(rl, 1, 2, 0, 3) + perm(rl, 2, 0, 1, 3)
    assert amax(cyc) <= 1e-9 * amax(rl)


def test_riemann_pair_symmetries(random5):
    rl = lower_riemann(random5.R, random5.g)[..., 0]
    assert amax(rl + rl.transpose(1, 0, 2, 3)) <= 1e-12
    assert amax(rl + rl.transpose(0, 1, 3, 2)) <= 1e-12
    assert amax(rl - rl.transpose(2, 3, 0, 1)) <= 1e-12


def test_contracted_second_bianchi(random5):
    n, geo = random5.n, random5.geometry
    js = jet_space(n)
    dric = geo.nabla(random5.Ric.data)  # [e, a, b]
    d = js.degree_of(dric)
    div = js.einsum("ea,eab->b", js.truncate(random5.g_inv.data, d), dric)
    dsc = js.grad(random5.Sc.data)
    diff = div[..., 0] - 0.5 * dsc[..., 0]
    assert amax(diff) <= 1e-8 * max(1.0, amax(dsc[..., 0]))


def test_schouten_trace_and_reconstruction(random5):
    n = random5.n
    gi, g = random5.g_inv.values(), random5.g.values()
    p, j = random5.P.values(), float(random5.J.values())
    assert float(np.einsum("ab,ab->", gi, p)) == pytest.approx(j, rel=1e-10, abs=1e-12)
    ric = random5.Ric.values()
    assert amax(ric - ((n - 2) * p + j * g)) <= 1e-12


def test_weyl_is_trace_free_with_symmetries(random5):
    c = random5.C.values()
    gi = random5.g_inv.values()
    assert weyl_symmetry_residual(c) <= 1e-12
    assert amax(np.einsum("ac,abcd->bd", gi, c)) <= 1e-12


@pytest.mark.parametrize("n", [3, 4, 6])
def test_weyl_vanishes_conformally_flat(n):
    b = bundle(builtin_metric("conformally_flat", {"n": n, "omega": OMEGA}), [0.1] * n, 2)
    assert amax(b.C.data) <= 1e-8 * max(1.0, amax(lower_riemann(b.R, b.g)))


@pytest.mark.parametrize("n", [4, 5])
def test_weyl_conformal_covariance(n):
    spec = builtin_metric("poly_perturbation", {"n": n, "seed": 8, "eps": 0.1, "d": 3})
    omega = ConformalFactor.parse(OMEGA, n)
    x = [0.1, -0.05, 0.15, 0.0, 0.02][:n]
    c1 = bundle(spec, x, 2).C.values()
    c2 = bundle(rescale_metric(spec, omega), x, 2).C.values()
    factor = math.exp(2 * evaluate(omega.omega, x))
    assert amax(c2 - factor * c1) <= 1e-7 * amax(c2)


def test_cotton_vanishes_on_einstein():
    b = bundle(builtin_metric("einstein_product", {"p": 2, "q": 3}), [0.1, 0.2, 0.0, -0.1, 0.05], 3)
    assert amax(b.A.values()) <= 1e-9 * max(1.0, amax(b.P.values()))


@pytest.mark.parametrize("n", [4, 5, 6])
def test_cotton_is_weyl_divergence(n):
    s = random_scale(n, seed=n, degree=3, eps=0.1)
    b = s.bundle
    js = s.space
    dc = s.geometry.nabla(b.C.data)  # [e, d, a, b, c]
    div = js.einsum("ed,edabc->abc", js.truncate(b.g_inv.data, js.degree_of(dc)), dc)
    a = b.A.values()
    assert amax((n - 3) * a - div[..., 0]) <= 1e-7 * max(1.0, amax(a))


def test_bach_two_formulas_dim4():
    s = random_scale(4, seed=2, degree=4, eps=0.2)
    b1, sc = bach_dim4(s)
    assert amax(b1[..., 0] - s.bundle.B.values()) <= 1e-7 * max(1.0, sc)


def test_bach_symmetric_trace_free_dim4():
    s = random_scale(4, seed=3, degree=4, eps=0.2)
    b = s.bundle.B.values()
    assert amax(b - b.T) <= 1e-12
    assert abs(float(np.einsum("ab,ab->", s.g_inv[..., 0], b))) <= 1e-10 * max(1.0, amax(b))


def test_bach_conformal_covariance_dim4():
    spec = builtin_metric("poly_perturbation", {"n": 4, "seed": 6, "eps": 0.2, "d": 3})
    omega = ConformalFactor.parse(OMEGA, 4)
    x = [0.05, 0.1, -0.1, 0.0]
    b1 = scale_at(spec, x, 4).bundle.B.values()
    b2 = scale_at(rescale_metric(spec, omega), x, 4).bundle.B.values()
    factor = math.exp(-2 * evaluate(omega.omega, x))
    assert amax(b2 - factor * b1) <= 1e-6 * max(1.0, amax(b1))


def test_total_order_bookkeeping(random5):
    b = random5
    orders = {name: getattr(b, name).total_order for name in ("R", "Ric", "Sc", "P", "J", "C", "A", "B")}
    assert orders == {"R": 2, "Ric": 2, "Sc": 2, "P": 2, "J": 2, "C": 2, "A": 3, "B": 4}
    nab = covariant_derivative(b.P, b.Gamma, b.g_inv)
    assert nab.total_order == b.P.total_order + 1


def test_pipeline_stops_when_degree_runs_out():
    b = bundle(builtin_metric("sphere_stereo", {"n": 4}), [0.0] * 4, 2)
    assert b.C is not None and b.A is None and b.B is None
    with pytest.raises(JetError):
        b.require("B")
