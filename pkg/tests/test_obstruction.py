from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from tractoria import verify as V
from tractoria.jets import JetError
from tractoria.metrics import builtin_metric
from tractoria.obstruction import (
    BACH_DIM6_TERMS,
    S8_TERMS,
    bottom_constant,
    evaluate_terms,
    k_constant,
    obstruction,
    obstruction4,
    obstruction6_direct,
    obstruction6_tractor,
    parse_term,
)
from tractoria.tractor import scale_at

from .conftest import random_scale


def amax(a):
    return float(np.abs(np.asarray(a)).max(initial=0.0))


# -- constants and term tables -----------------------------------------------------


def test_k_values():
    assert k_constant(6) == 32
    assert k_constant(8) == -384
    assert k_constant(10) == 12288
    with pytest.raises(ValueError):
        k_constant(5)


def test_k_formula_spelled_out():
    for n in (6, 8, 10, 12):
        m = n // 2 - 3
        want = (n - 2) * (n - 4) * (-1) ** m * 2 ** (n - 4) * factorial(m) ** 2
        assert k_constant(n) == want


def test_bottom_constants():
    assert bottom_constant(4) == -8
    assert bottom_constant(6) == 64
    assert bottom_constant(8) == -1536


def test_term_tables():
    assert len(BACH_DIM6_TERMS) == 8
    assert len(S8_TERMS) == 87
    for t in BACH_DIM6_TERMS + S8_TERMS:
        coef, factors = parse_term(t)
        assert isinstance(coef, Fraction) and factors


def test_parse_term():
    coef, factors = parse_term("-1/2 P_cd A_ab^d|^c")
    assert coef == Fraction(-1, 2)
    assert [f.name for f in factors] == ["P", "A"]
    assert factors[1].base == (("a", False), ("b", False), ("d", True))
    assert factors[1].derivs == (("c", True),)
    with pytest.raises(ValueError):
        parse_term("1 P_a-b")


# -- vanishing cases ----------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 6, 8])
def test_flat_obstruction_is_zero(n):
    s = scale_at(builtin_metric("flat", {"n": n}), [0.1] * n, n)
    assert amax(obstruction(s, "direct", False).B.data) == 0.0


@pytest.mark.parametrize("n", [4, 6])
def test_conformally_flat(n):
    assert V.check_conformally_flat(n).passed


def test_einstein_product():
    assert all(r.passed for r in V.check_einstein())


def test_sphere_dim6_both_routes():
    s = scale_at(builtin_metric("sphere_stereo", {"n": 6, "r": 1.5}), [0.1, 0.2, 0.0, -0.1, 0.0, 0.05], 6)
    for route in ("direct", "tractor"):
        r = obstruction(s, route, False)
        assert amax(r.B.values()) <= 1e-8 * r.diagnostics["scale"]


# -- dimension 4 -------------------------------------------------------------------


def test_dim4_is_minus_half_bach(scale4):
    r = obstruction4(scale4)
    assert amax(r.B.values() + 0.5 * scale4.bundle.B.values()) <= 1e-7 * r.diagnostics["scale"]
    assert r.diagnostics["divergence_residual"] <= 1e-6 * r.diagnostics["scale"]
    assert r.B.weight == -2


def test_dim4_consistent_with_bottom_constant(scale4):
    # the W-tractor's XZXZ slot is B^T, and 4/K(4) times it gives -1/2 B
    w = scale4.W.component("XZXZ").values()
    r = obstruction4(scale4, False)
    assert amax(4 / float(bottom_constant(4)) * w.T - r.B.values()) <= 1e-12


# -- dimension 6 -------------------------------------------------------------------


def test_dim6_routes_agree(scale6):
    a = obstruction6_direct(scale6, False)
    b = obstruction6_tractor(scale6, False)
    bound = 1e-6 * max(a.diagnostics["scale"], b.diagnostics["scale"])
    assert amax(a.B.values() - b.B.values()) <= bound
    assert b.diagnostics["upper_slot_residual"] <= 1e-6 * b.diagnostics["upper_slot_scale"]


def test_dim6_symmetric_trace_free(scale6):
    r = obstruction6_direct(scale6, False)
    assert r.diagnostics["trace_residual"] <= 1e-7 * r.diagnostics["scale"]
    assert r.diagnostics["symmetry_residual"] == 0.0
    assert r.B.weight == -4


@pytest.mark.parametrize("n", [4, 6])
def test_covariance(n):
    r = V.check_covariance(n, 3)
    assert r.passed, r


def test_divergence_free_dim6():
    s = random_scale(6, seed=11, degree=7, eps=0.1)
    r = obstruction(s, "direct", True)
    assert r.diagnostics["divergence_residual"] <= 1e-6 * r.diagnostics["scale"]


def test_leading_term_dim6():
    # for g = delta + eps h the obstruction is (1/48) Laplacian nabla^c nabla^d C_cadb + O(eps^2).
    # h has degree 6: with lower degree the six-derivative linear term vanishes identically.
    spec = builtin_metric("poly_perturbation", {"n": 6, "seed": 5, "eps": 1e-3, "d": 6})
    s = scale_at(spec, [0.0] * 6, 6)
    b = obstruction6_direct(s, False).B.values()
    lead, _ = evaluate_terms(s, ["1/48 C_cadb|^d^c^e_e"], 0)
    lead = lead[..., 0]
    lead = 0.5 * (lead + lead.T)
    assert amax(lead) > 1e-3
    assert amax(b - lead) <= 0.05 * amax(lead)
    assert amax(b - 3 * lead) > 0.5 * amax(lead)


# -- dimension 8 -------------------------------------------------------------------


def test_dim8_direct_on_conformally_flat():
    r = V.check_conformally_flat(8)
    assert r.passed, r


def test_dim8_direct_is_symmetric():
    s = scale_at(V.random_metric(8, 4, eps=0.02, d=2, entries=4), [0.05] * 8, 8)
    r = obstruction(s, "direct")
    assert r.diagnostics["symmetry_residual"] == 0.0
    assert r.diagnostics["trace_residual"] <= 1e-4 * r.diagnostics["scale"]
    assert amax(r.B.values()) > 0.0


# -- errors ------------------------------------------------------------------------


def test_wrong_dimension(scale4):
    with pytest.raises(JetError):
        obstruction6_direct(scale4)
    with pytest.raises(JetError):
        obstruction6_tractor(scale4)
    s5 = random_scale(5, degree=5)
    with pytest.raises(JetError):
        obstruction(s5)


def test_degree_too_low():
    s = random_scale(6, degree=5)
    with pytest.raises(JetError):
        obstruction6_direct(s)


def test_unknown_route(scale6):
    with pytest.raises(JetError):
        obstruction(scale6, "ambient")
