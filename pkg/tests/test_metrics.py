import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tractoria.jets import jet_space
from tractoria.metrics import (
    ConformalFactor,
    ExprSyntaxError,
    MetricError,
    MetricEvaluationError,
    SplitMix64,
    builtin_metric,
    evaluate,
    lift_expr,
    lift_metric,
    make_metric,
    parse_expr,
    parse_metric,
    rescale_metric,
    to_string,
)

# -- expression parser ---------------------------------------------------------


def test_constant_entry():
    node = parse_expr("1")
    assert node.kind == "const" and node.value == 1.0


def test_stereographic_style_entry():
    node = parse_expr("4/pow(1 + x0*x0 + x1*x1, 2)", 2)
    assert evaluate(node, [0.0, 0.0]) == 4.0
    assert evaluate(node, [1.0, 0.0]) == 1.0


def test_unclosed_call_reports_column():
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr("exp(")
    assert err.value.column == 4


@pytest.mark.parametrize(
    "text, value",
    [
        ("-x0^2", 9.0),  # unary minus binds tighter than ^
        ("2^3^2", 512.0),  # ^ is right associative
        ("1 + 2*3 - 4/2", 5.0),
        ("(1 + 2)*3", 9.0),
        ("sqrt(x0 + 1)", 2.0),
        ("pow(x0, 1/2)", math.sqrt(3.0)),
        ("exp(0) + log(1) + sin(0) + cos(0)", 2.0),
    ],
)
def test_evaluation(text, value):
    assert evaluate(parse_expr(text, 1), [3.0]) == pytest.approx(value)


@pytest.mark.parametrize("text", ["x0 +", "foo(x0)", "y", "1 2", "pow(x0, x0)", "(x0", ""])
def test_syntax_errors(text):
    with pytest.raises(MetricError):
        parse_expr(text, 2)


def test_coordinate_out_of_range():
    with pytest.raises(MetricError):
        parse_expr("x3", 3)


_atoms = st.sampled_from(["x0", "x1", "x2", "1.5", "2", "0.25"])


def _combine(children):
    bin_ = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    fn = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})")
    neg = children.map(lambda c: f"-{c}")
    pw = st.tuples(children, st.sampled_from(["2", "3", "1/2"])).map(lambda t: f"pow({t[0]}, {t[1]})")
    return bin_ | fn | neg | pw


expressions = st.recursive(_atoms, _combine, max_leaves=8)


@settings(max_examples=80, deadline=None)
@given(expressions)
def test_round_trip(text):
    node = parse_expr(text, 3)
    again = parse_expr(to_string(node), 3)
    assert again == node


@settings(max_examples=40, deadline=None)
@given(expressions)
def test_lifted_constant_term_matches_evaluation(text):
    node = parse_expr(text, 3)
    x = [0.3, -0.2, 0.1]
    try:
        want = evaluate(node, x)
    except (MetricError, ValueError, ZeroDivisionError, OverflowError):
        return
    if not math.isfinite(want):
        return
    jet = lift_expr(node, x, 2)
    assert jet[0] == pytest.approx(want, rel=1e-12, abs=1e-12)


# -- metric specs ----------------------------------------------------------------


def test_splitmix_reference_output():
    assert SplitMix64(0).next() == 0xE220A8397B1DCDAF


def test_splitmix_uniform_range():
    gen = SplitMix64(7)
    vals = [gen.uniform() for _ in range(1000)]
    assert min(vals) >= -1.0 and max(vals) < 1.0


def test_flat_is_identity():
    spec = builtin_metric("flat", {"n": 6})
    x = np.linspace(-1, 1, 6)
    m = np.array([[evaluate(spec.entry(i, j), x) for j in range(6)] for i in range(6)])
    assert np.array_equal(m, np.eye(6))


def test_einstein_product_radius():
    spec = builtin_metric("einstein_product", {"p": 2, "q": 4})
    assert spec.dim == 6
    # stereographic factor 4 r^4 / (r^2 + |x|^2)^2 equals 1 at |x| = r, so r^2 = 3 shows up at x5 = sqrt(3)
    x = [0.0] * 5 + [math.sqrt(3.0)]
    assert evaluate(spec.entry(5, 5), x) == pytest.approx(1.0)
    assert evaluate(spec.entry(0, 0), [1.0] + [0.0] * 5) == pytest.approx(1.0)


def test_poly_perturbation_positive_definite():
    spec = builtin_metric("poly_perturbation", {"n": 6, "seed": 42, "eps": 0.05, "d": 3})
    m = np.array([[evaluate(spec.entry(i, j), [0.0] * 6) for j in range(6)] for i in range(6)])
    assert np.array_equal(m, m.T)
    assert np.linalg.eigvalsh(m).min() > 0
    assert np.abs(m - np.eye(6)).max() <= 0.05 * 1.0 + 1e-15


def test_poly_perturbation_is_deterministic():
    a = builtin_metric("poly_perturbation", {"n": 4, "seed": 3, "eps": 0.1, "d": 2})
    b = builtin_metric("poly_perturbation", {"n": 4, "seed": 3, "eps": 0.1, "d": 2})
    assert a.to_json() == b.to_json()


def test_high_degree_perturbation_builds_and_lifts():
    # hundreds of monomials per entry must not produce a recursion-limited tree
    spec = builtin_metric("poly_perturbation", {"n": 6, "seed": 1, "eps": 0.01, "d": 5})
    assert parse_metric(spec.to_json()) == spec
    g, _ = lift_metric(spec, [0.1] * 6, 1)
    assert np.linalg.eigvalsh(g.values()).min() > 0


def test_unknown_builtin_and_bad_params():
    with pytest.raises(MetricError):
        builtin_metric("torus", {"n": 3})
    with pytest.raises(MetricError):
        builtin_metric("flat", {})
    with pytest.raises(MetricError):
        builtin_metric("sphere_stereo", {"n": 3, "r": -1})


def test_parse_metric_round_trip():
    text = json.dumps({"dim": 3, "entries": [["1", "0", "0"], ["0", "exp(x0)", "0"], ["0", "0", 2]], "name": "demo"})
    spec = parse_metric(text)
    assert spec.name == "demo"
    assert evaluate(spec.entry(2, 2), [0, 0, 0]) == 2.0
    assert parse_metric(spec.to_json()) == spec


@pytest.mark.parametrize(
    "doc",
    [
        "not json",
        "[]",
        {"dim": 2, "entries": [["1", "0"], ["0", "1"]]},
        {"dim": 3, "entries": [["1", "0", "0"], ["0", "1", "0"]]},
        {"dim": 3, "entries": [["1", "x0", "0"], ["0", "1", "0"], ["0", "0", "1"]]},
        {"dim": 3, "entries": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "z"]]},
        {"dim": 3, "entries": [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], "extra": 1},
    ],
)
def test_parse_metric_errors(doc):
    text = doc if isinstance(doc, str) else json.dumps(doc)
    with pytest.raises(MetricError):
        parse_metric(text)


def test_error_names_the_entry():
    doc = {"dim": 3, "entries": [["1", "exp(", "0"], ["0", "1", "0"], ["0", "0", "1"]]}
    with pytest.raises(ExprSyntaxError) as err:
        parse_metric(json.dumps(doc))
    assert "(0,1)" in str(err.value)
    assert err.value.column == 4


# -- lifting and rescaling ----------------------------------------------------------


def test_flat_lift_is_constant_identity():
    g, gi = lift_metric(builtin_metric("flat", {"n": 3}), [0.4, -1.0, 2.0], 4)
    js = jet_space(3)
    want = np.eye(3)[..., None] * js.constant(1.0, 4)
    assert np.array_equal(g.data, want)
    assert np.array_equal(gi.data, want)


def test_sphere_at_origin():
    # unit radius stereographic chart: g(0) = 4 delta
    g, _ = lift_metric(builtin_metric("sphere_stereo", {"n": 3, "r": 1}), [0, 0, 0], 2)
    assert np.allclose(g.values(), 4 * np.eye(3))


def test_inverse_metric_contract():
    spec = builtin_metric("poly_perturbation", {"n": 5, "seed": 1, "eps": 0.2, "d": 3})
    g, gi = lift_metric(spec, [0.1, 0.2, -0.1, 0.0, 0.3], 4)
    js = jet_space(5)
    prod = js.einsum("ac,cb->ab", gi.data, g.data)
    want = np.eye(5)[..., None] * js.constant(1.0, 4)
    assert np.allclose(prod, want, atol=1e-10)


def test_singular_metric():
    spec = make_metric([["x0", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
    with pytest.raises(MetricEvaluationError):
        lift_metric(spec, [0.0, 0.0, 0.0], 1)


def test_domain_error_at_point():
    spec = make_metric([["log(x0)", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]])
    with pytest.raises(MetricError):
        lift_metric(spec, [-1.0, 0.0, 0.0], 1)


def test_zero_rescale_is_identity():
    spec = builtin_metric("poly_perturbation", {"n": 3, "seed": 2, "eps": 0.1, "d": 2})
    p = [0.1, 0.2, 0.3]
    g0, _ = lift_metric(spec, p, 3)
    g1, _ = lift_metric(rescale_metric(spec, ConformalFactor.parse("0", 3)), p, 3)
    assert np.array_equal(g0.data, g1.data)


def test_rescaled_flat_is_conformally_flat():
    omega = "0.2*x0 - x1*x2"
    p = [0.1, -0.3, 0.2, 0.05]
    a, _ = lift_metric(rescale_metric(builtin_metric("flat", {"n": 4}), ConformalFactor.parse(omega, 4)), p, 3)
    b, _ = lift_metric(builtin_metric("conformally_flat", {"n": 4, "omega": omega}), p, 3)
    assert np.allclose(a.data, b.data, atol=1e-14)


def test_rescale_exponential_law():
    spec = builtin_metric("poly_perturbation", {"n": 3, "seed": 5, "eps": 0.1, "d": 2})
    w1, w2 = "0.3*x0*x1", "sin(x2) - 0.1*x0"
    p = [0.2, -0.1, 0.4]
    twice = rescale_metric(rescale_metric(spec, ConformalFactor.parse(w1, 3)), ConformalFactor.parse(w2, 3))
    once = rescale_metric(spec, ConformalFactor.parse(f"({w1}) + ({w2})", 3))
    a, _ = lift_metric(twice, p, 4)
    b, _ = lift_metric(once, p, 4)
    assert np.allclose(a.data, b.data, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_lift_of_rescale_is_exp_times_lift(c):
    omega = f"{c[0]}*x0 + {c[1]}*x1*x1 + {c[2]}*sin(x2) + {c[3]}"
    spec = builtin_metric("poly_perturbation", {"n": 3, "seed": 9, "eps": 0.1, "d": 3})
    p = [0.1, 0.1, -0.2]
    js = jet_space(3)
    a, _ = lift_metric(rescale_metric(spec, ConformalFactor.parse(omega, 3)), p, 4)
    g, _ = lift_metric(spec, p, 4)
    e2w = js.apply("exp", 2 * lift_expr(parse_expr(omega, 3), p, 4))
    want = js.mul(e2w[None, None], g.data)
    assert np.allclose(a.data, want, rtol=1e-10, atol=1e-10 * np.abs(want).max())


def test_conformal_factor_outside_chart():
    with pytest.raises(MetricError):
        rescale_metric(builtin_metric("flat", {"n": 3}), ConformalFactor.parse("x5"))
