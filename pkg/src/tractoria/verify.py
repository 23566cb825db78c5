"""The verification battery behind ``tractoria verify`` and the acceptance tests.

Every check returns a :class:`CheckResult` whose ``tolerance`` is absolute,
already multiplied by the check's scale (the larger of 1 and the largest term
magnitude entering the formula).
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np

from .curvature import TensorJet, lower_riemann, weyl_symmetry_residual
from .defcomplex import cstar, project_weyl, weyl_bianchi
from .jets import jet_space
from .metrics import ConformalFactor, builtin_metric, evaluate, lift_metric, rescale_metric
from .obstruction import (
    bach_dim4,
    obstruction,
    obstruction4,
    obstruction6_direct,
    obstruction6_tractor,
    obstruction8_direct,
    obstruction8_tractor,
)
from .tractor import (
    TractorJet,
    _raise_pair,
    di_splitting,
    hash_double,
    insert_x,
    parallel_tractor,
    scale_at,
    tractor_connection,
    tractor_contract,
    tractor_D,
)

OMEGA = "0.3*x0 - 0.2*x1^2 + 0.1*x0*x2"


@dataclass
class CheckResult:
    name: str
    anchor: str
    residual: float
    tolerance: float
    passed: bool
    wall: float
    criterion: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _result(name, anchor, criterion, residual, tol, scale, t0) -> CheckResult:
    residual = float(residual)
    bound = float(tol * max(1.0, scale))
    ok = bool(np.isfinite(residual) and residual <= bound)
    return CheckResult(name, anchor, residual, bound, ok, time.perf_counter() - t0, criterion)


def _amax(a) -> float:
    return float(np.abs(np.asarray(a)).max(initial=0.0))


def _points(seed: int, n: int, count: int) -> list[list[float]]:
    rng = np.random.default_rng(seed)
    return [rng.uniform(-0.2, 0.2, size=n).round(6).tolist() for _ in range(count)]


def random_metric(n: int, seed: int, eps: float = 0.05, d: int = 3, entries: int = -1):
    return builtin_metric("poly_perturbation", {"n": n, "seed": seed, "eps": eps, "d": d, "entries": entries})


# -- jets and curvature ----------------------------------------------------------


def check_flat(n: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(builtin_metric("flat", {"n": n}), [0.3] * n, 4)
    b = s.bundle
    res = max(_amax(getattr(b, k).data) for k in ("R", "Ric", "Sc", "P", "J", "C", "A", "B"))
    return _result(f"flat_curvature_zero_n{n}", "all curvature vanishes on flat space", 10, res, 1e-12, 0.0, t0)


def check_finite_differences(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    n = 4
    spec = random_metric(n, seed, eps=0.2, d=3)
    p = np.array(_points(seed, n, 1)[0])
    g, _ = lift_metric(spec, p, 2)
    js = jet_space(n)
    res = 0.0
    h1, h2 = 1e-5, 1e-4
    for i in range(n):
        for j in range(i, n):
            node = spec.entry(i, j)
            f = lambda x, node=node: evaluate(node, x)
            jet = g.data[i, j]
            for a in range(n):
                e = np.eye(n)[a]
                fd = (f(p + h1 * e) - f(p - h1 * e)) / (2 * h1)
                res = max(res, abs(fd - jet[js.index_of(e.astype(int))]))
                for c in range(a, n):
                    ec = np.eye(n)[c]
                    fd2 = (
                        f(p + h2 * e + h2 * ec)
                        - f(p + h2 * e - h2 * ec)
                        - f(p - h2 * e + h2 * ec)
                        + f(p - h2 * e - h2 * ec)
                    ) / (4 * h2 * h2)
                    alpha = (e + ec).astype(int)
                    exact = jet[js.index_of(alpha)] * math.prod(math.factorial(int(k)) for k in alpha)
                    res = max(res, abs(fd2 - exact))
    return _result(
        "finite_difference_metric_derivatives", "jet coefficients match finite differences", 10, res, 1e-5, 0.0, t0
    )


def check_sphere(n: int, r: float = 2.0) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(builtin_metric("sphere_stereo", {"n": n, "r": r}), [0.1] + [0.05] * (n - 1), 2)
    b = s.bundle
    k = 1.0 / r**2
    g = s.g[..., 0]
    rl = lower_riemann(b.R, b.g)[..., 0]
    ref = k * (np.einsum("ac,bd->abcd", g, g) - np.einsum("bc,ad->abcd", g, g))
    res = max(
        _amax(rl - ref),
        _amax(b.Ric.values() - (n - 1) * k * g),
        abs(float(b.Sc.values()) - n * (n - 1) * k),
        abs(float(b.J.values()) - n * k / 2),
        _amax(b.P.values() - 0.5 * k * g),
        _amax(b.C.values()) if b.C is not None else 0.0,
    )
    return _result(f"sphere_closed_forms_n{n}", "round sphere has R = K(g g - g g), C = 0", 10, res, 1e-8, 0.0, t0)


# -- tractors --------------------------------------------------------------------


def check_dx_identity(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, seed, eps=0.1, d=3), _points(seed, n, 1)[0], 4)
    rng = np.random.default_rng(seed)
    w = float(rng.uniform(-2, 2))
    v = rng.normal(size=s.space.size(2))
    dx = tractor_D(insert_x(TractorJet(v, (), w), n), s)
    d = s.space.degree_of(dx.data)
    val = s.space.einsum("ab,ab->", s.space.truncate(s.h_inv, d), dx.data)
    expect = (n + 2 * w + 2) * (n + w) * s.space.truncate(v, d)
    return _result(f"d_x_identity_n{n}", "D_A X^A V = (n+2w+2)(n+w) V", 8, _amax(val - expect), 1e-8, _amax(expect), t0)


def check_metricity(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, seed, eps=0.1, d=3), _points(seed, n, 1)[0], 4)
    rng = np.random.default_rng(seed + 1)
    size = s.space.size(2)
    u = TractorJet(rng.normal(size=(n + 2, size)), ("t",), 0)
    v = TractorJet(rng.normal(size=(n + 2, size)), ("t",), 0)
    huv = tractor_contract(u, v, [(0, 0)], s).data
    lhs = s.space.grad(huv)
    du, dv = tractor_connection(u, s), tractor_connection(v, s)
    d = s.space.degree_of(lhs)
    vt = TractorJet(s.space.truncate(v.data, d), v.kinds, 0)
    ut = TractorJet(s.space.truncate(u.data, d), u.kinds, 0)
    rhs = tractor_contract(du, vt, [(1, 0)], s).data + tractor_contract(ut, dv, [(0, 1)], s).data
    return _result(f"connection_metricity_n{n}", "nabla h = 0", 8, _amax(lhs - rhs), 1e-9, _amax(lhs), t0)


def check_x_slot(n: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, 3, eps=0.1, d=3), [0.1] * n, 3)
    x = s.space.zeros((n + 2,), 1)
    x[n + 1] = s.space.constant(1.0, 1)
    dx = tractor_connection(TractorJet(x, ("t",), 1), s).values()
    expect = np.zeros((n, n + 2))
    expect[:, 1 : n + 1] = s.g[..., 0]
    return _result(f"x_slot_identity_n{n}", "nabla_a X_A = Z_Aa", 8, _amax(dx - expect), 1e-14, 1.0, t0)


def check_di_c(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    n = 6
    s = scale_at(random_metric(n, seed, eps=0.3, d=3), _points(seed, n, 1)[0], 6)
    di = di_splitting(s.bundle.C, s)
    w = s.W.data
    d = s.space.degree_of(di.data)
    diff = di.data - (n - 3) * s.space.truncate(w, d)
    return _result("di_c_equals_3w_n6", "D I(C) = (n-3) W", 8, _amax(diff[..., 0]), 1e-7, _amax(di.data[..., 0]), t0)


def check_w_symmetries(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, seed, eps=0.3, d=3), _points(seed, n, 1)[0], 4)
    w = s.W.values()
    tr = np.einsum("ac,abcd->bd", s.h_inv[..., 0], w)
    res = max(weyl_symmetry_residual(w), _amax(tr))
    return _result(
        f"w_tractor_weyl_symmetric_n{n}", "W has Weyl symmetries and is trace-free", 8, res, 1e-8, _amax(w), t0
    )


def check_upper_slots(n: int, seed: int, result=None) -> CheckResult:
    t0 = time.perf_counter()
    if result is None:
        eps, d = (0.3, 3) if n == 6 else (0.02, 2)
        s = scale_at(random_metric(n, seed, eps=eps, d=d, entries=-1 if n == 6 else 4), _points(seed, n, 1)[0], n)
        result = (obstruction6_tractor if n == 6 else obstruction8_tractor)(s, False)
    dg = result.diagnostics
    tol = 1e-6 if n == 6 else 1e-4
    return _result(
        f"bottom_slot_only_n{n}",
        "only the X Z X Z slot of the operator applied to W survives",
        8,
        dg["upper_slot_residual"],
        tol,
        dg["upper_slot_scale"],
        t0,
    )


def _hash_fixture(seed: int):
    s = scale_at(random_metric(6, seed, eps=0.3, d=3), _points(seed, 6, 1)[0], 4)
    space = s.space
    w = s.W
    w0 = TractorJet(space.truncate(w.data, 0), w.kinds, w.weight)
    return s, w0


def check_hash_display(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s, w = _hash_fixture(seed)
    wr = _raise_pair(w.data, s, (0, 3))[..., 0]
    wv = w.data[..., 0]
    display = -(
        np.einsum("acbf,fade->bcde", wr, wv)
        + np.einsum("acdf,bafe->bcde", wr, wv)
        + np.einsum("acef,badf->bcde", wr, wv)
    )
    ours = 0.25 * hash_double(w, w, s).data[..., 0]
    return _result(
        "hash_three_term_display",
        "1/4 W##W as three W W contractions",
        11,
        _amax(ours - display),
        1e-8,
        _amax(display),
        t0,
    )


def check_hash_associativity(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s, w = _hash_fixture(seed)
    left = hash_double(hash_double(w, w, s), w, s).data
    right = hash_double(w, hash_double(w, w, s), s).data
    return _result("hash_associativity", "(W##W)##W = W##W##W", 11, _amax(left - right), 1e-8, _amax(left), t0)


# -- deformation complex ---------------------------------------------------------


def check_bi_dim4(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(4, seed, eps=0.2, d=3), _points(seed, 4, 1)[0], 3)
    rng = np.random.default_rng(seed)
    u = project_weyl(rng.normal(size=(4,) * 4 + (s.space.size(2),)), s)
    out = weyl_bianchi(TensorJet(u, (False,) * 4, 2), s).data
    return _result(
        "weyl_bianchi_trivial_n4",
        "the Weyl-Bianchi operator vanishes in dimension 4",
        9,
        _amax(out),
        1e-9,
        _amax(u),
        t0,
    )


def check_cstar_bach(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(4, seed, eps=0.2, d=3), _points(seed, 4, 1)[0], 4)
    cs = cstar(s.bundle.C, s).values()
    bach = s.bundle.B.values()
    return _result(
        "cstar_of_weyl_is_bach_n4", "C*(C) = Bach in dimension 4", 9, _amax(cs - bach), 1e-7, _amax(bach), t0
    )


def check_cotton_divergence(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, seed, eps=0.2, d=3), _points(seed, n, 1)[0], 3)
    dc = s.geometry.nabla(s.bundle.C.data)
    lhs = np.einsum("fd,fdabc->abc", s.g_inv[..., 0], dc[..., 0])
    a = s.bundle.A.values()
    return _result(
        f"weyl_divergence_is_cotton_n{n}",
        "(n-3) A_abc = nabla^d C_dabc",
        9,
        _amax(lhs - (n - 3) * a),
        1e-7,
        _amax(lhs),
        t0,
    )


# -- obstruction -----------------------------------------------------------------


def check_bach_formulas(seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(4, seed, eps=0.2, d=3), _points(seed, 4, 1)[0], 4)
    b1, sc = bach_dim4(s)
    b2 = s.bundle.B.values()
    return _result(
        f"bach_two_formulas_n4_seed{seed}",
        "Bach from Weyl equals Bach from Cotton",
        3,
        _amax(b1[..., 0] - b2),
        1e-7,
        sc,
        t0,
    )


def check_obstruction4(seed: int) -> list[CheckResult]:
    t0 = time.perf_counter()
    s = scale_at(random_metric(4, seed, eps=0.2, d=3), _points(seed, 4, 1)[0], 5)
    r = obstruction4(s)
    half = -0.5 * s.bundle.B.values()
    d = r.diagnostics
    return [
        _result(
            f"obstruction4_half_bach_seed{seed}", "B = -1/2 Bach", 3, _amax(r.B.values() - half), 1e-7, d["scale"], t0
        ),
        _result(
            f"obstruction4_divergence_seed{seed}",
            "nabla^a B_ab = 0 in dimension 4",
            3,
            d["divergence_residual"],
            1e-6,
            d["scale"],
            t0,
        ),
    ]


def check_cross6(seed: int, point, tag: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(6, seed, eps=0.05, d=3), point, 6)
    a = obstruction6_direct(s, False)
    b = obstruction6_tractor(s, False)
    scale = max(a.diagnostics["scale"], b.diagnostics["scale"])
    return _result(
        f"cross_route_n6_seed{seed}_point{tag}",
        "direct formula equals tractor formula (n = 6)",
        1,
        _amax(a.B.values() - b.B.values()),
        1e-6,
        scale,
        t0,
    )


def check_cross8(seed: int, point) -> tuple[CheckResult, CheckResult]:
    t0 = time.perf_counter()
    s = scale_at(random_metric(8, seed, eps=0.02, d=2, entries=4), point, 8)
    a = obstruction8_direct(s)
    b = obstruction8_tractor(s)
    scale = max(a.diagnostics["scale"], b.diagnostics["scale"])
    cross = _result(
        f"cross_route_n8_seed{seed}",
        "direct formula equals tractor formula (n = 8)",
        2,
        _amax(a.B.values() - b.B.values()),
        1e-4,
        scale,
        t0,
    )
    return cross, check_upper_slots(8, seed, b)


def check_covariance(n: int, seed: int, route: str = "direct") -> CheckResult:
    t0 = time.perf_counter()
    if n == 8:
        spec = random_metric(8, seed, eps=0.02, d=2, entries=4)
    else:
        spec = random_metric(n, seed, eps=0.1, d=3)
    omega = ConformalFactor.parse(OMEGA, n)
    point = _points(seed, n, 1)[0]
    s1 = scale_at(spec, point, n)
    s2 = scale_at(rescale_metric(spec, omega), point, n)
    r1 = obstruction(s1, route, False)
    r2 = obstruction(s2, route, False)
    factor = math.exp((2 - n) * evaluate(omega.omega, point))
    scale = max(r1.diagnostics["scale"], r2.diagnostics["scale"])
    tol = 1e-4 if n == 8 else 1e-6
    return _result(
        f"conformal_covariance_n{n}",
        "rescaled obstruction = exp((2-n) omega) obstruction",
        4,
        _amax(r2.B.values() - factor * r1.B.values()),
        tol,
        scale,
        t0,
    )


def check_weyl_covariance(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    spec = random_metric(n, seed, eps=0.1, d=3)
    omega = ConformalFactor.parse(OMEGA, n)
    point = _points(seed, n, 1)[0]
    c1 = scale_at(spec, point, 2).bundle.C.values()
    c2 = scale_at(rescale_metric(spec, omega), point, 2).bundle.C.values()
    factor = math.exp(2 * evaluate(omega.omega, point))
    return _result(
        f"weyl_covariance_n{n}",
        "rescaled Weyl tensor = exp(2 omega) C",
        4,
        _amax(c2 - factor * c1),
        1e-7,
        _amax(c2),
        t0,
    )


def check_einstein() -> list[CheckResult]:
    t0 = time.perf_counter()
    s = scale_at(builtin_metric("einstein_product", {"p": 2, "q": 4}), [0.1, -0.05, 0.2, 0.1, -0.1, 0.05], 6)
    r = obstruction6_direct(s, False)
    cnorm = _amax(s.bundle.C.values())
    scale = max(r.diagnostics["scale"], cnorm)
    # passes when |C| exceeds a tenth of the obstruction's term scale
    out = [
        _result(
            "einstein_weyl_nonzero",
            "the Einstein product is not conformally flat",
            5,
            0.1 * r.diagnostics["scale"] / cnorm,
            1.0,
            0.0,
            t0,
        ),
        _result(
            "einstein_obstruction_vanishes",
            "the obstruction vanishes for Einstein metrics",
            5,
            _amax(r.B.values()),
            1e-7,
            scale,
            t0,
        ),
    ]
    t1 = time.perf_counter()
    i = parallel_tractor(s)
    w = s.W
    d = min(s.space.degree_of(i.data), s.space.degree_of(w.data))
    it = TractorJet(s.space.truncate(i.data, d), i.kinds, i.weight)
    wt = TractorJet(s.space.truncate(w.data, d), w.kinds, w.weight)
    wi = tractor_contract(wt, it, [(3, 0)], s).values()
    out.append(
        _result(
            "einstein_w_annihilates_parallel",
            "W_BCDE I^E = 0 for the Einstein scale",
            5,
            _amax(wi),
            1e-7,
            _amax(w.values()),
            t1,
        )
    )
    return out


def check_conformally_flat(n: int) -> CheckResult:
    t0 = time.perf_counter()
    spec = builtin_metric("conformally_flat", {"n": n, "omega": OMEGA})
    s = scale_at(spec, [0.1] * n, n)
    r = obstruction(s, "direct", False)
    tol = 1e-4 if n == 8 else 1e-7
    return _result(
        f"conformally_flat_vanishes_n{n}",
        "the obstruction vanishes on conformally flat metrics",
        6,
        _amax(r.B.values()),
        tol,
        r.diagnostics["scale"],
        t0,
    )


def check_divergence(n: int, seed: int) -> CheckResult:
    t0 = time.perf_counter()
    s = scale_at(random_metric(n, seed, eps=0.1, d=3), _points(seed, n, 1)[0], n + 1)
    r = obstruction(s, "direct", True)
    return _result(
        f"divergence_free_n{n}",
        "nabla^a B_ab = 0",
        7,
        r.diagnostics["divergence_residual"],
        1e-6,
        r.diagnostics["scale"],
        t0,
    )


# -- suites ----------------------------------------------------------------------


def _fast(seed: int) -> list[Callable[[], object]]:
    return [
        lambda: check_flat(4),
        lambda: check_flat(6),
        lambda: check_finite_differences(seed),
        lambda: check_sphere(3),
        lambda: check_sphere(4),
        lambda: check_sphere(6),
        lambda: check_dx_identity(4, seed),
        lambda: check_dx_identity(6, seed),
        lambda: check_metricity(4, seed),
        lambda: check_metricity(6, seed),
        lambda: check_x_slot(6),
        lambda: check_di_c(seed),
        lambda: check_w_symmetries(4, seed),
        lambda: check_w_symmetries(6, seed),
        lambda: check_hash_display(seed),
        lambda: check_hash_associativity(seed),
        lambda: check_bi_dim4(seed),
        lambda: check_cstar_bach(seed),
        lambda: check_cotton_divergence(4, seed),
        lambda: check_cotton_divergence(6, seed),
        lambda: check_bach_formulas(seed),
        lambda: check_obstruction4(seed),
        lambda: check_cross6(seed, _points(seed, 6, 2)[0], 0),
        lambda: check_upper_slots(6, seed),
        check_einstein,
        lambda: check_conformally_flat(4),
        lambda: check_conformally_flat(6),
    ]


def _full(seed: int) -> list[Callable[[], object]]:
    checks = _fast(seed)
    for k in range(1, 5):
        checks.append(lambda k=k: check_bach_formulas(seed + k))
        checks.append(lambda k=k: check_obstruction4(seed + k))
    for k in range(1, 5):
        for i, p in enumerate(_points(seed + k, 6, 2)):
            checks.append(lambda k=k, p=p, i=i: check_cross6(seed + k, p, i))
    checks.append(lambda: check_cross6(seed, _points(seed, 6, 2)[1], 1))
    for n in (5, 7, 8):
        checks.append(lambda n=n: check_cotton_divergence(n, seed))
    checks += [
        lambda: check_dx_identity(8, seed),
        lambda: check_metricity(8, seed),
        lambda: check_w_symmetries(8, seed),
        lambda: check_covariance(4, seed),
        lambda: check_covariance(6, seed),
        lambda: check_covariance(6, seed, "tractor"),
        lambda: check_weyl_covariance(4, seed),
        lambda: check_weyl_covariance(6, seed),
        lambda: check_divergence(4, seed),
        lambda: check_divergence(6, seed),
    ]
    return checks


def _dim8(seed: int) -> list[Callable[[], object]]:
    return [
        lambda: check_cross8(seed, _points(seed, 8, 1)[0]),
        lambda: check_cross8(seed + 1, _points(seed + 1, 8, 1)[0]),
        lambda: check_covariance(8, seed),
        lambda: check_conformally_flat(8),
        lambda: check_w_symmetries(8, seed),
    ]


SUITES = {"fast": _fast, "full": _full, "dim8": _dim8}


def _flatten(x) -> list[CheckResult]:
    if isinstance(x, CheckResult):
        return [x]
    out = []
    for y in x:
        out += _flatten(y)
    return out


def _run_one(job) -> list[CheckResult]:
    suite, seed, i = job
    return _flatten(SUITES[suite](seed)[i]())


def run_suite(suite: str, seed: int, workers: int = 1) -> list[CheckResult]:
    if suite not in SUITES:
        raise KeyError(suite)
    jobs = [(suite, seed, i) for i in range(len(SUITES[suite](seed)))]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_one, jobs))
    else:
        parts = [_run_one(j) for j in jobs]
    return [r for p in parts for r in p]


__all__ = ["CheckResult", "SUITES", "run_suite"] + [k for k in dir() if k.startswith("check_")]
