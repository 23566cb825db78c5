"""Acceptance criteria 1-11, one test per criterion.

Each test records a PASS/FAIL line that conftest prints in the terminal summary.
"""

import time

from tractoria import verify as V

from .conftest import ACCEPTANCE_LINES

SEED = 42


def _record(number, title, results, started, budget=None):
    wall = time.perf_counter() - started
    failed = [r for r in results if not r.passed]
    over = budget is not None and wall > budget
    ok = not failed and not over
    worst = max((r.residual / r.tolerance for r in results), default=0.0)
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  ({len(results)} checks, worst residual/tol {worst:.2e}, {wall:.1f}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    for r in failed:
        print(f"  failed: {r.name} residual={r.residual:.3e} tol={r.tolerance:.3e}")
    assert not failed, [r.name for r in failed]
    assert not over, f"took {wall:.1f}s, budget {budget}s"


def test_criterion_01_cross_route_dim6():
    t0 = time.perf_counter()
    results = []
    for k in range(5):
        for i, p in enumerate(V._points(SEED + k, 6, 2)):
            results.append(V.check_cross6(SEED + k, p, i))
    _record(
        1,
        "dim-6 direct == tractor on 5 metrics x 2 points (1e-6, < 60 s)",
        results,
        t0,
        60,
    )


def test_criterion_02_cross_route_dim8():
    t0 = time.perf_counter()
    results = []
    for k in range(2):
        cross, _ = V.check_cross8(SEED + k, V._points(SEED + k, 8, 1)[0])
        results.append(cross)
    _record(
        2,
        "dim-8 direct == tractor on 2 sparse metrics (1e-4, < 600 s)",
        results,
        t0,
        600,
    )


def test_criterion_03_dim4_duality():
    t0 = time.perf_counter()
    results = []
    for k in range(5):
        results.append(V.check_bach_formulas(SEED + k))
        results += V.check_obstruction4(SEED + k)
    _record(
        3,
        "dim-4 Bach formulas agree, obstruction = -1/2 Bach, divergence-free",
        results,
        t0,
    )


def test_criterion_04_conformal_covariance():
    t0 = time.perf_counter()
    results = [
        V.check_covariance(4, SEED),
        V.check_covariance(6, SEED),
        V.check_covariance(6, SEED, "tractor"),
        V.check_covariance(8, SEED),
        V.check_weyl_covariance(4, SEED),
        V.check_weyl_covariance(6, SEED),
    ]
    _record(4, "obstruction and Weyl tensor rescale with the right weight", results, t0)


def test_criterion_05_einstein_vanishing():
    t0 = time.perf_counter()
    _record(
        5,
        "Einstein product: obstruction and W I vanish, Weyl nonzero",
        V.check_einstein(),
        t0,
    )


def test_criterion_06_conformally_flat():
    t0 = time.perf_counter()
    results = [V.check_conformally_flat(n) for n in (4, 6, 8)]
    _record(6, "obstruction vanishes on conformally flat metrics, n = 4, 6, 8", results, t0)


def test_criterion_07_divergence_free():
    t0 = time.perf_counter()
    results = [V.check_divergence(4, SEED), V.check_divergence(6, SEED)]
    _record(7, "obstruction is divergence-free, n = 4, 6", results, t0)


def test_criterion_08_tractor_identities():
    t0 = time.perf_counter()
    results = []
    for n in (4, 6, 8):
        results += [
            V.check_dx_identity(n, SEED),
            V.check_metricity(n, SEED),
            V.check_w_symmetries(n, SEED),
        ]
    results += [V.check_x_slot(n) for n in (4, 6, 8)]
    results.append(V.check_di_c(SEED))
    results.append(V.check_upper_slots(6, SEED))
    results.append(V.check_upper_slots(8, SEED))
    _record(8, "tractor identities, n = 4, 6, 8", results, t0)


def test_criterion_09_deformation_complex():
    t0 = time.perf_counter()
    results = [V.check_bi_dim4(SEED + k) for k in range(3)]
    results.append(V.check_cstar_bach(SEED))
    results += [V.check_cotton_divergence(n, SEED) for n in (4, 5, 6, 7, 8)]
    _record(9, "Bi trivial in dim 4, cstar(C) = Bach, (n-3)A = div C", results, t0)


def test_criterion_10_jet_engine():
    t0 = time.perf_counter()
    results = [V.check_flat(n) for n in (3, 4, 6)]
    results.append(V.check_finite_differences(SEED))
    results += [V.check_sphere(n) for n in (3, 4, 6)]
    _record(10, "flat curvature zero, finite differences, sphere closed forms", results, t0)


def test_criterion_11_hash_convention():
    t0 = time.perf_counter()
    results = [V.check_hash_display(SEED), V.check_hash_associativity(SEED)]
    _record(11, "hash action display and associativity", results, t0)
