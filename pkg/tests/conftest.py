import pytest

from tractoria.metrics import builtin_metric
from tractoria.tractor import scale_at

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_scale(n, seed=7, degree=4, eps=0.1, d=3, point=None):
    spec = builtin_metric("poly_perturbation", {"n": n, "seed": seed, "eps": eps, "d": d})
    if point is None:
        point = [0.05 * (i + 1) for i in range(n)]
    return scale_at(spec, point, degree)


@pytest.fixture(scope="session")
def scale4():
    return random_scale(4, degree=5)


@pytest.fixture(scope="session")
def scale6():
    return random_scale(6, degree=6, eps=0.05)
