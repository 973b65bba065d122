import numpy as np
import pytest

from jouleheat.mesh import from_cells


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_tet(rng, min_volume=1e-3):
    while True:
        p = rng.random((4, 3))
        if abs(np.linalg.det(p[1:] - p[0])) / 6 > min_volume:
            return from_cells(p, [[0, 1, 2, 3]])


@pytest.fixture
def reference_tet():
    return from_cells([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])


CRITERIA: dict = {}


def record_criterion(n: int, ok: bool, detail: str):
    CRITERIA[n] = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
