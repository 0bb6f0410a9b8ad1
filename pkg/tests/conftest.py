import math

import numpy as np
import pytest

from matedcrt.graph_core import MultiGraph

GAMMAS = [1.0, math.sqrt(4 / 3), math.sqrt(2), math.sqrt(8 / 3)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def triangle_walk():
    from matedcrt.walk_gen import CorrelatedWalk

    # cells 1..3 between integer times 0..3
    return CorrelatedWalk.from_samples([5, 1, 3, 0], [10, 9, 8, 7])


def path3() -> MultiGraph:
    return MultiGraph(3, [(0, 1), (1, 2)])


# -- acceptance summary -----------------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
