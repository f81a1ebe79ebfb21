from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from cygrad.problems import ProblemInstance
from cygrad.linalg import DiagonalOperator, as_vector

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


def diag_problem(lams, x0, b=None):
    lams = np.asarray(lams, dtype=float)
    b = np.zeros(lams.size) if b is None else b
    return ProblemInstance(DiagonalOperator(lams), as_vector(b), as_vector(x0))


@pytest.fixture
def trace_problem():
    """A = diag(1, 2), b = 0, x0 = (1, 1)."""
    return diag_problem([1.0, 2.0], [1.0, 1.0])


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
