import os

# Allow up to 8 transport workers so thread-count determinism can be exercised
# on small machines; must happen before numba is imported.
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest

from octscatter.fields import ParameterMaps


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_maps(rng, h=4, w=4, px=10e-6, pz=4e-6) -> ParameterMaps:
    return ParameterMaps.from_arrays(
        rng.uniform(1.30, 1.45, (h, w)),
        rng.uniform(2e3, 8e3, (h, w)),
        rng.uniform(0.80, 0.95, (h, w)),
        px,
        pz,
    )


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance_record():
    """``record(number, passed, detail)`` stores the one-line verdict of a criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
