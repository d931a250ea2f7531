import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dynperc.tree import PercolationParams, build_explicit, build_spherical

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def path3():
    return build_explicit([[1], [2], [3], []])


@pytest.fixture
def binary2():
    return build_spherical([2, 2])


@pytest.fixture
def half():
    return PercolationParams(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Store one PASS/FAIL line per acceptance criterion."""

    def _record(num, ok, detail):
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[num] = line
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
