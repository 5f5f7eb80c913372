import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlcap.grid import build_cell_masses
from nlcap.kernel import KernelSpec

settings.register_profile("nlcap", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("nlcap")


@pytest.fixture(scope="session")
def frac1():
    """Fractional kernel with d=1, s=0.25, p=2 (sp = 0.5)."""
    return KernelSpec.fractional(0.25, 2.0, 1, 2.0)


@pytest.fixture(scope="session")
def frac1_p1():
    """``|h|^{-1.5}`` in 1D viewed as a p=1 kernel."""
    return KernelSpec.fractional(0.5, 1.0, 1, 1.0)


@pytest.fixture(scope="session")
def masses_small(frac1):
    return build_cell_masses(frac1, 4.0, 64)


@pytest.fixture(scope="session")
def masses_small_p1(frac1_p1):
    return build_cell_masses(frac1_p1, 4.0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
