import numpy as np
import pytest

from nlslab.grid import Grid
from nlslab.ground_state import solve_ground_state


@pytest.fixture(scope="session")
def ref_grid():
    return Grid(20.0, 2048)


@pytest.fixture(scope="session")
def gs_beta2(ref_grid):
    return solve_ground_state(1.0, 2.0, ref_grid)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(20.0, 512)


@pytest.fixture(scope="session")
def gs_small(small_grid):
    return solve_ground_state(1.0, 2.0, small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Log one acceptance line; the lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion:>2}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
