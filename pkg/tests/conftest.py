from __future__ import annotations

import pytest

from arrivalgame.dynamics import propagate
from arrivalgame.equilibrium import solve
from arrivalgame.model import ModelParams

CONFIG_A = dict(lam=5.0, mu=1.0, alpha=2.0, beta=0.2)
CONFIG_B = dict(lam=5.0, mu=1.0, alpha=2.0, beta=0.1)
CONFIG_EB = dict(lam=10.0, mu=1.0, alpha=2.0, beta=0.1, variant="early_birds")


@pytest.fixture(scope="session")
def params_a():
    return ModelParams(**CONFIG_A)


@pytest.fixture(scope="session")
def params_b():
    return ModelParams(**CONFIG_B)


@pytest.fixture(scope="session")
def params_eb():
    return ModelParams(**CONFIG_EB)


@pytest.fixture(scope="session")
def eq_a(params_a):
    return solve(params_a)


@pytest.fixture(scope="session")
def eq_b(params_b):
    return solve(params_b)


@pytest.fixture(scope="session")
def eq_eb(params_eb):
    return solve(params_eb)


@pytest.fixture(scope="session")
def series_a(eq_a, params_a):
    return propagate(eq_a, params_a)


@pytest.fixture(scope="session")
def series_b(eq_b, params_b):
    return propagate(eq_b, params_b)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """record(number, ok, detail): log one PASS/FAIL line and fail the test on FAIL."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
