import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def _report(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.line(line)
