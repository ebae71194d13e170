import math

import pytest
from hypothesis import HealthCheck, settings

from isocomplexity.structure_function import FieldParams, make_builtin

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="session")
def log_corr():
    return make_builtin("log-correlator", (1.0, 1.0))


@pytest.fixture(scope="session")
def exp_mix():
    return make_builtin("exponential-mixture", (2.0, 0.5))


@pytest.fixture
def field(log_corr):
    def make(mu):
        return FieldParams(log_corr, mu)

    return make


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
