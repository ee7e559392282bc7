import os
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def golden():
    from amolab.arithmetic import Frequency
    return Frequency.from_fraction(Fraction(4181, 6765))


@pytest.fixture(scope="session")
def golden_deep():
    from amolab.arithmetic import Frequency
    return Frequency.from_target("golden", min_denominator=24000)


@pytest.fixture(scope="session")
def resonant_phase(golden):
    from amolab.arithmetic import construct_phase
    return construct_phase(golden, 0.5, [20])


@pytest.fixture(scope="session")
def flat_phase(golden):
    from amolab.arithmetic import construct_phase
    return construct_phase(golden, 0.5, [])


_ACCEPTANCE = []


@pytest.fixture
def report_line():
    """Record one summary line per acceptance check (printed at the end of the run)."""
    def rec(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
    return rec


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
