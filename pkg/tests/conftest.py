import pytest
from hypothesis import HealthCheck, settings

from mbplab import FiniteSupport, Stable

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def quadratic():
    """Critical law f(s) = (1 - s)^2."""
    return Stable(1.0, 1.0)


@pytest.fixture(scope="session")
def half_stable():
    return Stable(0.5, 1.0)


@pytest.fixture(scope="session")
def supercritical_bd():
    """Death rate 1, birth rate 2: f(s) = 1 - 3s + 2s^2, q = 1/2."""
    return FiniteSupport(1.0, -3.0, 2.0)


@pytest.fixture(scope="session")
def subcritical_bd():
    """Death rate 2, birth rate 1: f(s) = 2 - 3s + s^2, q = 1."""
    return FiniteSupport(2.0, -3.0, 1.0)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    """Print and remember one acceptance verdict line."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
