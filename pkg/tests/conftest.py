import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def annulus_small():
    from meshfree_heat import generate_annulus

    return generate_annulus(spacing=0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Callable recording one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'} [{title}] {detail}".rstrip()
        print("\n" + line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
