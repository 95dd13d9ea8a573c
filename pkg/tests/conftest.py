import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cvmpc.contact import object_preset
from cvmpc.kinematics import load_chain

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def chain():
    return load_chain()


@pytest.fixture(scope="session")
def cube():
    return object_preset("cube_sim")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_q(chain, rng, margin=0.2):
    return rng.uniform(chain.lower + margin, chain.upper - margin)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one PASS/FAIL line per criterion; printed again in the terminal summary."""
    def report(number: int, name: str, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2d} [{name}]: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert passed, line
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2])):
            terminalreporter.write_line(line)
