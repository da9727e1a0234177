import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ls20():
    from alrmom import gen_least_squares
    return gen_least_squares(20, 100.0, 0)


@pytest.fixture(scope="session")
def logistic_small():
    from alrmom import gen_logistic_synthetic
    return gen_logistic_synthetic(200, 5, 0.1, 3)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record and print a one-line verdict for an acceptance criterion."""

    def record(number, passed, detail, elapsed=None):
        timing = "" if elapsed is None else f" [{elapsed:.2f}s]"
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}{timing}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
