import numpy as np
import pytest

from msqi.pointset import Domain, build_level_sequence

REFERENCE_DOMAIN = Domain(-0.95, 0.95, -0.95, 0.95)


@pytest.fixture(scope="session")
def reference_levels():
    """The five-level scalar configuration used throughout the experiments."""
    return build_level_sequence(REFERENCE_DOMAIN, 0.375, 0.8, 3.0, 5)


@pytest.fixture(scope="session")
def small_levels():
    return build_level_sequence(Domain(-1, 1, -1, 1), 0.5, 0.7, 3.0, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import report_lines
    lines = report_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
