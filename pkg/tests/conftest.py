import numpy as np
import pytest
from hypothesis import settings

from adkf.scenario import load_scenario

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tree_scenario():
    return load_scenario("tracking_tree")


@pytest.fixture(scope="session")
def digraph_scenario():
    return load_scenario("tracking_digraph")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
