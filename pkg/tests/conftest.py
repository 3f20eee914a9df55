import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from helpers import make_graph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def notation_graph():
    """Six nodes around node 3 (index 2): in-neighbours 1, 2 and out-neighbours 4, 5, 6."""
    edges = [(0, 2), (1, 2), (2, 3), (2, 4), (2, 5)]
    g = make_graph(6, edges)
    labels = np.array([0, 1, 1, 0, 0, 2])
    return g, labels


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[n])
