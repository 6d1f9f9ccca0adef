import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from codiff.diffusion import MixtureModel, build_schedule
from codiff.prototypes import default_mixture
from codiff.semantic import default_graph

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def schedule():
    return build_schedule()


@pytest.fixture(scope="session")
def graph():
    return default_graph()


@pytest.fixture(scope="session")
def mixture(graph):
    return default_mixture(graph=graph)


@pytest.fixture
def tiny_mixture():
    """Two 2x2 components at +/-0.8, used where 16x16 would be slow."""
    mu = np.full((2, 2), 0.8)
    return MixtureModel.build({"a": mu, "b": -mu}, 2, 2, sigma0=0.1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
