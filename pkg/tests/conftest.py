import numpy as np
import pytest

from saddledd.decomposition import decompose
from saddledd.ns import build_preconditioners
from saddledd.problems import ProblemSpec, generate


@pytest.fixture(scope="session")
def darcy_small():
    return generate(ProblemSpec("mixed_darcy_mac", 12, 12, seed=0))


@pytest.fixture(scope="session")
def poisson_small():
    return generate(ProblemSpec("poisson2d_constrained", 16, 16, seed=0, C_mode="diag_eps"))


@pytest.fixture(scope="session")
def random_small():
    return generate(ProblemSpec("random_spd_constrained", 12, 12, seed=3, C_mode="split_eps"))


@pytest.fixture(scope="session", params=["darcy_small", "poisson_small", "random_small"])
def any_system(request):
    return request.getfixturevalue(request.param)


@pytest.fixture(scope="session")
def darcy_setup(darcy_small):
    dec = decompose(darcy_small, 4, overlap=1)
    return darcy_small, dec, build_preconditioners(darcy_small, dec, tau_A=0.7, tau_S1=1.0)


@pytest.fixture(scope="session")
def any_setup(any_system):
    dec = decompose(any_system, 4, overlap=1)
    return any_system, dec, build_preconditioners(any_system, dec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(RESULTS):
            terminalreporter.write_line(line)
