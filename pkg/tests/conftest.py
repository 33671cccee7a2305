import numpy as np
import pytest

from monospde import Additive, Constant, Periodic, Pivot, PorousMedia, ReactionDiffusion, make_grid


def noise_amplitudes(n=16, scale=0.1, decay=2.0):
    return tuple(scale * k ** (-decay) for k in range(1, n + 1))


@pytest.fixture(scope="session")
def grid32():
    return make_grid(1.0, 32)


@pytest.fixture(scope="session")
def rd(grid32):
    return ReactionDiffusion(grid32, 4.0, Periodic(1.0, 0.0, (), (1.0,)), a=1.0)


@pytest.fixture(scope="session")
def rd_noise(grid32):
    return Additive(grid32, noise_amplitudes())


@pytest.fixture(scope="session")
def pm(grid32):
    return PorousMedia(grid32, 4.0, Constant(-1.0))


@pytest.fixture(scope="session")
def pm_noise(grid32):
    return Additive(grid32, noise_amplitudes(), Pivot.DUAL_SOBOLEV)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
