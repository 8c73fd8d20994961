import numpy as np
import pytest

from kdvnf import acceptance, hill
from kdvnf.potential import make_trig_potential, zero_potential


@pytest.fixture(scope="session")
def q_zero():
    return zero_potential()


@pytest.fixture(scope="session")
def t_zero(q_zero):
    return hill.spectral_table(q_zero, 12)


@pytest.fixture(scope="session")
def q_cos():
    return make_trig_potential({1: 1.0, -1: 1.0})


@pytest.fixture(scope="session")
def q_lame():
    return acceptance.lame(0.5)


@pytest.fixture(scope="session")
def t_lame():
    # shared with the acceptance suite through its cache
    return acceptance.lame_table(0.5, 45)


@pytest.fixture(scope="session")
def t_lame12(q_lame):
    return hill.spectral_table(q_lame, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
