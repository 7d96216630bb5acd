import numpy as np
import pytest

from hmm_elast import benchmarks as bm


@pytest.fixture(scope="session")
def beam_50x10():
    from hmm_elast.studies import solve_one

    return solve_one(bm.beam(), 50, 10, 32, "transfer")


@pytest.fixture(scope="session")
def plate_20x20():
    from hmm_elast.studies import solve_one

    return solve_one(bm.plate_laminate(), 20, 20, 20, "transfer")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
