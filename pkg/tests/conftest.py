import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gibbslab.potentials import (  # noqa: E402
    bernoulli_potential,
    constant_potential,
    long_range_ising,
    markov_potential,
)
from gibbslab.transfer import g_function, solve  # noqa: E402

MARKOV2_TABLE = [0.1, -0.4, 0.3, 0.2]


@pytest.fixture(scope="session")
def zero_phi():
    return constant_potential(0.0)


@pytest.fixture(scope="session")
def bern03():
    """Bernoulli potential with P(1) = 0.3."""
    return bernoulli_potential([0.7, 0.3])


@pytest.fixture(scope="session")
def markov2():
    return markov_potential(MARKOV2_TABLE, 2)


@pytest.fixture(scope="session")
def lri():
    return long_range_ising(4.0)


@pytest.fixture(scope="session")
def S_zero(zero_phi):
    return solve(zero_phi, 8)


@pytest.fixture(scope="session")
def S_bern03(bern03):
    return solve(bern03, 8)


@pytest.fixture(scope="session")
def S_markov2(markov2):
    return solve(markov2, 8)


@pytest.fixture(scope="session")
def S_lri(lri):
    return solve(lri, 10)


@pytest.fixture(scope="session")
def G_lri(S_lri, lri):
    return g_function(S_lri, lri)


# criterion number -> (passed, detail), filled by test_acceptance
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {detail}")
