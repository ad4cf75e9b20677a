import sys

import numpy as np
import pytest

from bowforge.bow import make_representation
from bowforge.nahm import abelian_bow_solution

NU1 = np.array([[0.1, -0.2, 0.3]])


def build(p, lam, ranks, T, nu=NU1, **kw):
    return abelian_bow_solution(make_representation(1, p, lam, ranks), np.asarray(nu), T, **kw)


@pytest.fixture(scope="session")
def u1_solution():
    """k = 1, rank one everywhere, a single continuous lambda-point."""
    return build(["1/2"], ["7/10"], [1, 1, 1], {0: [0.4, 0.5, -0.6]})


@pytest.fixture(scope="session")
def rank2_solution():
    """A jump up at 1/5 and back down at 4/5, straddling the p-point."""
    return build(["1/2"], ["1/5", "4/5"], [0, 1, 1, 0], {1: [0.2, 0.3, 0.4]})


@pytest.fixture(scope="session")
def rank3_solution():
    return build(["3/5"], ["1/5", "2/5", "4/5"], [0, 1, 1, 1, 0], {1: [0.2, 0.3, 0.4], 2: [-0.1, 0.5, 0.2]})


@pytest.fixture(scope="session")
def asymptotic_solution():
    return build(["2/5"], ["1/4", "3/5"], [0, 1, 1, 0], {1: [0.2, 0.3, 0.4]})


@pytest.fixture(scope="session")
def line_solution():
    """Rank one on (3/10, 7/10) only; its instanton is abelian with lambda = 7/10, v = 0."""
    return build(["3/10"], ["7/10"], [0, 1, 0], {})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.lines():
        terminalreporter.write_line(line)
