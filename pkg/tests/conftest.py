import numpy as np
import pytest

from robustq.environments import build_coin_problem
from robustq.mdp import robust_value_iteration

# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

# greedy actions of the trained policies over states 0..10
TRAINED_ROWS = {
    "P1": (1, 1, 1, 1, 1, 0, 0, -1, -1, -1, -1),
    "P2": (1, 1, 1, 0, 0, 0, -1, -1, -1, -1, -1),
    "P3": (1, 1, 1, 1, 0, 0, 0, -1, -1, -1, -1),
    "P4": (1, 1, 1, 0, 0, 0, 0, 0, -1, -1, -1),
    "non-robust": (1, 1, 1, 1, 1, 0, -1, -1, -1, -1, -1),
}


@pytest.fixture(scope="session")
def p1():
    return build_coin_problem([0.5, 0.6], 0.95)


@pytest.fixture(scope="session")
def p2():
    return build_coin_problem([0.5, 0.3], 0.95)


@pytest.fixture(scope="session")
def qstar_p1(p1):
    return robust_value_iteration(p1, tol=1e-10).q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
