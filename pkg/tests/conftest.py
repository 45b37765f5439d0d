import numpy as np
import pytest

from qtt_hdaf.mps import MpsState

ACCEPTANCE_LINES: list[str] = []


def random_mps(rng: np.random.Generator, n: int, bond: int = 4, complex_: bool = True) -> MpsState:
    """Random tensor train with bond dimensions capped at ``bond``."""
    tensors = []
    left = 1
    for site in range(n):
        right = 1 if site == n - 1 else min(bond, 2 ** (site + 1), 2 ** (n - site - 1))
        t = rng.standard_normal((left, 2, right))
        if complex_:
            t = t + 1j * rng.standard_normal((left, 2, right))
        tensors.append(t)
        left = right
    return MpsState(tuple(tensors))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
