import numpy as np
import pytest

from pomcmc import build_score_table, sample_network_data
from pomcmc.data import builtin_network

from oracles import random_dataset

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line verdict for the acceptance summary."""

    def record(name: str, passed: bool, detail: str = ""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_scores():
    rng = np.random.default_rng(7)
    return build_score_table(random_dataset(5, 40, rng), 3)


@pytest.fixture(scope="session")
def asia():
    return builtin_network("asia")


@pytest.fixture(scope="session")
def asia_scores(asia):
    return build_score_table(sample_network_data(asia, 500, 1), 3)
