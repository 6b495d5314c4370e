import numpy as np
import pytest

from klcetest import AuditDataset


def random_dataset(rng, n, d=2, discrete_scores=False):
    x = rng.standard_normal((n, d))
    f = rng.random(n)
    if discrete_scores:
        f = np.round(f, 1)
    y = (rng.random(n) < rng.random(n)).astype(float)
    return AuditDataset(x, y, f)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def make_dataset():
    return random_dataset


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
