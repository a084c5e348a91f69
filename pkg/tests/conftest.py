import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def series_sr(P, gamma, terms=400):
    """Occupancy from the next step on, by brute-force summation of the series."""
    out = np.zeros_like(P, dtype=float)
    Pk = P.copy()
    for k in range(terms):
        out += gamma ** k * Pk
        Pk = Pk @ P
    return out


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
