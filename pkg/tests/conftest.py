import numpy as np
import pytest


def spec_norm(M):
    """Oracle spectral norm: largest singular value from a full SVD."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one-line verdicts from tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE = {}


def record(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
