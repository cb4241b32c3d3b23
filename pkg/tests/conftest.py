import numpy as np
import pytest

from dscovr.baselines import saddle_oracle
from dscovr.data import make_problem, synth_problem
from dscovr.stepsizes import SamplingScheme


def f1_problem(loss="quadratic", lam=1.0):
    """2x2 fixture: X = [[1, 2], [3, 4]], y = (1, -1), one row and one column per block."""
    return make_problem(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, -1.0]), 2, 2, loss, lam)


@pytest.fixture
def f1():
    return f1_problem()


@pytest.fixture(scope="session")
def small():
    """The 200 x 50 synthetic ridge problem on a 4 x 5 grid."""
    pr = synth_problem(200, 50, 4, 5, "quadratic", 0.1, seed=0)
    return pr, saddle_oracle(pr), SamplingScheme.uniform(4, 5)


VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """``verdict(label, ok, detail)`` prints and records one PASS/FAIL line, then asserts ``ok``."""

    def report(label, ok, detail=""):
        line = f"{label} {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        request.config.stash[VERDICTS].append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
