import numpy as np
import pytest
from scipy.special import expit

from hyflexa.problem import BlockPartition, CompositeProblem, l1_nonsmooth


def softplus_regression(m=12, n=9, block=3, seed=0, c=0.1):
    """``||Ax - b||^2 + sum log(1 + e^x)`` with l1 weight ``c`` on blocks of ``block``.

    Returns the problem and a block-Hessian evaluator.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n)) / np.sqrt(m)
    b = rng.standard_normal(m)
    part = BlockPartition.uniform(n, block)

    def F(x):
        r = A @ x - b
        return float(r @ r) + float(np.sum(np.logaddexp(0.0, x)))

    def grad(x):
        return 2.0 * A.T @ (A @ x - b) + expit(x)

    def hess(i, x):
        sl = part.slice(i)
        s = expit(x[sl])
        Ai = A[:, sl]
        return 2.0 * Ai.T @ Ai + np.diag(s * (1.0 - s))

    return CompositeProblem(part, F, grad, l1_nonsmooth(c)), hess


@pytest.fixture
def softplus_problem():
    return softplus_regression()


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record ``(criterion, passed, detail)``; a summary is printed at the end of the run."""

    def record(name, passed, detail):
        _ACCEPTANCE[name] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s[1:])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
