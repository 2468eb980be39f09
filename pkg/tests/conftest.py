import numpy as np
import pytest

from sqdkrylov.operators import spd_inverse_from_dense
from sqdkrylov.problem import SqdProblem


def random_spd(rng, n, cond=10.0):
    """Random SPD matrix with eigenvalues spread over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.geomspace(1.0, cond, n)
    M = (Q * eig) @ Q.T
    return 0.5 * (M + M.T)


def make_problem(rng, m, n, precond=None, tau=1, nu=-1, density=None):
    """Random dense-data problem; ``precond`` is None, "diag" or "dense"."""
    A = rng.standard_normal((m, n))
    if density is not None:
        A *= rng.random((m, n)) < density
    b = rng.standard_normal(m)
    c = rng.standard_normal(n)
    kw = {}
    if precond == "diag":
        kw["Minv"] = spd_inverse_from_dense(np.diag(rng.uniform(0.5, 3.0, m)))
        kw["Ninv"] = spd_inverse_from_dense(np.diag(rng.uniform(0.5, 3.0, n)))
    elif precond == "dense":
        kw["Minv"] = spd_inverse_from_dense(random_spd(rng, m))
        kw["Ninv"] = spd_inverse_from_dense(random_spd(rng, n))
    return SqdProblem(A, b, c, tau=tau, nu=nu, **kw)


def interleave(V, U, k):
    """``W_k`` with columns ``(v_1, 0), (0, u_1), (v_2, 0), ...``."""
    m, n = V.shape[0], U.shape[0]
    W = np.zeros((m + n, 2 * k))
    W[:m, 0::2] = V[:, :k]
    W[m:, 1::2] = U[:, :k]
    return W


def projected_rhs(coeffs, rows):
    rhs = np.zeros(rows)
    rhs[0], rhs[1] = coeffs.betas[0], coeffs.gammas[0]
    return rhs


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """``record(number, ok, detail)`` prints one pass/fail line and asserts ``ok``."""

    def record(number, ok, detail, skipped=False):
        verdict = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        line = f"criterion {number:>2}: {verdict}  {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        if skipped:
            pytest.skip(detail)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
