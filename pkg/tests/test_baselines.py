import numpy as np
import pytest
from scipy.sparse.linalg import minres as scipy_minres

from sqdkrylov.baselines import FullSystemView, PreconditionedLanczos, minres_solve, symmlq_solve
from sqdkrylov.problem import SolverOptions, SqdProblem, Status

from conftest import make_problem

SOLVERS = [minres_solve, symmlq_solve]


def cg_breakdown_problem(rng, m=8, n=5):
    """Problem with ``r_0^T K r_0 = 0``: the first CG step divides by zero."""
    A = rng.standard_normal((m, n))
    b, c = rng.standard_normal(m), rng.standard_normal(n)
    # b'b + 2 t b'Ac - t^2 c'c = 0, take the positive root
    p, q, r = -(c @ c), 2.0 * (b @ A @ c), b @ b
    t = (-q - np.sqrt(q * q - 4 * p * r)) / (2 * p)
    return SqdProblem(A, b, t * c)


@pytest.mark.parametrize("solve", SOLVERS)
def test_identity_system_one_iteration(rng, solve):
    b, c = rng.standard_normal(4), rng.standard_normal(3)
    rep = solve(SqdProblem(np.zeros((4, 3)), b, c, tau=1, nu=1))
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(rep.x, b, rtol=1e-14)
    np.testing.assert_allclose(rep.y, c, rtol=1e-14)


@pytest.mark.parametrize("solve", SOLVERS)
@pytest.mark.parametrize("precond", [None, "diag", "dense"])
def test_matches_dense_solve(rng, solve, precond):
    p = make_problem(rng, 30, 30, precond=precond)
    rep = solve(p)
    assert rep.converged
    z = np.linalg.solve(p.dense_K(), p.rhs)
    assert np.linalg.norm(np.r_[rep.x, rep.y] - z) <= 1e-8 * np.linalg.norm(z)


@pytest.mark.parametrize("solve", SOLVERS)
def test_history_starts_at_preconditioned_rhs_norm(rng, solve):
    p = make_problem(rng, 12, 9, precond="dense")
    rep = solve(p, SolverOptions(max_iterations=2))
    assert rep.residual_history[0] == pytest.approx(p.hinv_norm(p.b, p.c), rel=1e-14)
    assert len(rep.residual_history) == rep.iterations + 1


def test_minres_monotone(rng):
    p = make_problem(rng, 40, 25, precond="diag")
    h = np.array(minres_solve(p).residual_history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])


@pytest.mark.parametrize("solve", SOLVERS)
def test_recurrence_matches_explicit(rng, solve):
    p = make_problem(rng, 30, 30, precond="diag")
    seen = []
    rep = solve(p, callback=lambda k, z, rnorm: seen.append((z.copy(), rnorm)))
    view = FullSystemView(p)
    r0 = rep.residual_history[0]
    for z, rnorm in seen:
        explicit = view.residual_norm(z)
        if explicit < 1e-8 * r0:
            break
        assert rnorm == pytest.approx(explicit, rel=1e-6)


def test_minres_agrees_with_scipy(rng):
    p = make_problem(rng, 25, 20)
    rep = minres_solve(p, SolverOptions(atol=0.0, rtol=1e-12))
    K = p.dense_K()
    z, info = scipy_minres(K, p.rhs, rtol=1e-13, maxiter=500)
    assert info == 0
    np.testing.assert_allclose(np.r_[rep.x, rep.y], z, rtol=1e-7, atol=1e-8 * np.abs(z).max())


def test_symmlq_one_dimensional():
    rep = symmlq_solve(SqdProblem(np.array([[2.0]]), [3.0], [4.0]))
    assert rep.converged and rep.iterations <= 2
    assert rep.x[0] == pytest.approx(2.2) and rep.y[0] == pytest.approx(0.4)


def test_symmlq_skips_missing_cg_point(rng):
    p = cg_breakdown_problem(rng)
    z0 = np.r_[p.b, p.c]
    assert abs(z0 @ p.dense_K() @ z0) <= 1e-12 * (z0 @ z0)
    rep = symmlq_solve(p)
    assert 1 in rep.extras["cg_missing"]
    assert rep.converged
    z = np.linalg.solve(p.dense_K(), p.rhs)
    assert np.linalg.norm(np.r_[rep.x, rep.y] - z) <= 1e-8 * np.linalg.norm(z)


def test_lanczos_vectors_are_h_orthonormal(rng):
    p = make_problem(rng, 15, 10, precond="dense")
    view = FullSystemView(p)
    lz = PreconditionedLanczos(view)
    H = np.zeros((25, 25))
    H[:15, :15], H[15:, 15:] = p.M.to_dense(), p.N.to_dense()
    V = []
    for _ in range(6):
        v, _, _ = lz.step()
        V.append(v)
    V = np.array(V).T
    np.testing.assert_allclose(V.T @ H @ V, np.eye(6), atol=1e-10)


def test_requires_forward_preconditioner(rng):
    from sqdkrylov.operators import DenseOperator

    p = SqdProblem(rng.standard_normal((3, 2)), np.ones(3), np.ones(2),
                   Minv=DenseOperator(np.eye(3)), Ninv=DenseOperator(np.eye(2)))
    with pytest.raises(ValueError):
        minres_solve(p)


@pytest.mark.parametrize("solve", SOLVERS)
def test_max_iterations_status(rng, solve):
    rep = solve(make_problem(rng, 30, 25), SolverOptions(max_iterations=3))
    assert rep.status == Status.MAX_ITERATIONS and rep.iterations == 3
