import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from sqdkrylov.operators import CsrMatrix
from sqdkrylov.problem import SolverOptions, SqdProblem, Status
from sqdkrylov.ssy import assemble_S, run_ssy
from sqdkrylov.trimr import (
    GivensPair,
    TriMrSolver,
    TriMrWorkspace,
    sym_givens,
    trimr_qr_init,
    trimr_qr_step,
    trimr_solve,
)

from conftest import interleave, make_problem, projected_rhs
from oracles import apply_Qt, qr_from_coefficients

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


class Recorder:
    def __init__(self):
        self.steps = []

    def __call__(self, k, solver):
        ws = solver.workspace
        self.steps.append(
            dict(
                k=k, x=ws.x.copy(), y=ws.y.copy(), rnorm=ws.rnorm,
                rec=solver.recurrence_history[-1], givens=ws.givens,
                gx=(ws.gx[2].copy(), ws.gx[3].copy()),
                gy=(ws.gy[2].copy(), ws.gy[3].copy()),
            )
        )


# ------------------------------------------------------------------ reflections


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (3.0, 4.0, (0.6, 0.8, 5.0)),
        (0.0, 0.0, (1.0, 0.0, 0.0)),
        (-2.0, 0.0, (-1.0, 0.0, 2.0)),
        (0.0, -3.0, (0.0, -1.0, 3.0)),
        (-3.0, 4.0, (-0.6, 0.8, 5.0)),
    ],
)
def test_sym_givens_examples(a, b, expected):
    g, r = sym_givens(a, b)
    assert (g.c, g.s, r) == pytest.approx(expected, rel=1e-15)


@given(finite, finite)
def test_sym_givens_properties(a, b):
    g, r = sym_givens(a, b)
    assert abs(g.c**2 + g.s**2 - 1.0) <= 1e-14
    assert r >= 0.0
    scale = max(abs(a), abs(b), 1.0)
    assert abs(g.c * a + g.s * b - r) <= 1e-14 * scale
    assert abs(g.s * a - g.c * b) <= 1e-14 * scale


def test_reflection_matrix_is_orthogonal_involution():
    G = GivensPair(0.6, 0.8).matrix
    np.testing.assert_allclose(G @ G, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(G, G.T)


# ------------------------------------------------------------------ QR factorization


@pytest.mark.parametrize("nu", [-1, 0])
@pytest.mark.parametrize("precond", [None, "diag"])
def test_qr_reconstruction(rng, nu, precond):
    p = make_problem(rng, 30, 20, precond=precond, nu=nu)
    K = 10
    _, _, co = run_ssy(p.A, p.b, p.c, p.Minv, p.Ninv, k=K + 1)
    S = assemble_S(co, 1, nu, rows=2 * K + 2, cols=2 * K)
    R, givens, _ = qr_from_coefficients(co, 1, nu, K)
    assert np.allclose(R, np.triu(R))
    reduced = apply_Qt(S, givens)
    scale = np.abs(S).max()
    assert np.abs(reduced[: 2 * K] - R).max() <= 1e-12 * scale
    assert np.abs(reduced[2 * K:]).max() <= 1e-12 * scale
    # Q [R; 0] = S, with Q built explicitly from the reflections
    Q = apply_Qt(np.eye(2 * K + 2), givens).T
    assert np.abs(Q @ np.vstack([R, np.zeros((2, 2 * K))]) - S).max() <= 1e-12 * scale
    np.testing.assert_allclose(Q.T @ Q, np.eye(2 * K + 2), atol=1e-13)


def test_qr_of_decoupled_block():
    # A = 0: S_{2,1} = [[1, 0], [0, -1], [0, 0], [0, 0]] and R has r >= 0
    ws = TriMrWorkspace(1, 1)
    trimr_qr_init(ws, 0.0, 0.0, 0.0)
    rows = trimr_qr_step(ws, 0.0, 0.0, 0.0, 0.0, 0.0, 1)
    assert rows[0][:2] == [1.0, 0.0]
    assert rows[1][0] == 1.0


def test_rotated_rhs_matches_dense(rng):
    p = make_problem(rng, 25, 15)
    K = 8
    _, _, co = run_ssy(p.A, p.b, p.c, k=K + 1)
    _, givens, pis = qr_from_coefficients(co, 1, -1, K)
    expected = apply_Qt(projected_rhs(co, 2 * K + 2)[:, None], givens)[:, 0]
    np.testing.assert_allclose(pis, expected, rtol=1e-12, atol=1e-12 * co.betas[0])


# ------------------------------------------------------------------ full solves


@pytest.mark.parametrize("precond", [None, "diag", "dense"])
def test_least_squares_optimality(rng, precond):
    p = make_problem(rng, 30, 20, precond=precond)
    rec = Recorder()
    TriMrSolver(p, SolverOptions(max_iterations=10), rec).solve()
    V, U, co = run_ssy(p.A, p.b, p.c, p.Minv, p.Ninv, k=11)
    for s in rec.steps:
        k = s["k"]
        S = assemble_S(co, 1, -1, rows=2 * k + 2, cols=2 * k)
        rhs = projected_rhs(co, 2 * k + 2)
        z, *_ = np.linalg.lstsq(S, rhs, rcond=None)
        optimum = np.linalg.norm(S @ z - rhs)
        assert s["rec"] == pytest.approx(optimum, rel=1e-9)
        xy = interleave(V, U, k) @ z
        assert np.linalg.norm(np.r_[s["x"], s["y"]] - xy) <= 1e-9 * np.linalg.norm(xy)


def test_directions_satisfy_triangular_relation(rng):
    p = make_problem(rng, 14, 11)
    K = 6
    rec = Recorder()
    TriMrSolver(p, SolverOptions(max_iterations=K), rec).solve()
    V, U, co = run_ssy(p.A, p.b, p.c, k=K + 1)
    R, _, _ = qr_from_coefficients(co, 1, -1, K)
    G = np.zeros((25, 2 * K))
    for s in rec.steps:
        j = s["k"]
        G[:14, 2 * j - 2], G[:14, 2 * j - 1] = s["gx"]
        G[14:, 2 * j - 2], G[14:, 2 * j - 1] = s["gy"]
    W = interleave(V, U, K)
    np.testing.assert_allclose(R.T @ G.T, W.T, atol=1e-11)


@pytest.mark.parametrize("shape", [(30, 20), (20, 30), (25, 25)])
def test_residual_history_nonincreasing(rng, shape):
    p = make_problem(rng, *shape, precond="diag")
    rep = trimr_solve(p, SolverOptions(max_iterations=40))
    h = np.array(rep.residual_history)
    assert np.all(np.diff(h) <= 1e-12 * h[0])


def test_residual_recurrence_matches_explicit(rng):
    p = make_problem(rng, 35, 35, precond="dense")
    rec = Recorder()
    rep = TriMrSolver(p, SolverOptions(), rec).solve()
    assert rep.converged
    r0 = rep.residual_history[0]
    for s in rec.steps:
        explicit = p.residual_norm(s["x"], s["y"])
        if explicit < 1e-8 * r0:
            break
        assert abs(s["rnorm"] - explicit) <= 1e-6 * explicit


def test_random_sparse_matches_dense(rng):
    A = sp.random(50, 50, density=0.1, random_state=rng, data_rvs=rng.standard_normal)
    p = SqdProblem(CsrMatrix.from_scipy(A), rng.standard_normal(50), rng.standard_normal(50))
    rep = trimr_solve(p)
    assert rep.converged
    z = np.linalg.solve(p.dense_K(), p.rhs)
    assert np.linalg.norm(np.r_[rep.x, rep.y] - z) <= 1e-8 * np.linalg.norm(z)


def test_zero_operator_converges_in_one_step(rng):
    b, c = rng.standard_normal(4), rng.standard_normal(3)
    rep = trimr_solve(SqdProblem(np.zeros((4, 3)), b, c))
    assert rep.status == Status.CONVERGED and rep.iterations == 1
    np.testing.assert_allclose(rep.x, b, rtol=1e-15)
    np.testing.assert_allclose(rep.y, -c, rtol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_saddle_point_matches_dense(seed):
    rng = np.random.default_rng(seed)
    p = make_problem(rng, 30, 12, nu=0)
    rep = trimr_solve(p)
    assert rep.converged
    z = np.linalg.solve(p.dense_K(), p.rhs)
    assert np.linalg.norm(np.r_[rep.x, rep.y] - z) <= 1e-8 * np.linalg.norm(z)


def test_one_sided_termination_is_completed(rng):
    p = make_problem(rng, 20, 6)
    rep = trimr_solve(p)
    assert rep.converged and rep.iterations == 7
    z = np.linalg.solve(p.dense_K(), p.rhs)
    assert np.linalg.norm(np.r_[rep.x, rep.y] - z) <= 1e-10 * np.linalg.norm(z)


def test_givens_pairs_are_unit(rng):
    p = make_problem(rng, 40, 25, precond="diag")
    rec = Recorder()
    TriMrSolver(p, callback=rec).solve()
    for s in rec.steps:
        for g in s["givens"]:
            assert abs(g.c**2 + g.s**2 - 1.0) <= 1e-14


def test_storage_counts(rng):
    assert TriMrSolver(make_problem(rng, 9, 7)).vector_counts() == {"m": 7, "n": 7}


def test_explicit_residual_option(rng):
    p = make_problem(rng, 20, 15)
    rep = trimr_solve(p, SolverOptions(explicit_residual=True))
    assert rep.converged
    assert rep.rnorm == pytest.approx(p.residual_norm(rep.x, rep.y), rel=1e-12)
    assert math.isfinite(rep.elapsed)
