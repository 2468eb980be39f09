import numpy as np
import pytest
from sklearn.base import clone

from sqdkrylov import MINRES, SYMMLQ, TriCG, TriMR, Status

from conftest import random_spd

ESTIMATORS = [TriCG, TriMR, SYMMLQ, MINRES]


@pytest.mark.parametrize("cls", ESTIMATORS)
def test_fit_recovers_ones(rng, cls):
    A = rng.standard_normal((15, 10))
    M, N = random_spd(rng, 15), random_spd(rng, 10)
    b = M @ np.ones(15) + A @ np.ones(10)
    c = A.T @ np.ones(15) - N @ np.ones(10)
    est = cls().fit(A, b, c, M=M, N=N)
    assert est.status_ == Status.CONVERGED
    np.testing.assert_allclose(est.x_, 1.0, atol=1e-7)
    np.testing.assert_allclose(est.y_, 1.0, atol=1e-7)
    assert est.n_iter_ == len(est.residual_history_) - 1


@pytest.mark.parametrize("cls", ESTIMATORS)
def test_params_round_trip(cls):
    est = cls(rtol=1e-6, max_iterations=7)
    assert est.get_params()["rtol"] == 1e-6
    twin = clone(est).set_params(atol=0.0)
    assert twin.max_iterations == 7 and twin.atol == 0.0


def test_saddle_point_estimator(rng):
    A = rng.standard_normal((12, 5))
    b, c = rng.standard_normal(12), rng.standard_normal(5)
    est = TriMR(nu=0).fit(A, b, c)
    K = np.block([[np.eye(12), A], [A.T, np.zeros((5, 5))]])
    z = np.linalg.solve(K, np.r_[b, c])
    np.testing.assert_allclose(np.r_[est.x_, est.y_], z, atol=1e-8 * np.abs(z).max())


def test_max_iterations_recorded(rng):
    A = rng.standard_normal((20, 15))
    est = TriCG(max_iterations=2).fit(A, rng.standard_normal(20), rng.standard_normal(15))
    assert est.status_ == Status.MAX_ITERATIONS and est.n_iter_ == 2
