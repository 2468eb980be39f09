"""Estimator-style wrappers with ``get_params``/``set_params`` and ``fit``.

``fit(A, b, c, M=None, N=None)`` solves one block system and stores the
solution as fitted attributes. There is no ``predict``: a solve has no
out-of-sample use.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .baselines import minres_solve, symmlq_solve
from .operators import aslinearoperator, spd_inverse_from_dense
from .problem import SolverOptions, SqdProblem
from .tricg import tricg_solve
from .trimr import trimr_solve

__all__ = ["TriCG", "TriMR", "SYMMLQ", "MINRES"]


class _BlockSolver(BaseEstimator):
    _solve = None

    def __init__(self, atol=1e-12, rtol=1e-10, max_iterations=None, tau=1, nu=-1,
                 explicit_residual=False):
        self.atol = atol
        self.rtol = rtol
        self.max_iterations = max_iterations
        self.tau = tau
        self.nu = nu
        self.explicit_residual = explicit_residual

    def _problem(self, A, b, c, M, N):
        A = aslinearoperator(A)
        kw = {}
        if M is not None:
            kw["Minv"] = spd_inverse_from_dense(M)
        if N is not None:
            kw["Ninv"] = spd_inverse_from_dense(N)
        return SqdProblem(A, b, c, tau=self.tau, nu=self.nu, **kw)

    def fit(self, A, b, c, M=None, N=None):
        """Solve the block system with dense SPD ``M``, ``N`` (identity if omitted).

        Sets ``x_``, ``y_``, ``n_iter_``, ``residual_history_``, ``status_``
        and ``report_``.
        """
        problem = self._problem(A, b, c, M, N)
        opts = SolverOptions(
            atol=self.atol, rtol=self.rtol, max_iterations=self.max_iterations,
            explicit_residual=self.explicit_residual,
        )
        report = type(self)._solve(problem, opts)
        self.report_ = report
        self.x_, self.y_ = report.x, report.y
        self.n_iter_ = report.iterations
        self.residual_history_ = report.residual_history
        self.status_ = report.status
        return self


class TriCG(_BlockSolver):
    _solve = staticmethod(tricg_solve)


class TriMR(_BlockSolver):
    _solve = staticmethod(trimr_solve)


class SYMMLQ(_BlockSolver):
    _solve = staticmethod(symmlq_solve)


class MINRES(_BlockSolver):
    _solve = staticmethod(minres_solve)
