"""Problem data, solver options and solve reports shared by every solver.

The block system handled here is::

    [ tau*M   A     ] [x]   [b]
    [ A^T     nu*N  ] [y] = [c]

with ``tau = +1, nu = -1`` the symmetric quasi-definite (SQD) case and
``nu = 0`` the saddle-point case (TriMR only). Only the inverse actions
``Minv`` and ``Ninv`` are needed by the Krylov methods; the forward
operators ``M`` and ``N`` are used for explicit residuals and baselines.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import ShapeError, check_sign, check_tolerances, check_vector
from .operators import (
    IdentityOperator,
    NotSPDError,
    OperatorHandle,
    ScaledIdentity,
    SpdInverse,
    aslinearoperator,
)

__all__ = [
    "Status",
    "ZeroInitialVectorError",
    "PivotError",
    "SqdProblem",
    "SolverOptions",
    "SolveReport",
    "stopping_check",
    "stopping_threshold",
]


class ZeroInitialVectorError(ValueError):
    """``b`` or ``c`` is zero, so the SSY process cannot start."""


class PivotError(ArithmeticError):
    """A pivot of the TriCG LDL^T factorization underflowed."""


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    BREAKDOWN_TERMINATED = "breakdown_terminated"
    ERROR = "error"


def _forward_of(inverse, n):
    if getattr(inverse, "is_identity", False):
        return IdentityOperator(n)
    if isinstance(inverse, SpdInverse):
        return inverse.forward
    if isinstance(inverse, ScaledIdentity):
        return inverse.inverse()
    return None


@dataclass
class SqdProblem:
    """Block system data.

    ``M`` and ``N`` default to the forward operators implied by ``Minv`` and
    ``Ninv`` when those are identity, scaled identity or :class:`SpdInverse`
    handles; for any other inverse handle they stay ``None`` and explicit
    residuals are unavailable.
    """

    A: OperatorHandle
    b: np.ndarray
    c: np.ndarray
    Minv: OperatorHandle = None
    Ninv: OperatorHandle = None
    tau: int = 1
    nu: int = -1
    M: OperatorHandle = None
    N: OperatorHandle = None
    name: str = "problem"

    def __post_init__(self):
        self.A = aslinearoperator(self.A)
        m, n = self.A.shape
        self.b = check_vector(self.b, m, "b")
        self.c = check_vector(self.c, n, "c")
        self.tau = check_sign(self.tau, {1, -1}, "tau")
        self.nu = check_sign(self.nu, {1, 0, -1}, "nu")
        if self.Minv is None:
            self.Minv = IdentityOperator(m)
        if self.Ninv is None:
            self.Ninv = IdentityOperator(n)
        self.Minv = aslinearoperator(self.Minv, symmetric=True)
        self.Ninv = aslinearoperator(self.Ninv, symmetric=True)
        if self.Minv.shape != (m, m):
            raise ShapeError(f"Minv must be {m}x{m}, got {self.Minv.shape}")
        if self.Ninv.shape != (n, n):
            raise ShapeError(f"Ninv must be {n}x{n}, got {self.Ninv.shape}")
        if self.M is None:
            self.M = _forward_of(self.Minv, m)
        if self.N is None:
            self.N = _forward_of(self.Ninv, n)
        for op, k, name in ((self.M, m, "M"), (self.N, n, "N")):
            if op is not None and op.shape != (k, k):
                raise ShapeError(f"{name} must be {k}x{k}, got {op.shape}")

    @property
    def m(self):
        return self.A.nrows

    @property
    def n(self):
        return self.A.ncols

    @property
    def quasi_definite(self):
        return self.tau * self.nu == -1

    @property
    def rhs(self):
        return np.concatenate([self.b, self.c])

    def _require_forward(self):
        if self.M is None or (self.N is None and self.nu != 0):
            raise ValueError("forward operators M and N are required for this computation")

    def apply_K(self, x, y):
        """Return ``K (x, y)`` as the pair ``(top, bottom)``."""
        self._require_forward()
        top = self.tau * self.M.apply(x) + self.A.apply(y)
        bottom = self.A.apply_adjoint(x)
        if self.nu != 0:
            bottom = bottom + self.nu * self.N.apply(y)
        return top, bottom

    def residual(self, x, y):
        top, bottom = self.apply_K(x, y)
        return self.b - top, self.c - bottom

    def hinv_norm(self, r_top, r_bottom):
        """``||(r_top, r_bottom)||_{H^{-1}}`` with ``H = blkdiag(M, N)``."""
        s = float(r_top @ self.Minv.apply(r_top)) + float(r_bottom @ self.Ninv.apply(r_bottom))
        if s < 0.0:
            raise NotSPDError("negative H^{-1} inner product; preconditioner not SPD")
        return math.sqrt(s)

    def residual_norm(self, x, y):
        """Explicit ``||b - K z||_{H^{-1}}``."""
        return self.hinv_norm(*self.residual(x, y))

    def rhs_norm(self):
        return self.hinv_norm(self.b, self.c)

    def dense_K(self):
        """Dense block matrix (test-scale only)."""
        self._require_forward()
        A = self.A.to_dense()
        top = np.hstack([self.tau * self.M.to_dense(), A])
        if self.nu == 0:
            br = np.zeros((self.n, self.n))
        else:
            br = self.nu * self.N.to_dense()
        return np.vstack([top, np.hstack([A.T, br])])


@dataclass
class SolverOptions:
    """Stopping rule and iteration controls.

    ``max_iterations=None`` means ``2 * (m + n)``. ``breakdown_tol_factor``
    scales the SSY breakdown test ``beta_{k+1} <= factor * beta_1``; the
    default is ``sqrt(eps)``.
    """

    atol: float = 1e-12
    rtol: float = 1e-10
    max_iterations: int = None
    explicit_residual: bool = False
    breakdown_tol_factor: float = math.sqrt(np.finfo(float).eps)

    def __post_init__(self):
        check_tolerances(self.atol, self.rtol, self.max_iterations)
        if self.breakdown_tol_factor < 0:
            raise ValueError("breakdown_tol_factor must be nonnegative")

    def maxit_for(self, problem):
        if self.max_iterations is None:
            return 2 * (problem.m + problem.n)
        return int(self.max_iterations)


def stopping_threshold(beta1, gamma1, opts):
    return opts.atol + math.hypot(beta1, gamma1) * opts.rtol


def stopping_check(rnorm, rnorm0_components, opts):
    """True iff ``rnorm <= atol + ||(b, c)||_{H^{-1}} * rtol`` (inclusive)."""
    beta1, gamma1 = rnorm0_components
    return rnorm <= stopping_threshold(beta1, gamma1, opts)


@dataclass
class SolveReport:
    status: Status
    iterations: int
    residual_history: list
    x: np.ndarray
    y: np.ndarray
    elapsed: float = 0.0
    solver: str = ""
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.status == Status.CONVERGED

    @property
    def rnorm(self):
        return self.residual_history[-1]

    def __repr__(self):
        return (
            f"SolveReport(solver={self.solver!r}, status={self.status.value}, "
            f"iterations={self.iterations}, rnorm={self.rnorm:.3e})"
        )
