"""MINRES and SYMMLQ on the full ``(m+n)``-dimensional system.

Both run the preconditioned Lanczos process on ``K`` with preconditioner
``H = blkdiag(M, N)``, so their residual histories are in the same
``H^{-1}`` norm as TriCG and TriMR. SYMMLQ reports the residual of the
conjugate-gradient point, which is recovered from its own quantities
whenever that point exists.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .problem import SolveReport, SolverOptions, Status, stopping_check
from .operators import NotSPDError

__all__ = ["FullSystemView", "PreconditionedLanczos", "minres_solve", "symmlq_solve"]

_EPS = np.finfo(float).eps


class FullSystemView:
    """``K``, ``H^{-1}`` and the right-hand side of a problem as stacked vectors."""

    def __init__(self, problem):
        problem._require_forward()
        self.problem = problem
        self.m, self.n = problem.m, problem.n
        self.size = self.m + self.n
        self.rhs = problem.rhs

    def split(self, z):
        return z[: self.m], z[self.m:]

    def apply_K(self, z):
        top, bottom = self.problem.apply_K(*self.split(z))
        return np.concatenate([top, bottom])

    def apply_Hinv(self, r):
        top, bottom = self.split(r)
        return np.concatenate([self.problem.Minv.apply(top), self.problem.Ninv.apply(bottom)])

    def hinv_norm(self, r):
        return self.problem.hinv_norm(*self.split(r))

    def residual_norm(self, z):
        return self.hinv_norm(self.rhs - self.apply_K(z))


class PreconditionedLanczos:
    """Lanczos on ``H^{-1} K`` producing ``H``-orthonormal vectors.

    Keeps ``v_k`` together with ``H v_k`` so ``H`` itself is never applied.
    After construction ``v`` is ``v_1``; :meth:`step` returns
    ``(v_k, alpha_k, beta_{k+1})`` and advances to ``v_{k+1}``.
    """

    def __init__(self, system, breakdown_tol_factor=math.sqrt(_EPS)):
        self.system = system
        r = system.rhs.copy()
        z = system.apply_Hinv(r)
        self.beta1 = self.beta = self._norm(r, z)
        if self.beta1 == 0.0:
            raise ValueError("zero right-hand side")
        self.v, self.hv = z / self.beta1, r / self.beta1
        self.hv_prev = np.zeros_like(r)
        self.tol = breakdown_tol_factor * self.beta1

    @staticmethod
    def _norm(r, z):
        s = float(r @ z)
        if s < 0.0:
            raise NotSPDError("preconditioner not SPD: negative inner product")
        return math.sqrt(s)

    def step(self):
        v_k = self.v
        p = self.system.apply_K(v_k)
        alpha = float(v_k @ p)
        p -= alpha * self.hv
        p -= self.beta * self.hv_prev
        z = self.system.apply_Hinv(p)
        beta_next = self._norm(p, z)
        self.hv_prev = self.hv
        if beta_next > self.tol:
            self.v, self.hv = z / beta_next, p / beta_next
        else:
            self.v, self.hv = np.zeros_like(z), np.zeros_like(p)
        self.beta = beta_next
        return v_k, alpha, beta_next

    @property
    def terminated(self):
        return self.beta <= self.tol


def _as_view(obj):
    return obj if isinstance(obj, FullSystemView) else FullSystemView(obj)


def _report(system, status, k, history, z, start, name, **extras):
    x, y = system.split(z)
    return SolveReport(
        status=status,
        iterations=k,
        residual_history=history,
        x=x.copy(),
        y=y.copy(),
        elapsed=time.perf_counter() - start,
        solver=name,
        extras=extras,
    )


def minres_solve(problem, opts=None, callback=None):
    """Preconditioned MINRES; the history is ``||r_k||_{H^{-1}}`` from the recurrence.

    ``problem`` is an :class:`SqdProblem` or a :class:`FullSystemView`;
    ``callback(k, z, rnorm)`` receives the stacked iterate.
    """
    start = time.perf_counter()
    opts = opts or SolverOptions()
    system = _as_view(problem)
    lanczos = PreconditionedLanczos(system, opts.breakdown_tol_factor)
    beta1 = lanczos.beta1
    z = np.zeros(system.size)
    w = np.zeros(system.size)
    w_prev = np.zeros(system.size)
    cs, sn = -1.0, 0.0
    dbar = epsln = 0.0
    phibar = beta1
    history = [beta1]
    status = Status.MAX_ITERATIONS
    maxit = opts.maxit_for(system.problem)
    k = 0
    if stopping_check(beta1, (beta1, 0.0), opts):
        status = Status.CONVERGED
    while status == Status.MAX_ITERATIONS and k < maxit:
        k += 1
        v, alpha, beta_next = lanczos.step()
        # previous rotation applied to the new column, then a new rotation
        oldeps = epsln
        delta = cs * dbar + sn * alpha
        gbar = sn * dbar - cs * alpha
        epsln = sn * beta_next
        dbar = -cs * beta_next
        gamma = math.hypot(gbar, beta_next)
        if gamma == 0.0:
            status = Status.ERROR
            break
        cs, sn = gbar / gamma, beta_next / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w_prev, w = w, (v - oldeps * w_prev - delta * w) / gamma
        z += phi * w
        rnorm = system.residual_norm(z) if opts.explicit_residual else abs(phibar)
        history.append(rnorm)
        if callback is not None:
            callback(k, z, rnorm)
        if stopping_check(rnorm, (beta1, 0.0), opts):
            status = Status.CONVERGED
            break
        if lanczos.terminated:
            status = Status.BREAKDOWN_TERMINATED
            break
    return _report(system, status, k, history, z, start, "minres")


def symmlq_solve(problem, opts=None, callback=None):
    """Preconditioned SYMMLQ with transfer to the conjugate-gradient point.

    The history holds ``||r^C_k||_{H^{-1}}`` of the CG point. When ``T_k`` is
    numerically singular that point does not exist; the entry is then the
    explicit residual of the SYMMLQ point and ``extras["cg_missing"]`` lists
    the iterations affected. The returned iterate is the CG point at exit,
    or the SYMMLQ point if the former does not exist.
    """
    start = time.perf_counter()
    opts = opts or SolverOptions()
    system = _as_view(problem)
    lanczos = PreconditionedLanczos(system, opts.breakdown_tol_factor)
    beta1 = lanczos.beta1
    size = system.size
    x_lq = np.zeros(size)
    wbar = lanczos.v.copy()
    c_prev, s_prev = -1.0, 0.0  # rotation k-1; (c_0, s_0) = (-1, 0)
    dbar = 0.0  # delta-bar of the current row
    eps_k = 0.0  # epsilon of the current row
    zeta_1 = zeta_2 = 0.0  # zeta_{k-1}, zeta_{k-2}
    history = [beta1]
    cg_missing = []
    status = Status.MAX_ITERATIONS
    maxit = opts.maxit_for(system.problem)
    z_out = np.zeros(size)
    scale = 0.0
    k = 0
    if stopping_check(beta1, (beta1, 0.0), opts):
        status = Status.CONVERGED
    while status == Status.MAX_ITERATIONS and k < maxit:
        k += 1
        beta_k = lanczos.beta
        v, alpha, beta_next = lanczos.step()
        # running estimate of ||T_k|| for the singularity test on gamma-bar
        scale = max(scale, abs(alpha) + beta_k + beta_next)
        if k == 1:
            delta_k, gbar = 0.0, alpha
        else:
            delta_k = c_prev * dbar + s_prev * alpha
            gbar = s_prev * dbar - c_prev * alpha
        eps_next = s_prev * beta_next
        dbar_next = -c_prev * beta_next
        rhs_k = (beta1 if k == 1 else 0.0) - delta_k * zeta_1 - eps_k * zeta_2

        cg_ok = abs(gbar) > math.sqrt(_EPS) * max(scale, _EPS)
        if cg_ok:
            zeta_bar = rhs_k / gbar
            eta = s_prev * zeta_1 - c_prev * zeta_bar
            rnorm_cg = beta_next * abs(eta)
            x_cg = x_lq + zeta_bar * wbar

        gamma = math.hypot(gbar, beta_next)
        if gamma == 0.0:
            status = Status.ERROR
            break
        c_k, s_k = gbar / gamma, beta_next / gamma
        zeta_k = rhs_k / gamma
        v_next = lanczos.v
        w_k = c_k * wbar + s_k * v_next
        wbar = s_k * wbar - c_k * v_next
        x_lq_prev = x_lq
        x_lq = x_lq + zeta_k * w_k

        if cg_ok:
            z_out = x_cg
            rnorm = system.residual_norm(x_cg) if opts.explicit_residual else rnorm_cg
        else:
            cg_missing.append(k)
            z_out = x_lq_prev
            rnorm = system.residual_norm(x_lq_prev)
        history.append(rnorm)
        if callback is not None:
            callback(k, z_out, rnorm)

        c_prev, s_prev = c_k, s_k
        dbar, eps_k = dbar_next, eps_next
        zeta_2, zeta_1 = zeta_1, zeta_k

        if stopping_check(rnorm, (beta1, 0.0), opts):
            status = Status.CONVERGED
            break
        if lanczos.terminated:
            status = Status.BREAKDOWN_TERMINATED
            break
    return _report(system, status, k, history, z_out, start, "symmlq", cg_missing=cg_missing)
