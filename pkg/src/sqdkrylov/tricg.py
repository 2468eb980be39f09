"""TriCG: Galerkin iterates on the block Krylov space of the SSY process.

The k-th iterate is ``(x_k, y_k) = W_k z_k`` with ``S_k z_k = beta_1 e_1 +
gamma_1 e_2``. ``S_k`` is quasi-definite, so its ``L D L^T`` factorization
exists without pivoting and is updated with a constant number of scalars per
iteration. Directions ``G_k = W_k L_k^{-T}`` are updated in place, and the
residual norm in the ``H^{-1}`` norm comes from a two-term recurrence.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .problem import PivotError, SolveReport, SolverOptions, Status, stopping_check
from .ssy import SsyProcess

__all__ = [
    "TriCgWorkspace",
    "TriCgSolver",
    "tricg_solve",
    "ldlt_step",
    "tricg_pi_update",
    "tricg_direction_update",
    "tricg_residual_norm",
    "error_metric",
]

_EPS = np.finfo(float).eps


class TriCgWorkspace:
    """Scalars and direction vectors of one TriCG solve.

    Scalar naming follows the factorization: ``d_odd``/``d_even`` are
    ``d_{2k-1}``/``d_{2k}`` of the current step and ``d_prevprev``/``d_prev``
    the two preceding pivots. ``gx_odd``/``gx_even`` hold ``g^x_{2k-1}`` and
    ``g^x_{2k}`` (same for ``gy``); the older directions are overwritten in
    place, so only two vectors per block are kept.
    """

    def __init__(self, m, n, tau=1, nu=-1):
        self.tau, self.nu = tau, nu
        self.k = 0
        self.d_prevprev = self.d_prev = 0.0
        self.d_odd = self.d_even = 0.0
        self.delta = self.delta_prev = 0.0
        self.sigma = self.eta = self.lam = 0.0
        self.pi_prevprev = self.pi_prev = 0.0
        self.pi_odd = self.pi_even = 0.0
        self.pivot_bound = 1.0
        self.gx_odd = np.zeros(m)
        self.gx_even = np.zeros(m)
        self.gy_odd = np.zeros(n)
        self.gy_even = np.zeros(n)
        self.x = np.zeros(m)
        self.y = np.zeros(n)
        self.rnorm = None

    def persistent_vectors(self):
        return {
            "m": {"x": self.x, "gx_odd": self.gx_odd, "gx_even": self.gx_even},
            "n": {"y": self.y, "gy_odd": self.gy_odd, "gy_even": self.gy_even},
        }


def _check_pivot(d, bound, which):
    if not math.isfinite(d) or abs(d) < _EPS * bound:
        raise PivotError(f"factorization pivot underflow: |d_{which}| = {abs(d):.3e}")


def ldlt_step(ws, alpha_k, beta_k, gamma_k, k):
    """Extend ``S_{k-1} = L D L^T`` to ``S_k``.

    ``beta_k``/``gamma_k`` are ignored at ``k = 1``. Returns
    ``(d_{2k-1}, delta_k, d_{2k})``.
    """
    if k != ws.k + 1:
        raise ValueError(f"expected step {ws.k + 1}, got {k}")
    coupling = abs(beta_k) + abs(gamma_k) if k > 1 else 0.0
    ws.pivot_bound = max(ws.pivot_bound, abs(alpha_k) + coupling)
    # slide the pivot window: d_{2k-3}, d_{2k-2} <- d_{2(k-1)-1}, d_{2(k-1)}
    ws.d_prevprev, ws.d_prev = ws.d_odd, ws.d_even
    ws.delta_prev = ws.delta
    if k == 1:
        ws.sigma = ws.eta = ws.lam = 0.0
    else:
        ws.sigma = beta_k / ws.d_prev
        ws.eta = gamma_k / ws.d_prevprev
        ws.lam = -ws.eta * ws.delta_prev * ws.d_prevprev / ws.d_prev
    ws.d_odd = ws.tau - ws.sigma**2 * ws.d_prev
    _check_pivot(ws.d_odd, ws.pivot_bound, 2 * k - 1)
    ws.delta = (alpha_k - ws.lam * ws.sigma * ws.d_prev) / ws.d_odd
    ws.d_even = (
        ws.nu
        - ws.eta**2 * ws.d_prevprev
        - ws.lam**2 * ws.d_prev
        - ws.delta**2 * ws.d_odd
    )
    _check_pivot(ws.d_even, ws.pivot_bound, 2 * k)
    ws.k = k
    return ws.d_odd, ws.delta, ws.d_even


def tricg_pi_update(ws, beta1, gamma1, k):
    """Forward substitution for the two new entries of ``L_k D_k p_k = beta1 e1 + gamma1 e2``."""
    ws.pi_prevprev, ws.pi_prev = ws.pi_odd, ws.pi_even
    if k == 1:
        ws.pi_odd = beta1 / ws.d_odd
        ws.pi_even = (gamma1 - ws.delta * beta1) / ws.d_even
    else:
        ws.pi_odd = -ws.sigma * ws.d_prev * ws.pi_prev / ws.d_odd
        ws.pi_even = -(
            ws.delta * ws.d_odd * ws.pi_odd
            + ws.lam * ws.d_prev * ws.pi_prev
            + ws.eta * ws.d_prevprev * ws.pi_prevprev
        ) / ws.d_even
    return ws.pi_odd, ws.pi_even


def tricg_direction_update(ws, v_k, u_k, k):
    """Update the directions and the iterate.

    With ``g_{2k-1} = w - sigma g_{2k-2}`` substituted into the ``g_{2k}``
    recursion, the slot holding ``g_{2k-3}`` is overwritten by ``g_{2k}`` and
    the slot holding ``g_{2k-2}`` by ``g_{2k-1}``.
    """
    sigma, delta, lam, eta = ws.sigma, ws.delta, ws.lam, ws.eta
    mix = delta * sigma - lam

    gx_new_even, gx_new_odd = ws.gx_odd, ws.gx_even
    gx_new_even *= -eta
    gx_new_even += mix * gx_new_odd
    gx_new_even -= delta * v_k
    gx_new_odd *= -sigma
    gx_new_odd += v_k

    gy_new_even, gy_new_odd = ws.gy_odd, ws.gy_even
    gy_new_even *= -eta
    gy_new_even += mix * gy_new_odd
    gy_new_even += u_k
    gy_new_odd *= -sigma

    ws.gx_odd, ws.gx_even = gx_new_odd, gx_new_even
    ws.gy_odd, ws.gy_even = gy_new_odd, gy_new_even

    ws.x += ws.pi_odd * ws.gx_odd
    ws.x += ws.pi_even * ws.gx_even
    ws.y += ws.pi_odd * ws.gy_odd
    ws.y += ws.pi_even * ws.gy_even
    return ws.x, ws.y


def tricg_residual_norm(ws, beta_next, gamma_next, k, beta1=None, gamma1=None):
    """``||r_k||_{H^{-1}}`` from the recurrence; ``k = 0`` needs ``beta1``, ``gamma1``."""
    if k == 0:
        return math.hypot(beta1, gamma1)
    zeta_odd = ws.pi_odd - ws.delta * ws.pi_even
    return math.hypot(gamma_next * zeta_odd, beta_next * ws.pi_even)


def error_metric(problem, x, y, x_star, y_star):
    """Indefinite error ``e^T K e`` with ``e = (x* - x, y* - y)``."""
    ex = np.asarray(x_star, dtype=float) - x
    ey = np.asarray(y_star, dtype=float) - y
    top, bottom = problem.apply_K(ex, ey)
    return float(ex @ top + ey @ bottom)


def _clamp(proc):
    """``(beta_{k+1}, gamma_{k+1})`` with values at or below the breakdown tolerance set to 0."""
    beta = proc.beta if proc.beta > proc.beta_tol else 0.0
    gamma = proc.gamma if proc.gamma > proc.gamma_tol else 0.0
    return beta, gamma


def _record_completion(solver, prob, ws, k):
    """Append the residual after a completion step, explicitly when possible."""
    if prob.M is not None and (prob.N is not None or prob.nu == 0):
        rnorm = prob.residual_norm(ws.x, ws.y)
    else:
        rnorm = 0.0
    solver.recurrence_history.append(rnorm)
    solver.residual_history.append(rnorm)
    ws.rnorm = rnorm
    if solver.callback is not None:
        solver.callback(k, solver)


class TriCgSolver:
    """One TriCG solve on ``problem``.

    ``callback(k, solver)`` is called after every iteration with the
    workspace, the SSY process and the current residual available as
    attributes.
    """

    name = "tricg"

    def __init__(self, problem, options=None, callback=None):
        if not problem.quasi_definite:
            raise ValueError(
                f"TriCG needs a quasi-definite sign pattern (tau*nu = -1), "
                f"got tau={problem.tau}, nu={problem.nu}"
            )
        self.problem = problem
        self.options = options or SolverOptions()
        self.callback = callback
        self.process = SsyProcess(
            problem.A, problem.b, problem.c, problem.Minv, problem.Ninv,
            self.options.breakdown_tol_factor,
        )
        self.workspace = TriCgWorkspace(problem.m, problem.n, problem.tau, problem.nu)
        self.residual_history = []
        self.recurrence_history = []

    def vector_counts(self):
        """Number of distinct persistent m- and n-vectors (workspace + process)."""
        ws = self.workspace.persistent_vectors()
        proc = self.process.persistent_vectors()
        m_vecs = list(ws["m"].values()) + [a for k, a in proc.items() if k.startswith("v")]
        n_vecs = list(ws["n"].values()) + [a for k, a in proc.items() if k.startswith("u")]
        return {"m": len({id(a) for a in m_vecs}), "n": len({id(a) for a in n_vecs})}

    def solve(self):
        start = time.perf_counter()
        prob, opts, proc, ws = self.problem, self.options, self.process, self.workspace
        beta1, gamma1 = proc.beta1, proc.gamma1
        rnorm = tricg_residual_norm(ws, None, None, 0, beta1, gamma1)
        self.residual_history = [rnorm]
        self.recurrence_history = [rnorm]
        ws.rnorm = rnorm
        maxit = opts.maxit_for(prob)
        status = Status.MAX_ITERATIONS
        k = 0
        if stopping_check(rnorm, (beta1, gamma1), opts):
            status = Status.CONVERGED
        while status == Status.MAX_ITERATIONS and k < maxit:
            k += 1
            beta_k, gamma_k = proc.beta, proc.gamma
            alpha, beta_next, gamma_next, terminated = proc.step()
            ldlt_step(ws, alpha, beta_k, gamma_k, k)
            tricg_pi_update(ws, beta1, gamma1, k)
            tricg_direction_update(ws, proc.v_prev, proc.u_prev, k)
            rec = tricg_residual_norm(ws, beta_next, gamma_next, k)
            self.recurrence_history.append(rec)
            rnorm = prob.residual_norm(ws.x, ws.y) if opts.explicit_residual else rec
            ws.rnorm = rnorm
            self.residual_history.append(rnorm)
            if self.callback is not None:
                self.callback(k, self)
            if stopping_check(rnorm, (beta1, gamma1), opts):
                status = Status.CONVERGED
            elif terminated:
                status = Status.BREAKDOWN_TERMINATED
                if self._completion_step(k + 1, *_clamp(proc)):
                    k += 1
                    if stopping_check(self.residual_history[-1], (beta1, gamma1), opts):
                        status = Status.CONVERGED
        return SolveReport(
            status=status,
            iterations=k,
            residual_history=list(self.residual_history),
            x=ws.x.copy(),
            y=ws.y.copy(),
            elapsed=time.perf_counter() - start,
            solver=self.name,
        )

    def _completion_step(self, k, beta_next, gamma_next):
        """Extend the space by the one basis vector that survived termination.

        The absent vector enters as zero with ``alpha_k = 0`` so its column of
        ``S_k`` decouples. Returns False when both sides terminated.
        """
        if beta_next == 0.0 and gamma_next == 0.0:
            return False
        prob, proc, ws = self.problem, self.process, self.workspace
        v = proc.v if beta_next else np.zeros(prob.m)
        u = proc.u if gamma_next else np.zeros(prob.n)
        ldlt_step(ws, 0.0, beta_next, gamma_next, k)
        tricg_pi_update(ws, proc.beta1, proc.gamma1, k)
        tricg_direction_update(ws, v, u, k)
        _record_completion(self, prob, ws, k)
        return True


def tricg_solve(problem, opts=None, callback=None):
    """Solve ``problem`` with TriCG and return a :class:`SolveReport`."""
    return TriCgSolver(problem, opts, callback).solve()
