"""TriMR: minimum-residual iterates on the block Krylov space of the SSY process.

The k-th iterate minimizes ``||S_{k+1,k} z - beta_1 e_1 - gamma_1 e_2||``,
which equals ``||r_k||_{H^{-1}}``. ``S_{k+1,k}`` is reduced to upper-triangular
form by four reflections per iteration; the resulting ``R_k`` has five
nonzero diagonals, named per row ``j`` as::

    R[j, j] = delta_j, R[j, j+1] = sigma_j, R[j, j+2] = eta_j,
    R[j, j+3] = lambda_j, R[j, j+4] = mu_j

Rows ``2k-1`` and ``2k`` reach their final value in two stages: the diagonal
part at iteration ``k`` (:func:`_rotate`) and the part in columns
``2k+1 .. 2k+4`` at iteration ``k+1`` (:func:`_finish`), once ``alpha_{k+1}``,
``beta_{k+2}`` and ``gamma_{k+2}`` are known. Bar-decorated scalars belong to
rows not yet reduced; hat, tilde and ring variants are intermediate values of
the current iteration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .problem import SolveReport, SolverOptions, Status, stopping_check
from .ssy import SsyProcess
from .tricg import _clamp, _record_completion

__all__ = [
    "GivensPair",
    "sym_givens",
    "TriMrWorkspace",
    "TriMrSolver",
    "trimr_solve",
    "trimr_qr_init",
    "trimr_qr_step",
    "trimr_pbar_update",
    "trimr_direction_update",
]


@dataclass(frozen=True)
class GivensPair:
    c: float
    s: float

    @property
    def matrix(self):
        """The symmetric reflection ``[[c, s], [s, -c]]``."""
        return np.array([[self.c, self.s], [self.s, -self.c]])


def sym_givens(a, b):
    """Reflection ``(c, s)`` and ``r >= 0`` with ``c a + s b = r`` and ``s a - c b = 0``."""
    if b == 0.0:
        if a == 0.0:
            return GivensPair(1.0, 0.0), 0.0
        return GivensPair(math.copysign(1.0, a), 0.0), abs(a)
    if a == 0.0:
        return GivensPair(0.0, math.copysign(1.0, b)), abs(b)
    # scaling keeps c and s accurate when both entries are subnormal
    scale = max(abs(a), abs(b))
    a_s, b_s = a / scale, b / scale
    h = math.hypot(a_s, b_s)
    return GivensPair(a_s / h, b_s / h), scale * h


class TriMrWorkspace:
    """Scalars and direction vectors of one TriMR solve.

    ``rows[j]`` holds the band ``[delta, sigma, eta, lambda, mu]`` of row
    ``j`` of ``R``; only the rows still needed by the direction recursion are
    kept. ``gx``/``gy`` hold the four most recent directions, oldest first.
    """

    def __init__(self, m, n, tau=1, nu=-1):
        self.tau, self.nu = tau, nu
        self.k = 0
        # bar row 2k-1: columns 2k-1 .. 2k+2
        self.dbar_odd = float(tau)
        self.sbar_odd = 0.0
        self.ebar_odd = 0.0
        self.lbar_odd = 0.0
        # bar row 2k: columns 2k-1 .. 2k+1
        self.theta_bar = 0.0
        self.dbar_even = float(nu)
        self.sbar_even = 0.0
        self.givens = ()
        self.rows = {}
        self.pibar_odd = 0.0
        self.pibar_even = 0.0
        self.pi_odd = self.pi_even = 0.0
        self.gx = [np.zeros(m) for _ in range(4)]
        self.gy = [np.zeros(n) for _ in range(4)]
        self.x = np.zeros(m)
        self.y = np.zeros(n)
        self.rnorm = None

    def r(self, j, offset):
        """Entry ``R[j, j + offset]``; zero for ``j <= 0``."""
        if j <= 0:
            return 0.0
        return self.rows[j][offset]

    def persistent_vectors(self):
        m = {"x": self.x}
        n = {"y": self.y}
        for i, (gx, gy) in enumerate(zip(self.gx, self.gy)):
            m[f"gx{i}"] = gx
            n[f"gy{i}"] = gy
        return {"m": m, "n": n}


def trimr_qr_init(ws, alpha1, beta2, gamma2):
    """Load rows 1-2 of ``S_{2,1}``-extended data into the bar scalars.

    Row 1 is ``[tau, alpha_1, 0, gamma_2]`` and row 2 is
    ``[alpha_1, nu, beta_2]`` over columns 1..4: the block above the diagonal
    is ``[[0, gamma_2], [beta_2, 0]]``.
    """
    ws.dbar_odd = float(ws.tau)
    ws.sbar_odd = alpha1
    ws.ebar_odd = 0.0
    ws.lbar_odd = gamma2
    ws.theta_bar = alpha1
    ws.dbar_even = float(ws.nu)
    ws.sbar_even = beta2


def _rotate(ws, beta_next, gamma_next, k):
    """Build the four reflections of step ``k`` from columns ``2k-1, 2k``.

    Row ``2k+2`` carries ``gamma_{k+1}`` in column ``2k-1`` and row ``2k+1``
    carries ``beta_{k+1}`` in column ``2k``.
    """
    g1, theta = sym_givens(ws.theta_bar, gamma_next)
    delta_tilde = g1.c * ws.dbar_even
    g_k = g1.s * ws.dbar_even

    g2, delta_odd = sym_givens(ws.dbar_odd, theta)
    sigma_odd = g2.c * ws.sbar_odd + g2.s * delta_tilde
    delta_hat = g2.s * ws.sbar_odd - g2.c * delta_tilde

    g3, delta_ring = sym_givens(delta_hat, g_k)
    g4, delta_even = sym_givens(delta_ring, beta_next)

    ws.givens = (g1, g2, g3, g4)
    ws.rows[2 * k - 1] = [delta_odd, sigma_odd, 0.0, 0.0, 0.0]
    ws.rows[2 * k] = [delta_even, 0.0, 0.0, 0.0, 0.0]
    ws.k = k


def _finish(ws, alpha_next, beta_nn, gamma_nn):
    """Apply step ``k``'s reflections to columns ``2k+1 .. 2k+4``.

    Finalizes the off-diagonal entries of rows ``2k-1`` and ``2k`` and leaves
    the bar scalars of rows ``2k+1``, ``2k+2`` for step ``k+1``.
    """
    k = ws.k
    tau, nu = ws.tau, ws.nu
    g1, g2, g3, g4 = ws.givens
    # reflection 1 on rows (2k, 2k+2); row 2k+2 is [alpha_{k+1}, nu, beta_{k+2}, 0]
    sigma_tilde = g1.c * ws.sbar_even + g1.s * alpha_next
    eta_tilde = g1.s * nu
    lambda_tilde = g1.s * beta_nn
    theta_tilde = g1.s * ws.sbar_even - g1.c * alpha_next
    delta_tilde_next = -g1.c * nu
    sigma_tilde_next = -g1.c * beta_nn
    # reflection 2 on rows (2k-1, 2k)
    eta_odd = g2.c * ws.ebar_odd + g2.s * sigma_tilde
    lambda_odd = g2.c * ws.lbar_odd + g2.s * eta_tilde
    mu_odd = g2.s * lambda_tilde
    sigma_hat = g2.s * ws.ebar_odd - g2.c * sigma_tilde
    eta_hat = g2.s * ws.lbar_odd - g2.c * eta_tilde
    lambda_hat = -g2.c * lambda_tilde
    # reflection 3 on rows (2k, 2k+2)
    sigma_ring = g3.c * sigma_hat + g3.s * theta_tilde
    eta_ring = g3.c * eta_hat + g3.s * delta_tilde_next
    lambda_ring = g3.c * lambda_hat + g3.s * sigma_tilde_next
    theta_bar = g3.s * sigma_hat - g3.c * theta_tilde
    dbar_even = g3.s * eta_hat - g3.c * delta_tilde_next
    sbar_even = g3.s * lambda_hat - g3.c * sigma_tilde_next
    # reflection 4 on rows (2k, 2k+1); row 2k+1 is [tau, alpha_{k+1}, 0, gamma_{k+2}]
    sigma_even = g4.c * sigma_ring + g4.s * tau
    eta_even = g4.c * eta_ring + g4.s * alpha_next
    lambda_even = g4.c * lambda_ring
    mu_even = g4.s * gamma_nn
    dbar_odd = g4.s * sigma_ring - g4.c * tau
    sbar_odd = g4.s * eta_ring - g4.c * alpha_next
    ebar_odd = g4.s * lambda_ring
    lbar_odd = -g4.c * gamma_nn

    ws.rows[2 * k - 1][2:] = [eta_odd, lambda_odd, mu_odd]
    ws.rows[2 * k][1:] = [sigma_even, eta_even, lambda_even, mu_even]
    ws.dbar_odd, ws.sbar_odd, ws.ebar_odd, ws.lbar_odd = dbar_odd, sbar_odd, ebar_odd, lbar_odd
    ws.theta_bar, ws.dbar_even, ws.sbar_even = theta_bar, dbar_even, sbar_even


def trimr_qr_step(ws, alpha_k1, beta_k1, gamma_k1, beta_k2, gamma_k2, k):
    """Complete step ``k`` of the QR factorization of ``S_{k+1,k}``.

    Computes the four reflections from ``beta_{k+1}``, ``gamma_{k+1}`` and
    applies them to the new columns using ``alpha_{k+1}``, ``beta_{k+2}``,
    ``gamma_{k+2}``. Returns the finalized rows ``2k-1`` and ``2k``.
    """
    _rotate(ws, beta_k1, gamma_k1, k)
    _finish(ws, alpha_k1, beta_k2, gamma_k2)
    return list(ws.rows[2 * k - 1]), list(ws.rows[2 * k])


def trimr_pbar_update(ws, k):
    """Apply step ``k``'s reflections to ``(pibar_{2k-1}, pibar_{2k}, 0, 0)``.

    Returns ``(pi_{2k-1}, pi_{2k}, pibar_{2k+1}, pibar_{2k+2})`` and leaves the
    last two as the bar entries of the next step.
    """
    g1, g2, g3, g4 = ws.givens
    pi_tilde = g1.c * ws.pibar_even
    pi_tilde_next = g1.s * ws.pibar_even
    pi_odd = g2.c * ws.pibar_odd + g2.s * pi_tilde
    pi_hat = g2.s * ws.pibar_odd - g2.c * pi_tilde
    pi_ring = g3.c * pi_hat + g3.s * pi_tilde_next
    pibar_next_even = g3.s * pi_hat - g3.c * pi_tilde_next
    pi_even = g4.c * pi_ring
    pibar_next_odd = g4.s * pi_ring
    ws.pi_odd, ws.pi_even = pi_odd, pi_even
    ws.pibar_odd, ws.pibar_even = pibar_next_odd, pibar_next_even
    return pi_odd, pi_even, pibar_next_odd, pibar_next_even


def trimr_direction_update(ws, v_k, u_k, k):
    """Solve ``R_k^T G_k^T = W_k^T`` for the two new columns and update the iterate.

    ``g_{2k-1}`` overwrites the slot of ``g_{2k-5}`` and ``g_{2k}`` the slot of
    ``g_{2k-4}``.
    """
    r = ws.r
    i = 2 * k - 1
    d_odd, d_even = r(i, 0), r(i + 1, 0)
    if d_odd == 0.0 or d_even == 0.0:
        raise ArithmeticError(f"zero diagonal in R at step {k}; S_(k+1,k) is rank deficient")
    # coefficients of g_{i-4}, g_{i-3}, g_{i-2}, g_{i-1} in row-i elimination
    co_odd = (r(i - 4, 4), r(i - 3, 3), r(i - 2, 2), r(i - 1, 1))
    co_even = (r(i - 3, 4), r(i - 2, 3), r(i - 1, 2))

    for g, w, rhs_on_odd in ((ws.gx, v_k, True), (ws.gy, u_k, False)):
        g5, g4, g3, g2 = g
        g5 *= -co_odd[0]
        g5 -= co_odd[1] * g4
        g5 -= co_odd[2] * g3
        g5 -= co_odd[3] * g2
        if rhs_on_odd:
            g5 += w
        g5 /= d_odd
        g_odd = g5
        g4 *= -co_even[0]
        g4 -= co_even[1] * g3
        g4 -= co_even[2] * g2
        g4 -= r(i, 1) * g_odd
        if not rhs_on_odd:
            g4 += w
        g4 /= d_even
        g[:] = [g3, g2, g_odd, g4]

    ws.x += ws.pi_odd * ws.gx[2]
    ws.x += ws.pi_even * ws.gx[3]
    ws.y += ws.pi_odd * ws.gy[2]
    ws.y += ws.pi_even * ws.gy[3]
    for j in [j for j in ws.rows if j < i - 4]:
        del ws.rows[j]
    return ws.x, ws.y


class TriMrSolver:
    """One TriMR solve on ``problem``; see :class:`~sqdkrylov.tricg.TriCgSolver`."""

    name = "trimr"

    def __init__(self, problem, options=None, callback=None):
        self.problem = problem
        self.options = options or SolverOptions()
        self.callback = callback
        self.process = SsyProcess(
            problem.A, problem.b, problem.c, problem.Minv, problem.Ninv,
            self.options.breakdown_tol_factor,
        )
        self.workspace = TriMrWorkspace(problem.m, problem.n, problem.tau, problem.nu)
        self.residual_history = []
        self.recurrence_history = []

    def vector_counts(self):
        ws = self.workspace.persistent_vectors()
        proc = self.process.persistent_vectors()
        m_vecs = list(ws["m"].values()) + [a for k, a in proc.items() if k.startswith("v")]
        n_vecs = list(ws["n"].values()) + [a for k, a in proc.items() if k.startswith("u")]
        return {"m": len({id(a) for a in m_vecs}), "n": len({id(a) for a in n_vecs})}

    def solve(self):
        start = time.perf_counter()
        prob, opts, proc, ws = self.problem, self.options, self.process, self.workspace
        beta1, gamma1 = proc.beta1, proc.gamma1
        ws.pibar_odd, ws.pibar_even = beta1, gamma1
        rnorm = math.hypot(beta1, gamma1)
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
            alpha, beta_next, gamma_next, terminated = proc.step()
            if k == 1:
                trimr_qr_init(ws, alpha, beta_next, gamma_next)
            else:
                _finish(ws, alpha, beta_next, gamma_next)
            _rotate(ws, beta_next, gamma_next, k)
            trimr_pbar_update(ws, k)
            trimr_direction_update(ws, proc.v_prev, proc.u_prev, k)
            rec = math.hypot(ws.pibar_odd, ws.pibar_even)
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

        The absent vector enters as zero with ``alpha_k = 0`` and zero
        couplings, so its column decouples from the others. In saddle-point
        mode that column would be entirely zero; a unit placeholder on its
        diagonal keeps ``R`` nonsingular without affecting the iterate.
        """
        if beta_next == 0.0 and gamma_next == 0.0:
            return False
        prob, proc, ws = self.problem, self.process, self.workspace
        v = proc.v if beta_next else np.zeros(prob.m)
        u = proc.u if gamma_next else np.zeros(prob.n)
        nu = ws.nu
        if gamma_next == 0.0 and nu == 0:
            ws.nu = 1
        _finish(ws, 0.0, 0.0, 0.0)
        ws.nu = nu
        _rotate(ws, 0.0, 0.0, k)
        trimr_pbar_update(ws, k)
        trimr_direction_update(ws, v, u, k)
        _record_completion(self, prob, ws, k)
        return True


def trimr_solve(problem, opts=None, callback=None):
    """Solve ``problem`` with TriMR and return a :class:`SolveReport`."""
    return TriMrSolver(problem, opts, callback).solve()
