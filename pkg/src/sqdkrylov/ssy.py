"""Orthogonal tridiagonalization (SSY) process in elliptic norms.

Given ``A`` (m x n), starting vectors ``b``, ``c`` and the inverse actions
``M^{-1}``, ``N^{-1}``, the process generates ``V_k`` (M-orthonormal),
``U_k`` (N-orthonormal) and the scalars of the tridiagonal ``T_k``::

    A U_k   = M V_{k+1} T_{k+1,k}
    A^T V_k = N U_{k+1} T_{k,k+1}^T

Products with ``M`` and ``N`` are never formed: the unpreconditioned vectors
``vbar = M v`` and ``ubar = N u`` are carried alongside ``v`` and ``u``.

The module also holds two dense references used as test oracles: the
assembler for the block-tridiagonal projection ``S_{k+1,k}`` and a
preconditioned block-Lanczos process with block size 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_sign, check_vector
from .operators import IdentityOperator, NotSPDError, aslinearoperator
from .problem import ZeroInitialVectorError

__all__ = [
    "SsyCoefficients",
    "SsyProcess",
    "ssy_init",
    "ssy_step",
    "run_ssy",
    "assemble_S",
    "BlockLanczosBasis",
    "block_lanczos_reference",
]

_SQRT_EPS = math.sqrt(np.finfo(float).eps)


@dataclass
class SsyCoefficients:
    """``alphas[j-1] = alpha_j``, ``betas[j-1] = beta_j`` (``beta_1`` first)."""

    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    gammas: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.alphas)


def _is_identity(op):
    return getattr(op, "is_identity", False)


def _normalize(vbar, v, tol, block):
    """Return ``sqrt(vbar^T v)``; scale both in place unless it is below ``tol``."""
    s = float(vbar @ v)
    if s < 0.0:
        if -s > tol * tol:
            raise NotSPDError(f"preconditioner not SPD: negative inner product in the {block} block")
        s = 0.0
    nrm = math.sqrt(s)
    if nrm > tol:
        vbar /= nrm
        if v is not vbar:
            v /= nrm
    return nrm


class SsyProcess:
    """Streaming SSY process keeping two generations of basis vectors.

    After construction the state holds ``v_1, u_1`` in ``v``/``u``. Each call
    to :meth:`step` performs one iteration ``k`` and rotates the buffers, so
    that afterwards ``v_prev``/``u_prev`` hold ``v_k``/``u_k`` and
    ``v``/``u`` hold ``v_{k+1}``/``u_{k+1}``.

    With identity preconditioners ``vbar`` aliases ``v`` (and ``ubar``
    aliases ``u``), so the process owns two m-vectors and two n-vectors;
    each non-identity preconditioner adds two more vectors of its size.
    """

    def __init__(self, A, b, c, Minv=None, Ninv=None, breakdown_tol_factor=_SQRT_EPS):
        self.A = aslinearoperator(A)
        m, n = self.A.shape
        Minv = IdentityOperator(m) if Minv is None else Minv
        Ninv = IdentityOperator(n) if Ninv is None else Ninv
        self.Minv = aslinearoperator(Minv, symmetric=True)
        self.Ninv = aslinearoperator(Ninv, symmetric=True)
        b = check_vector(b, m, "b")
        c = check_vector(c, n, "c")
        if not np.any(b):
            raise ZeroInitialVectorError("zero initial vector: b = 0, the SSY process cannot start")
        if not np.any(c):
            raise ZeroInitialVectorError("zero initial vector: c = 0, the SSY process cannot start")
        self.breakdown_tol_factor = float(breakdown_tol_factor)

        self.vbar, self.v = self._start(b, self.Minv, "M")
        self.ubar, self.u = self._start(c, self.Ninv, "N")
        self.beta1 = self.beta = _normalize(self.vbar, self.v, 0.0, "M")
        self.gamma1 = self.gamma = _normalize(self.ubar, self.u, 0.0, "N")
        if self.beta1 == 0.0 or self.gamma1 == 0.0:
            raise NotSPDError("preconditioner not SPD: zero initial elliptic norm")
        self.beta_tol = self.breakdown_tol_factor * self.beta1
        self.gamma_tol = self.breakdown_tol_factor * self.gamma1

        self.vbar_prev = np.zeros(m)
        self.v_prev = self.vbar_prev if _is_identity(self.Minv) else np.zeros(m)
        self.ubar_prev = np.zeros(n)
        self.u_prev = self.ubar_prev if _is_identity(self.Ninv) else np.zeros(n)

        self.k = 1
        self.alpha = None
        self.terminated = False
        self.coefficients = SsyCoefficients([], [self.beta1], [self.gamma1])

    @staticmethod
    def _start(rhs, inv, block):
        bar = rhs.copy()
        if _is_identity(inv):
            return bar, bar
        vec = inv.apply(bar)
        if not np.all(np.isfinite(vec)):
            raise NotSPDError(f"preconditioner not SPD: non-finite {block}^-1 action")
        return bar, vec

    def step(self):
        """Run iteration ``k``; return ``(alpha_k, beta_{k+1}, gamma_{k+1}, terminated)``."""
        if self.terminated:
            raise RuntimeError("the SSY process has terminated")
        A = self.A
        # q = A u_k - gamma_k M v_{k-1}, built in the buffer of vbar_{k-1}
        q = A.apply_acc(self.u, out=self.vbar_prev, scale=-self.gamma)
        alpha = float(self.v @ q)
        # p = A^T v_k - beta_k N u_{k-1}
        p = A.apply_adjoint_acc(self.v, out=self.ubar_prev, scale=-self.beta)
        q -= alpha * self.vbar
        p -= alpha * self.ubar

        if _is_identity(self.Minv):
            v_next = q
        else:
            v_next = self.v_prev
            v_next[:] = self.Minv.apply(q)
        if _is_identity(self.Ninv):
            u_next = p
        else:
            u_next = self.u_prev
            u_next[:] = self.Ninv.apply(p)

        beta_next = _normalize(q, v_next, self.beta_tol, "M")
        gamma_next = _normalize(p, u_next, self.gamma_tol, "N")

        self.v_prev, self.v = self.v, v_next
        self.vbar_prev, self.vbar = self.vbar, q
        self.u_prev, self.u = self.u, u_next
        self.ubar_prev, self.ubar = self.ubar, p

        self.alpha = alpha
        self.beta, self.gamma = beta_next, gamma_next
        self.coefficients.alphas.append(alpha)
        self.coefficients.betas.append(beta_next)
        self.coefficients.gammas.append(gamma_next)
        self.k += 1
        self.terminated = beta_next <= self.beta_tol or gamma_next <= self.gamma_tol
        return alpha, beta_next, gamma_next, self.terminated

    def persistent_vectors(self):
        """Distinct vector buffers owned by the process, keyed by name."""
        named = {
            "v_prev": self.v_prev,
            "v": self.v,
            "vbar_prev": self.vbar_prev,
            "vbar": self.vbar,
            "u_prev": self.u_prev,
            "u": self.u,
            "ubar_prev": self.ubar_prev,
            "ubar": self.ubar,
        }
        seen, out = set(), {}
        for name, arr in named.items():
            if id(arr) not in seen:
                seen.add(id(arr))
                out[name] = arr
        return out


def ssy_init(problem, breakdown_tol_factor=_SQRT_EPS):
    """Start the process on ``problem``; return ``(state, beta1, gamma1)``."""
    state = SsyProcess(problem.A, problem.b, problem.c, problem.Minv, problem.Ninv, breakdown_tol_factor)
    return state, state.beta1, state.gamma1


def ssy_step(state):
    """Advance ``state`` by one iteration; see :meth:`SsyProcess.step`."""
    return state.step()


def run_ssy(A, b, c, Minv=None, Ninv=None, k=1):
    """Run ``k`` steps and return ``(V, U, coefficients)`` with ``k+1`` columns each.

    Stops early on termination; columns past the termination index are not
    produced. Intended for tests and small diagnostics.
    """
    proc = SsyProcess(A, b, c, Minv, Ninv)
    vs, us = [proc.v.copy()], [proc.u.copy()]
    for _ in range(k):
        _, _, _, done = proc.step()
        vs.append(proc.v.copy())
        us.append(proc.u.copy())
        if done:
            break
    return np.column_stack(vs), np.column_stack(us), proc.coefficients


def assemble_S(coeffs, tau=1, nu=-1, rows=None, cols=None):
    """Dense block-tridiagonal projection built from SSY scalars.

    Diagonal blocks are ``[[tau, alpha_j], [alpha_j, nu]]``, the block above
    the diagonal in column block ``j`` is ``[[0, gamma_j], [beta_j, 0]]`` and
    its transpose sits below. ``rows`` is ``2k`` (square ``S_k``) or ``2k+2``
    (``S_{k+1,k}``); ``cols`` must be even.
    """
    tau = check_sign(tau, {1, -1}, "tau")
    nu = check_sign(nu, {1, 0, -1}, "nu")
    if cols is None:
        cols = 2 * coeffs.steps
    if cols < 2 or cols % 2:
        raise ValueError(f"cols must be a positive even number, got {cols}")
    k = cols // 2
    if rows is None:
        rows = cols
    if rows not in (2 * k, 2 * k + 2):
        raise ValueError(f"rows must be {2 * k} or {2 * k + 2}, got {rows}")
    need_bg = k + 1 if rows == 2 * k + 2 else k
    if len(coeffs.alphas) < k or len(coeffs.betas) < need_bg or len(coeffs.gammas) < need_bg:
        raise ValueError(f"not enough coefficients for k={k} block columns and {rows} rows")

    S = np.zeros((rows, cols))
    for j in range(1, k + 1):
        i = 2 * j - 2  # 0-based index of row/column 2j-1
        a = coeffs.alphas[j - 1]
        S[i, i] = tau
        S[i, i + 1] = S[i + 1, i] = a
        S[i + 1, i + 1] = nu
        if j >= 2:
            beta, gamma = coeffs.betas[j - 1], coeffs.gammas[j - 1]
            S[i - 2, i + 1] = S[i + 1, i - 2] = gamma
            S[i - 1, i] = S[i, i - 1] = beta
    if rows == 2 * k + 2:
        S[2 * k, 2 * k - 1] = coeffs.betas[k]
        S[2 * k + 1, 2 * k - 2] = coeffs.gammas[k]
    return S


@dataclass
class BlockLanczosBasis:
    """Output of :func:`block_lanczos_reference`.

    ``W`` holds ``w_1 .. w_{j+1}`` as paired columns, ``omegas[i]`` is
    ``Omega_{i+1}`` and ``psis[i]`` is ``Psi_{i+1}`` (``psis[0]`` from the
    initial block). ``status`` is ``"ok"`` or ``"block_breakdown"``.
    """

    W: np.ndarray
    omegas: list
    psis: list
    status: str = "ok"

    @property
    def steps(self):
        return len(self.omegas)

    def block(self, j):
        """Columns of ``w_j`` (1-based)."""
        return self.W[:, 2 * j - 2 : 2 * j]

    def ssy_ordered(self):
        """Swap the two columns of every even-indexed block.

        The positive-diagonal QR convention yields ``w_j = [[0, v_j], [u_j, 0]]``
        for even ``j``; swapping restores ``[[v_j, 0], [0, u_j]]`` and the
        anti-diagonal ``Psi_j`` of the SSY convention.
        """
        swap = np.array([[0.0, 1.0], [1.0, 0.0]])
        nb = self.W.shape[1] // 2
        perms = [swap if j % 2 == 0 else np.eye(2) for j in range(1, nb + 1)]
        W = np.hstack([self.block(j) @ perms[j - 1] for j in range(1, nb + 1)])
        omegas = [perms[j] @ om @ perms[j] for j, om in enumerate(self.omegas)]
        psis = [self.psis[0] @ perms[0]]
        for j in range(2, len(self.psis) + 1):
            psis.append(perms[j - 2] @ self.psis[j - 1] @ perms[j - 1])
        return BlockLanczosBasis(W, omegas, psis, self.status)


def _h_qr(Z, R, tol):
    """H-orthonormalize the two columns of ``Z`` with ``R = H Z``.

    Returns ``(w, Hw, upper)`` with ``w @ upper = Z``, ``w^T H w = I`` and a
    positive-diagonal upper-triangular ``upper``, or ``None`` when a diagonal
    entry falls below ``tol``.
    """
    z1, z2 = Z[:, 0].copy(), Z[:, 1].copy()
    r1, r2 = R[:, 0].copy(), R[:, 1].copy()
    s11 = float(z1 @ r1)
    if s11 <= tol * tol:
        return None
    r11 = math.sqrt(s11)
    z1 /= r11
    r1 /= r11
    r12 = float(z1 @ r2)
    z2 -= r12 * z1
    r2 -= r12 * r1
    s22 = float(z2 @ r2)
    if s22 <= tol * tol:
        return None
    r22 = math.sqrt(s22)
    z2 /= r22
    r2 /= r22
    upper = np.array([[r11, r12], [0.0, r22]])
    return np.column_stack([z1, z2]), np.column_stack([r1, r2]), upper


def block_lanczos_reference(K, B, Hinv, k, tol=1e-10):
    """Dense preconditioned block-Lanczos process with block size 2.

    Parameters
    ----------
    K : (N, N) array
        Symmetric matrix.
    B : (N, 2) array
        Initial block, factored as ``H w_1 Psi_1^T = B``.
    Hinv : operator or (N, N) array
        Inverse preconditioner action.
    k : int
        Number of steps; at most ``k + 1`` blocks are returned.
    tol : float
        Relative threshold on the QR diagonal for declaring block breakdown.

    Notes
    -----
    Each residual block is H-orthonormalized by Gram-Schmidt with a positive
    diagonal. Only ``H^{-1}`` is applied: ``H w`` is carried alongside ``w``.
    Test-scale only.
    """
    K = np.asarray(K, dtype=float)
    B = np.asarray(B, dtype=float)
    Hinv = aslinearoperator(Hinv, symmetric=True)

    def hsolve(block):
        return np.column_stack([Hinv.apply(block[:, i]) for i in range(block.shape[1])])

    scale = max(np.abs(K).max(), 1.0)
    first = _h_qr(hsolve(B), B, 0.0)
    if first is None:
        raise ValueError("initial block is rank deficient")
    w, Hw, upper = first
    ws, omegas, psis = [w], [], [upper.T]
    w_prev, Hw_prev = np.zeros_like(w), np.zeros_like(w)
    psi = np.zeros((2, 2))
    status = "ok"
    for _ in range(k):
        Kw = K @ w
        omega = w.T @ Kw
        omega = 0.5 * (omega + omega.T)
        omegas.append(omega)
        R = Kw - Hw @ omega - Hw_prev @ psi
        nxt = _h_qr(hsolve(R), R, tol * scale)
        if nxt is None:
            status = "block_breakdown"
            break
        w_prev, Hw_prev = w, Hw
        w, Hw, upper = nxt
        psi = upper.T
        ws.append(w)
        psis.append(psi)
    return BlockLanczosBasis(np.hstack(ws), omegas, psis, status)
