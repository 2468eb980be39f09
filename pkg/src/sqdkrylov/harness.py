"""Problem construction, experiment driver and CSV residual histories."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .baselines import minres_solve, symmlq_solve
from .operators import (
    CsrMatrix,
    IdentityOperator,
    ScaledIdentity,
    aslinearoperator,
    spd_inverse_from_dense,
)
from .problem import SolverOptions, SqdProblem, Status, stopping_check, stopping_threshold
from .tricg import tricg_solve
from .trimr import trimr_solve

__all__ = [
    "MatrixMarketError",
    "BuildError",
    "SOLVERS",
    "read_matrix_market",
    "write_matrix_market",
    "build_sqd_from_A",
    "generate_random_sqd",
    "stopping_check",
    "stopping_threshold",
    "SyntheticSpec",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "write_history_csv",
    "read_history_csv",
]

SOLVERS = {
    "tricg": tricg_solve,
    "trimr": trimr_solve,
    "symmlq": symmlq_solve,
    "minres": minres_solve,
}


class MatrixMarketError(ValueError):
    """Unsupported or malformed Matrix Market input."""


class BuildError(ValueError):
    """The requested right-hand side construction is degenerate."""


# ---------------------------------------------------------------- Matrix Market


def read_matrix_market(path):
    """Read a real coordinate Matrix Market file into a :class:`CsrMatrix`.

    Supports the ``general`` and ``symmetric`` qualifiers (the latter is
    expanded to full storage). Duplicate entries are summed.
    """
    path = Path(path)
    with path.open("r") as fh:
        header = fh.readline()
        tokens = header.strip().split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError(f"{path}: not a Matrix Market header: {header.strip()!r}")
        obj, fmt, field_, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix" or fmt != "coordinate":
            raise MatrixMarketError(f"{path}: only 'matrix coordinate' is supported, got {header.strip()!r}")
        if field_ not in ("real", "integer"):
            raise MatrixMarketError(f"{path}: unsupported field {field_!r} in header {header.strip()!r}")
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"{path}: unsupported qualifier {symmetry!r} in header {header.strip()!r}")

        lineno = 1
        size_line = None
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if stripped and not stripped.startswith("%"):
                size_line = stripped
                break
        if size_line is None:
            raise MatrixMarketError(f"{path}: missing size line")
        try:
            nrows, ncols, nnz = (int(t) for t in size_line.split())
        except ValueError:
            raise MatrixMarketError(f"{path}:{lineno}: malformed size line {size_line!r}") from None
        if nrows < 1 or ncols < 1 or nnz < 0:
            raise MatrixMarketError(f"{path}:{lineno}: invalid dimensions {size_line!r}")
        if symmetry == "symmetric" and nrows != ncols:
            raise MatrixMarketError(f"{path}:{lineno}: symmetric matrix must be square")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        count = 0
        for line in fh:
            lineno += 1
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            if count == nnz:
                raise MatrixMarketError(f"{path}:{lineno}: more entries than the declared {nnz}")
            parts = stripped.split()
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except (ValueError, IndexError):
                raise MatrixMarketError(f"{path}:{lineno}: malformed entry {stripped!r}") from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(
                    f"{path}:{lineno}: index ({i}, {j}) out of bounds for {nrows}x{ncols}"
                )
            rows[count], cols[count], vals[count] = i - 1, j - 1, v
            count += 1
        if count != nnz:
            raise MatrixMarketError(f"{path}: declared {nnz} entries, found {count}")

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols = np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]])
        vals = np.concatenate([vals, vals[off]])
    coo = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    mat = coo.tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return CsrMatrix.from_scipy(mat)


def write_matrix_market(path, A, comment=None):
    """Write ``A`` as ``matrix coordinate real general``."""
    coo = sp.coo_matrix(aslinearoperator(A).to_dense() if not isinstance(A, CsrMatrix) else A.to_scipy())
    lines = ["%%MatrixMarket matrix coordinate real general"]
    if comment:
        lines.append(f"% {comment}")
    lines.append(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}")
    lines += [f"{i + 1} {j + 1} {v!r}" for i, j, v in zip(coo.row, coo.col, coo.data.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- problem builders


def _spd_block(matrix, dim, shift):
    """``(inverse handle, forward handle)`` for ``matrix + shift*I`` (identity if ``None``)."""
    if matrix is None:
        if shift == 0.0:
            ident = IdentityOperator(dim)
            return ident, ident
        fwd = ScaledIdentity(dim, 1.0 + shift)
        return fwd.inverse(), fwd
    dense = np.asarray(matrix, dtype=float) + shift * np.eye(dim)
    inv = spd_inverse_from_dense(dense)
    return inv, inv.forward


def build_sqd_from_A(A, tau=1, nu=-1, M=None, N=None, nshift=0.0, name="problem"):
    """Block system whose exact solution is the vector of ones.

    ``M``/``N`` are optional dense SPD matrices (identity by default) and
    ``nshift`` adds ``nshift * I`` to ``N``. The right-hand side is
    ``b = tau*M 1 + A 1`` and ``c = A^T 1 + nu*N 1``.
    """
    A = aslinearoperator(A)
    m, n = A.shape
    if m == 0 or n == 0:
        raise BuildError("A must be nonempty")
    Minv, Mfwd = _spd_block(M, m, 0.0)
    Ninv, Nfwd = _spd_block(N, n, float(nshift))
    ones_m, ones_n = np.ones(m), np.ones(n)
    b = tau * Mfwd.apply(ones_m) + A.apply(ones_n)
    c = A.apply_adjoint(ones_m)
    if nu != 0:
        c = c + nu * Nfwd.apply(ones_n)
    for vec, label in ((b, "b"), (c, "c")):
        if not np.any(vec):
            raise BuildError(
                f"the ones-solution right-hand side gives {label} = 0; "
                "choose a different right-hand side"
            )
    return SqdProblem(A, b, c, Minv=Minv, Ninv=Ninv, tau=tau, nu=nu, M=Mfwd, N=Nfwd, name=name)


def _random_spd(rng, dim, rank=2):
    """Diagonal-plus-low-rank SPD matrix with eigenvalues in roughly ``[1, 4]``."""
    d = rng.uniform(1.0, 3.0, dim)
    U = rng.standard_normal((dim, min(rank, dim))) / np.sqrt(dim)
    return np.diag(d) + U @ U.T


def generate_random_sqd(m, n, density, seed, preconditioners=False, tau=1, nu=-1, nshift=0.0):
    """Seeded sparse random problem with the ones vector as solution.

    Nonzero entries of ``A`` are standard normal. With ``preconditioners``
    set, ``M`` and ``N`` are random diagonal-plus-low-rank SPD matrices;
    otherwise both are the identity.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be at least 1")
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    A = sp.random(m, n, density=density, format="csr", random_state=rng,
                  data_rvs=rng.standard_normal)
    A.sort_indices()
    M = N = None
    if preconditioners:
        M, N = _random_spd(rng, m), _random_spd(rng, n)
    name = f"random_{m}x{n}_d{density:g}_s{seed}"
    return build_sqd_from_A(CsrMatrix.from_scipy(A), tau, nu, M=M, N=N, nshift=nshift, name=name)


# ---------------------------------------------------------------- CSV


def write_history_csv(path, history):
    """Write ``iter,rnorm`` rows starting at ``k = 0`` with 17 significant digits."""
    lines = ["iter,rnorm"] + [f"{k},{float(r):.17g}" for k, r in enumerate(history)]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_history_csv(path):
    with open(path, "r") as fh:
        header = fh.readline().rstrip("\n")
        if header != "iter,rnorm":
            raise ValueError(f"{path}: unexpected header {header!r}")
        out = []
        for k, line in enumerate(fh):
            it, val = line.rstrip("\n").split(",")
            if int(it) != k:
                raise ValueError(f"{path}: iteration {it} out of order")
            out.append(float(val))
    return out


# ---------------------------------------------------------------- experiments


@dataclass
class SyntheticSpec:
    m: int
    n: int
    density: float
    seed: int = 0
    preconditioners: bool = False


@dataclass
class ExperimentConfig:
    """One problem source, a list of solvers and an output directory.

    ``source`` is a Matrix Market path, a :class:`SyntheticSpec` or an
    already built :class:`SqdProblem`.
    """

    source: object
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    options: SolverOptions = field(default_factory=SolverOptions)
    out_dir: str = "results"
    tau: int = 1
    nu: int = -1
    nshift: float = 0.0

    def __post_init__(self):
        if isinstance(self.solvers, str):
            self.solvers = [self.solvers]
        if not self.solvers:
            raise ValueError("at least one solver is required")
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown:
            raise ValueError(f"unknown solver(s) {unknown}; choose from {sorted(SOLVERS)}")

    def build_problem(self):
        src = self.source
        if isinstance(src, SqdProblem):
            return src
        if isinstance(src, SyntheticSpec):
            return generate_random_sqd(
                src.m, src.n, src.density, src.seed, src.preconditioners,
                tau=self.tau, nu=self.nu, nshift=self.nshift,
            )
        path = Path(src)
        A = read_matrix_market(path)
        return build_sqd_from_A(A, self.tau, self.nu, nshift=self.nshift, name=path.stem)


@dataclass
class ExperimentResult:
    problem: SqdProblem
    reports: dict
    failures: dict
    csv_paths: dict

    @property
    def all_converged(self):
        return not self.failures and all(r.converged for r in self.reports.values())

    @property
    def any_max_iterations(self):
        return any(r.status == Status.MAX_ITERATIONS for r in self.reports.values())

    def summary(self):
        parts = [f"problem={self.problem.name} m={self.problem.m} n={self.problem.n}"]
        for name, rep in self.reports.items():
            parts.append(f"{name}={rep.iterations}({rep.status.value})")
        for name, msg in self.failures.items():
            parts.append(f"{name}=failed({msg})")
        return " ".join(parts)


def run_experiment(config):
    """Run every configured solver and write one CSV per solver.

    A solver that raises is recorded in ``failures`` and the remaining
    solvers still run.
    """
    problem = config.build_problem()
    os.makedirs(config.out_dir, exist_ok=True)
    reports, failures, paths = {}, {}, {}
    for name in config.solvers:
        try:
            rep = SOLVERS[name](problem, config.options)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            failures[name] = f"{type(exc).__name__}: {exc}"
            continue
        reports[name] = rep
        path = Path(config.out_dir) / f"{problem.name}_{name}.csv"
        write_history_csv(path, rep.residual_history)
        paths[name] = path
    return ExperimentResult(problem, reports, failures, paths)
