"""Block Krylov solvers for symmetric quasi-definite and saddle-point systems."""

from .baselines import FullSystemView, minres_solve, symmlq_solve
from .estimators import MINRES, SYMMLQ, TriCG, TriMR
from .harness import (
    ExperimentConfig,
    SyntheticSpec,
    build_sqd_from_A,
    generate_random_sqd,
    read_matrix_market,
    run_experiment,
)
from .operators import (
    CsrMatrix,
    DenseOperator,
    IdentityOperator,
    NotSPDError,
    OperatorHandle,
    ScaledIdentity,
    SpdInverse,
    spd_inverse_from_dense,
)
from .problem import SolveReport, SolverOptions, SqdProblem, Status, stopping_check
from .ssy import SsyProcess, assemble_S, run_ssy
from .tricg import TriCgSolver, tricg_solve
from .trimr import TriMrSolver, sym_givens, trimr_solve

__version__ = "0.1.0"
