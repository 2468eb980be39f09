"""Command-line driver: run solvers on one problem and write residual CSVs.

Exit codes: 0 when every solver converged, 2 when any solver stopped
without converging, 3 on input or format errors.
"""

from __future__ import annotations

import argparse
import sys

from .harness import (
    SOLVERS,
    BuildError,
    ExperimentConfig,
    MatrixMarketError,
    SyntheticSpec,
    run_experiment,
)
from .operators import NotSPDError
from .problem import SolverOptions, ZeroInitialVectorError

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT_ERROR = 3


def build_parser():
    p = argparse.ArgumentParser(
        prog="sqdkrylov",
        description="Solve a block system with TriCG, TriMR, SYMMLQ or MINRES "
        "and write one iter,rnorm CSV per solver.",
    )
    p.add_argument("--solver", choices=[*SOLVERS, "all"], default="all")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH", help="Matrix Market file for A")
    src.add_argument("--synthetic", nargs=3, metavar=("M", "N", "DENSITY"),
                     help="random sparse A of size M x N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--maxit", type=int, default=None, help="default 2(m+n)")
    p.add_argument("--tau", type=int, choices=[1, -1], default=1)
    p.add_argument("--nu", type=int, choices=[1, 0, -1], default=-1)
    p.add_argument("--nshift", type=float, default=0.0, help="add NSHIFT*I to N")
    p.add_argument("--explicit-residual", action="store_true")
    p.add_argument("--out", metavar="DIR", default="results")
    return p


def _synthetic(values):
    try:
        m, n, density = int(values[0]), int(values[1]), float(values[2])
    except ValueError:
        raise ValueError(f"--synthetic expects integers M N and a float DENSITY, got {values}") from None
    return m, n, density


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    solvers = list(SOLVERS) if args.solver == "all" else [args.solver]
    try:
        if args.seed < 0:
            raise ValueError("--seed must be nonnegative")
        options = SolverOptions(
            atol=args.atol, rtol=args.rtol, max_iterations=args.maxit,
            explicit_residual=args.explicit_residual,
        )
        if args.matrix is not None:
            source = args.matrix
        else:
            m, n, density = _synthetic(args.synthetic)
            source = SyntheticSpec(m, n, density, args.seed)
        config = ExperimentConfig(
            source=source, solvers=solvers, options=options, out_dir=args.out,
            tau=args.tau, nu=args.nu, nshift=args.nshift,
        )
        result = run_experiment(config)
    except (OSError, MatrixMarketError, BuildError, ZeroInitialVectorError, NotSPDError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    print(result.summary())
    for name, msg in result.failures.items():
        print(f"error: {name}: {msg}", file=sys.stderr)
    return EXIT_OK if result.all_converged else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
