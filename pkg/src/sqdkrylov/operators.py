"""Linear operators used by the solvers.

Every operator exposes a forward action ``apply``, an adjoint action
``apply_adjoint`` and the two in-place accumulate forms
``y <- A x + scale * y`` / ``y <- A^T x + scale * y`` that the solvers use to
avoid persistent product buffers.

Preconditioners are passed around as *inverse* operators (``M^{-1}``,
``N^{-1}``); :class:`SpdInverse` builds one from a dense SPD matrix through a
Cholesky factorization and two triangular solves.
"""

from __future__ import annotations

import numbers

import numpy as np
import scipy.linalg
import scipy.sparse

from ._validation import ShapeError

__all__ = [
    "ShapeError",
    "NotSPDError",
    "OperatorHandle",
    "IdentityOperator",
    "ScaledIdentity",
    "DenseOperator",
    "CsrMatrix",
    "SpdInverse",
    "apply",
    "apply_adjoint",
    "spd_inverse_from_dense",
    "weighted_dot",
    "aslinearoperator",
]


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be SPD has a non-positive pivot."""


def _finite(vec, what):
    if not np.isfinite(vec).all():
        raise ValueError(f"non-finite entries in operator {what}")
    return vec


class OperatorHandle:
    """Abstract real linear map ``R^ncols -> R^nrows``.

    Subclasses implement ``_matvec`` and ``_rmatvec``; the public methods do
    the shape checking.
    """

    symmetric = False

    def __init__(self, nrows, ncols):
        if nrows < 1 or ncols < 1:
            raise ShapeError(f"operator dimensions must be positive, got {(nrows, ncols)}")
        self.nrows = int(nrows)
        self.ncols = int(ncols)

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        if self.symmetric:
            return self._matvec(y)
        raise NotImplementedError

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ncols,):
            raise ShapeError(f"expected vector of length {self.ncols}, got shape {x.shape}")
        return _finite(self._matvec(_finite(x, "input")), "result")

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.nrows,):
            raise ShapeError(f"expected vector of length {self.nrows}, got shape {y.shape}")
        return _finite(self._rmatvec(_finite(y, "input")), "result")

    def apply_acc(self, x, out, scale=0.0):
        """``out <- op @ x + scale * out`` in place; returns ``out``."""
        if out.shape != (self.nrows,):
            raise ShapeError(f"output buffer must have length {self.nrows}, got {out.shape}")
        prod = self.apply(x)
        if scale == 0.0:
            out[:] = prod
        else:
            out *= scale
            out += prod
        return out

    def apply_adjoint_acc(self, y, out, scale=0.0):
        """``out <- op^T @ y + scale * out`` in place; returns ``out``."""
        if out.shape != (self.ncols,):
            raise ShapeError(f"output buffer must have length {self.ncols}, got {out.shape}")
        prod = self.apply_adjoint(y)
        if scale == 0.0:
            out[:] = prod
        else:
            out *= scale
            out += prod
        return out

    def to_dense(self):
        """Materialize the operator column by column (test-scale only)."""
        eye = np.eye(self.ncols)
        return np.column_stack([self.apply(eye[:, j]) for j in range(self.ncols)])

    def __matmul__(self, x):
        return self.apply(x)

    def __repr__(self):
        return f"<{type(self).__name__} {self.nrows}x{self.ncols}>"


class IdentityOperator(OperatorHandle):
    """Zero-cost identity; ``apply`` returns a copy of its input."""

    symmetric = True
    is_identity = True

    def __init__(self, n):
        super().__init__(n, n)

    def _matvec(self, x):
        return x.copy()

    def to_dense(self):
        return np.eye(self.nrows)


class ScaledIdentity(OperatorHandle):
    """``scale * I``; used for shifted identity preconditioners."""

    symmetric = True

    def __init__(self, n, scale):
        super().__init__(n, n)
        self.scale = float(scale)

    def _matvec(self, x):
        return self.scale * x

    def inverse(self):
        if self.scale <= 0.0:
            raise NotSPDError(f"scaled identity with scale {self.scale} is not SPD")
        return ScaledIdentity(self.nrows, 1.0 / self.scale)


class DenseOperator(OperatorHandle):
    """Operator backed by a dense 2-D array."""

    def __init__(self, matrix, symmetric=False):
        matrix = np.array(matrix, dtype=float, ndmin=2)
        super().__init__(*matrix.shape)
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix contains non-finite entries")
        self.matrix = matrix
        self.symmetric = bool(symmetric)

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self.matrix.T @ y

    def to_dense(self):
        return self.matrix.copy()


class CsrMatrix(OperatorHandle):
    """Compressed sparse row matrix.

    Parameters
    ----------
    nrows, ncols : int
    row_offsets : array of int, length ``nrows + 1``
    col_indices : array of int, length ``nnz``
    values : array of float, length ``nnz``

    Column indices must be strictly increasing within each row. The adjoint
    product scans rows and scatters into the output, so no transpose is
    ever stored.
    """

    def __init__(self, nrows, ncols, row_offsets, col_indices, values):
        super().__init__(nrows, ncols)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.col_indices = np.asarray(col_indices, dtype=np.int64)
        self.values = np.asarray(values, dtype=float)
        self._check()
        # shares the three arrays; .T is a CSC view, i.e. a row-scan transpose product
        self._csr = scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.nrows, self.ncols)
        )
        self._csr.has_sorted_indices = True

    def _check(self):
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (self.nrows + 1,):
            raise ValueError(f"row_offsets must have length nrows+1={self.nrows + 1}")
        if ro[0] != 0:
            raise ValueError("row_offsets[0] must be 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be monotone")
        nnz = int(ro[-1])
        if ci.shape != (nnz,) or self.values.shape != (nnz,):
            raise ValueError("col_indices and values must have length row_offsets[-1]")
        if nnz and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ValueError(f"column index out of range [0, {self.ncols})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain non-finite entries")
        if nnz > 1:
            # strictly increasing within a row: a non-increase is allowed only at a row start
            steps = np.diff(ci) > 0
            row_start = np.zeros(nnz, dtype=bool)
            row_start[ro[1:-1][ro[1:-1] < nnz]] = True
            if not np.all(steps | row_start[1:]):
                raise ValueError("column indices must be strictly increasing within each row")

    @property
    def nnz(self):
        return int(self.row_offsets[-1])

    @classmethod
    def from_scipy(cls, mat):
        mat = scipy.sparse.csr_matrix(mat, dtype=float)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_dense(cls, dense, keep_zeros=False):
        dense = np.array(dense, dtype=float, ndmin=2)
        if keep_zeros:
            rows, cols = np.indices(dense.shape)
            coo = scipy.sparse.coo_matrix(
                (dense.ravel(), (rows.ravel(), cols.ravel())), shape=dense.shape
            )
            return cls.from_scipy(coo)
        return cls.from_scipy(scipy.sparse.csr_matrix(dense))

    def to_scipy(self):
        return self._csr.copy()

    def to_dense(self):
        return self._csr.toarray()

    def _matvec(self, x):
        return self._csr @ x

    def _rmatvec(self, y):
        return self._csr.T @ y


class SpdInverse(OperatorHandle):
    """Action of ``M^{-1}`` for a dense SPD ``M`` via ``M = L L^T``.

    ``apply`` performs one forward and one backward triangular solve.
    ``forward`` is the original matrix ``M`` as an operator, needed only for
    explicit residual checks.
    """

    symmetric = True

    def __init__(self, factor, matrix=None):
        factor = np.array(factor, dtype=float, ndmin=2)
        n = factor.shape[0]
        super().__init__(n, n)
        if factor.shape != (n, n):
            raise ShapeError("Cholesky factor must be square")
        if np.any(np.diag(factor) <= 0.0):
            raise NotSPDError("Cholesky factor must have a strictly positive diagonal")
        self.factor = np.tril(factor)
        self._matrix = matrix

    @property
    def dimension(self):
        return self.nrows

    @property
    def forward(self):
        if self._matrix is None:
            self._matrix = self.factor @ self.factor.T
        return DenseOperator(self._matrix, symmetric=True)

    def _matvec(self, x):
        z = scipy.linalg.solve_triangular(self.factor, x, lower=True, check_finite=False)
        return scipy.linalg.solve_triangular(self.factor, z, lower=True, trans="T", check_finite=False)


def spd_inverse_from_dense(matrix):
    """Factor a dense SPD matrix and return its inverse action.

    Raises
    ------
    ShapeError
        If ``matrix`` is not square.
    ValueError
        If ``matrix`` is not symmetric to within ``1e-12`` relative.
    NotSPDError
        If the factorization meets a non-positive pivot.
    """
    m = np.array(matrix, dtype=float, ndmin=2)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ShapeError(f"expected a non-empty square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    try:
        factor = np.linalg.cholesky(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("matrix not SPD: non-positive pivot in Cholesky factorization") from exc
    return SpdInverse(factor, matrix=m)


def apply(op, x):
    """Return ``op @ x``; ``x`` is left untouched."""
    return op.apply(x)


def apply_adjoint(op, y):
    """Return ``op^T @ y``."""
    return op.apply_adjoint(y)


def weighted_dot(x, y):
    """Euclidean inner product with shape checking."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"length mismatch in dot product: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def aslinearoperator(obj, symmetric=False):
    """Coerce arrays, scipy sparse matrices and handles to an OperatorHandle."""
    if isinstance(obj, OperatorHandle):
        return obj
    if isinstance(obj, numbers.Real):
        raise TypeError("scalars are not operators; use ScaledIdentity")
    if scipy.sparse.issparse(obj):
        return CsrMatrix.from_scipy(obj)
    return DenseOperator(obj, symmetric=symmetric)
