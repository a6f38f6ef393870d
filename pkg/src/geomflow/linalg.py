"""Sparse assembly and linear solves for the per-step saddle-point systems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .errors import NonConvergence, SingularMatrix

PIVOT_RTOL = 1e-14
DEFAULT_TOL = 1e-10


@dataclass
class TripletMatrix:
    """Sparse matrix accumulated as (row, col, value) triplets.

    Duplicate triplets are summed on compression, so concurrent producers can
    append in any order as long as the final list order is deterministic.
    """

    n_rows: int
    n_cols: int
    rows: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    vals: list = field(default_factory=list)

    def add(self, i, j, v):
        self.rows.append(i)
        self.cols.append(j)
        self.vals.append(v)

    def extend(self, rows, cols, vals):
        self.rows.extend(np.asarray(rows, dtype=np.int64))
        self.cols.extend(np.asarray(cols, dtype=np.int64))
        self.vals.extend(np.asarray(vals, dtype=float))

    def to_csr(self):
        m = sparse.coo_matrix(
            (np.asarray(self.vals, dtype=float),
             (np.asarray(self.rows, dtype=np.int64), np.asarray(self.cols, dtype=np.int64))),
            shape=(self.n_rows, self.n_cols),
        )
        return m.tocsr()


@dataclass(frozen=True)
class SolveReport:
    residual_norm: float
    iterations: int
    method: str  # "direct_lu" or "gmres"


def _as_csc(matrix):
    if isinstance(matrix, TripletMatrix):
        matrix = matrix.to_csr()
    return sparse.csc_matrix(matrix)


def solve(matrix, rhs, method="direct_lu", tol=DEFAULT_TOL, restart=60, maxiter=2000):
    """Solve A x = b; returns ``(x, SolveReport)``.

    Direct sparse LU with partial pivoting by default; restarted GMRES as the
    iterative fallback for large systems.  Raises :class:`SingularMatrix` when
    a pivot falls below ``1e-14 * max|A|`` (for the step systems this signals
    a degenerate mesh, vertex normals that do not span R^d, or the known
    semi-implicit conormal coupling issue in 3D), and :class:`NonConvergence`
    for a failed iterative solve.
    """
    A = _as_csc(matrix)
    b = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[0] != A.shape[0]:
        raise ValueError("rhs length does not match matrix size")
    scale = np.abs(A.data).max(initial=0.0)
    if scale == 0.0:
        raise SingularMatrix("matrix has no nonzero entries")

    if method == "direct_lu":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SingularMatrix(str(exc)) from exc
        piv = np.abs(lu.U.diagonal())
        if piv.size and piv.min() < PIVOT_RTOL * scale:
            raise SingularMatrix(
                f"pivot {piv.min():.3e} below threshold {PIVOT_RTOL * scale:.3e}"
            )
        x = lu.solve(b)
        iterations = 0
    elif method == "gmres":
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, b, rtol=tol, restart=restart, maxiter=maxiter,
                             callback=cb, callback_type="legacy")
        if info != 0:
            raise NonConvergence(f"gmres stopped with info={info}")
        iterations = count[0]
    else:
        raise ValueError(f"unknown solve method {method!r}")

    residual = float(np.linalg.norm(A @ x - b))
    bound = tol * (sparse.linalg.norm(A) * np.linalg.norm(x) + np.linalg.norm(b))
    if residual > max(bound, 1e-300):
        if method == "direct_lu":
            raise SingularMatrix(
                f"direct solve residual {residual:.3e} exceeds bound {bound:.3e}"
            )
        raise NonConvergence(
            f"iterative solve residual {residual:.3e} exceeds bound {bound:.3e}"
        )
    return x, SolveReport(residual_norm=residual, iterations=iterations,
                          method=method)


def factorized_spd(matrix):
    """LU-factorize once for repeated solves (used by the rank-one update path)."""
    A = _as_csc(matrix)
    scale = np.abs(A.data).max(initial=0.0)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularMatrix(str(exc)) from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() < PIVOT_RTOL * scale:
        raise SingularMatrix(
            f"pivot {piv.min():.3e} below threshold {PIVOT_RTOL * scale:.3e}"
        )
    return lu


def solve_rank_one_update(base_lu, u, rhs):
    """Solve (A + u u^T) x = b given a factorization of A.

    Sherman-Morrison: x = A^{-1}b - A^{-1}u (u^T A^{-1} b) / (1 + u^T A^{-1} u).
    """
    y = base_lu.solve(rhs)
    z = base_lu.solve(u)
    denom = 1.0 + u @ z
    if abs(denom) < 1e-300:
        raise SingularMatrix("rank-one update makes the system singular")
    return y - z * ((u @ y) / denom)
