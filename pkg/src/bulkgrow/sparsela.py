"""Sparse symmetric positive definite solves.

Matrices are scipy CSR matrices with structurally symmetric patterns.  Two
solve paths share one residual contract (||Ax - b|| <= tol * ||b||):

* :func:`solve_spd` -- Jacobi-preconditioned conjugate gradients with a hard
  iteration cap; the default for one-off and well-conditioned systems.
* :class:`CachedSpdSolver` -- conjugate gradients preconditioned by a sparse
  factorization that is refreshed only when convergence degrades; used inside
  the time loop where the matrix drifts slowly between steps.

Every solve verifies the true residual before returning.
"""

import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError, ValidationError

DEFAULT_TOL = 1e-11

_SPLU_OPTS = dict(
    permc_spec="MMD_AT_PLUS_A",
    options={"SymmetricMode": True},
)


def iteration_cap(dim):
    """Hard PCG iteration cap: 50 * sqrt(dim)."""
    return int(math.ceil(50.0 * math.sqrt(max(dim, 1))))


def check_structural_symmetry(matrix, tol=0.0):
    """True if the sparsity pattern (and values up to tol) are symmetric."""
    diff = (matrix - matrix.T).tocoo()
    if diff.nnz == 0:
        return True
    scale = max(np.abs(matrix.data).max(), 1.0)
    return np.abs(diff.data).max() <= tol * scale


def _pcg(matrix, rhs, precondition, tol, maxiter, x0=None):
    """Preconditioned conjugate gradients; returns (x, iterations, converged).

    Handles 2d right-hand sides column by column with batched matrix and
    preconditioner applications (scalars become per-column vectors), which is
    exact columnwise CG at a fraction of the traversal cost.
    """
    single = rhs.ndim == 1
    b = rhs[:, None] if single else rhs
    b_norm = np.sqrt((b * b).sum(axis=0))
    target = tol * b_norm
    if x0 is not None:
        x = (x0[:, None] if single else x0).copy()
        r = b - matrix @ x
    else:
        x = np.zeros_like(b)
        r = b.copy()
    it = 0
    res0 = np.sqrt((r * r).sum(axis=0))
    needs_work = np.any(b_norm > 0.0) and np.any(res0 > 0.25 * target)
    if needs_work:
        z = precondition(r)
        p = z.copy()
        rz = (r * z).sum(axis=0)
        for it in range(1, maxiter + 1):
            ap = matrix @ p
            pap = (p * ap).sum(axis=0)
            alpha = np.where(pap > 0.0, rz / np.where(pap > 0.0, pap, 1.0), 0.0)
            x += alpha * p
            r -= alpha * ap
            res = np.sqrt((r * r).sum(axis=0))
            if np.all(res <= 0.25 * np.maximum(target, 0.0)):
                break
            z = precondition(r)
            rz_new = (r * z).sum(axis=0)
            beta = np.where(rz > 0.0, rz_new / np.where(rz > 0.0, rz, 1.0), 0.0)
            p = z + beta * p
            rz = rz_new
    true = b - matrix @ x
    true_res = np.sqrt((true * true).sum(axis=0))
    converged = bool(np.all((true_res <= target) | (b_norm == 0.0)))
    x[:, b_norm == 0.0] = 0.0
    return (x[:, 0] if single else x), it, converged


def solve_spd(matrix, rhs, tol=DEFAULT_TOL):
    """Solve an SPD system by Jacobi-preconditioned conjugate gradients.

    Parameters
    ----------
    matrix : scipy sparse matrix
        Symmetric positive definite (caller contract).
    rhs : ndarray
        Right-hand side; a 2d array is solved column by column.
    tol : float
        Relative residual target, in (0, 1e-6].

    Raises
    ------
    SolverError
        If the iteration cap (50 * sqrt(dim)) is reached without meeting the
        residual target; reports the final relative residual.
    """
    if not (0.0 < tol <= 1e-6):
        raise ValidationError(f"tol must lie in (0, 1e-6], got {tol}")
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != n:
        raise ValidationError("rhs length does not match matrix dimension")

    diag = matrix.diagonal()
    if (diag <= 0).any():
        raise SolverError("non-positive diagonal entry; matrix is not SPD")
    inv_diag = (1.0 / diag)[:, None]
    x, _, converged = _pcg(
        matrix, rhs, lambda r: inv_diag * r, tol, iteration_cap(n)
    )
    if not converged:
        res = np.linalg.norm(rhs - matrix @ x) / np.linalg.norm(rhs)
        raise SolverError(
            f"PCG did not converge within {iteration_cap(n)} iterations",
            residual=res,
        )
    return x


class SpdFactor:
    """Direct sparse LU factorization of an SPD matrix with residual checks."""

    def __init__(self, matrix):
        self.matrix = matrix.tocsr()
        self._lu = spla.splu(sp.csc_matrix(self.matrix), **_SPLU_OPTS)

    def apply_inverse(self, rhs):
        """One triangular solve, no residual verification (preconditioner use)."""
        return self._lu.solve(rhs)

    def solve(self, rhs, tol=DEFAULT_TOL):
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        b_norm = np.linalg.norm(rhs)
        if b_norm == 0.0:
            return np.zeros_like(rhs)
        res = np.linalg.norm(rhs - self.matrix @ x) / b_norm
        if res > tol:
            raise SolverError("factorized solve residual too large", residual=res)
        return x


class CachedSpdSolver:
    """PCG preconditioned by a lazily refreshed factorization.

    Designed for sequences of SPD systems whose matrices drift slowly (moving
    meshes): the factorization of an earlier matrix remains an excellent
    preconditioner for many steps.  It is refreshed when PCG needs more than
    ``refresh_iters`` iterations, and the refreshed factorization is used
    directly for the current solve.  Deterministic for a fixed call sequence.
    """

    def __init__(self, tol=DEFAULT_TOL, refresh_iters=12):
        self.tol = tol
        self.refresh_iters = refresh_iters
        self._factor = None
        self._last = None

    def solve(self, matrix, rhs):
        matrix = matrix.tocsr()
        rhs = np.asarray(rhs, dtype=float)
        if self._factor is None:
            self._factor = SpdFactor(matrix)
            x = self._factor.solve(rhs, self.tol)
            self._last = x.copy()
            return x
        x0 = self._last if self._last is not None and self._last.shape == rhs.shape else None
        x, iters, converged = _pcg(
            matrix,
            rhs,
            self._factor.apply_inverse,
            self.tol,
            maxiter=max(2 * self.refresh_iters, 4),
            x0=x0,
        )
        if not (converged and iters <= self.refresh_iters):
            self._factor = SpdFactor(matrix)
            x = self._factor.solve(rhs, self.tol)
        self._last = x.copy()
        return x


def schur_dirichlet_solve(matrix, n_boundary, boundary_values, interior_rhs=None,
                          tol=DEFAULT_TOL, interior_solver=None):
    """Solve a Dirichlet problem for a boundary-first partitioned SPD matrix.

    Returns the full vector v with v[:n_boundary] = boundary_values and
    A_II v_I = interior_rhs - A_IB v_B for the interior block.

    Parameters
    ----------
    matrix : scipy sparse matrix, (N, N)
        Partitioned with the boundary block first; A_II must be SPD.
    n_boundary : int
        Size of the boundary block.
    boundary_values : ndarray, (n_boundary,) or (n_boundary, c)
        Prescribed trace; multiple columns are solved together.
    interior_rhs : ndarray or None
        Interior load; defaults to zero.
    interior_solver : callable or None
        Optional ``solver(matrix, rhs)`` replacing the default PCG path
        (used to share factorizations across calls).
    """
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    g = np.asarray(boundary_values, dtype=float)
    if g.shape[0] != n_boundary:
        raise ValidationError("boundary value length does not match partition")
    a_ib = matrix[n_boundary:, :n_boundary]
    a_ii = matrix[n_boundary:, n_boundary:]
    rhs = -(a_ib @ g)
    if interior_rhs is not None:
        rhs = rhs + np.asarray(interior_rhs, dtype=float)
    if rhs.ndim == 1:
        stacked = rhs[:, None]
    else:
        stacked = rhs
    if interior_solver is None:
        interior = np.column_stack(
            [solve_spd(a_ii, col, tol) for col in stacked.T]
        )
    else:
        interior = np.column_stack([interior_solver(a_ii, col) for col in stacked.T])
    out_shape = (n,) + g.shape[1:]
    out = np.empty(out_shape)
    out[:n_boundary] = g
    out[n_boundary:] = interior if g.ndim == 2 else interior[:, 0]
    return out
