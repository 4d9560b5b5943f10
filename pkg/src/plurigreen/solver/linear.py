"""Sparse linear solves used inside the nonlinear iterations."""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_LIMIT = 400_000


def solve(A, b, x0=None, tol: float = 1e-10, symmetric_like: bool = True, planar: bool = False):
    """Solve ``A x = b`` for an M-matrix or a Newton Jacobian.

    Planar problems and small systems use a sparse direct factorisation.
    Larger four-dimensional systems use algebraic multigrid as a
    preconditioner for a Krylov method, falling back to the direct solver
    when the Krylov residual stalls.
    """
    A = sp.csr_matrix(A)
    if planar or A.shape[0] <= 2_000:
        return spla.spsolve(A.tocsc(), b)
    import pyamg

    bnorm = max(np.linalg.norm(b), 1e-300)
    if symmetric_like:
        ml = pyamg.ruge_stuben_solver(A)
        x = ml.solve(b, x0=x0, tol=tol, accel="bicgstab", maxiter=300)
    else:
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="nonsymmetric")
        x = ml.solve(b, x0=x0, tol=tol, accel="gmres", maxiter=300)
    rel = np.linalg.norm(A @ x - b) / bnorm
    if rel > 1e3 * tol and A.shape[0] <= DIRECT_LIMIT:
        log.warning("multigrid residual %.2e; falling back to direct solve", rel)
        return spla.spsolve(A.tocsc(), b)
    return x
