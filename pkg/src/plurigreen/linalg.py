"""Batched cyclic Jacobi eigenvalues for small Hermitian matrices."""
from __future__ import annotations

import numpy as np

JACOBI_RTOL = 1e-12


def _offdiag_norm(A):
    n = A.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(A[..., mask]) ** 2, axis=-1))


def jacobi_eigvalsh(H, rtol: float = JACOBI_RTOL, max_sweeps: int = 60):
    """Eigenvalues of a stack of Hermitian matrices by cyclic Jacobi sweeps.

    Parameters
    ----------
    H : array_like, shape (..., n, n)
        Hermitian matrices. The input is symmetrised first so tiny
        round-off asymmetry does not leak into the result.
    rtol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``rtol`` times the full Frobenius norm, for every matrix.

    Returns
    -------
    ndarray, shape (..., n)
        Eigenvalues sorted ascending.
    """
    A = np.asarray(H, dtype=complex)
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    batch = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape((-1, n, n)).copy()
    if n == 1:
        return np.sort(A[:, 0, 0].real.reshape(batch + (1,)), axis=-1)
    scale = np.sqrt(np.sum(np.abs(A) ** 2, axis=(-1, -2)))
    scale = np.where(scale > 0, scale, 1.0)
    for _ in range(max_sweeps):
        if np.all(_offdiag_norm(A) <= rtol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                b = A[:, p, q]
                ab = np.abs(b)
                act = ab > 1e-300
                if not np.any(act):
                    continue
                a = A[:, p, p].real
                d = A[:, q, q].real
                phase = np.where(act, b / np.where(act, ab, 1.0), 1.0)
                safe = np.where(act, ab, 1.0)
                tau = (d - a) / (2.0 * safe)
                sgn = np.where(tau >= 0, 1.0, -1.0)
                t = sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                t = np.where(act, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # G = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                g00 = c
                g01 = s
                g10 = -s * np.conj(phase)
                g11 = c * np.conj(phase)
                Ap = A[:, :, p].copy()
                Aq = A[:, :, q].copy()
                A[:, :, p] = Ap * g00[:, None] + Aq * g10[:, None]
                A[:, :, q] = Ap * g01[:, None] + Aq * g11[:, None]
                Rp = A[:, p, :].copy()
                Rq = A[:, q, :].copy()
                A[:, p, :] = np.conj(g00)[:, None] * Rp + np.conj(g10)[:, None] * Rq
                A[:, q, :] = np.conj(g01)[:, None] * Rp + np.conj(g11)[:, None] * Rq
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
    ev = np.real(np.diagonal(A, axis1=-2, axis2=-1))
    return np.sort(ev, axis=-1).reshape(batch + (n,))


def min_eigenvalue(H):
    """Smallest eigenvalue of each Hermitian matrix in a stack."""
    return jacobi_eigvalsh(H)[..., 0]


def is_positive(H, margin: float = 0.0):
    """True iff every matrix in ``H`` has smallest eigenvalue above ``margin``.

    Accepts a single matrix or a stack; for a stack the answer is the
    conjunction over all members.
    """
    return bool(np.all(min_eigenvalue(H) > margin))


def is_hermitian(H, rtol: float = 1e-12) -> bool:
    A = np.asarray(H)
    diff = np.abs(A - np.conj(np.swapaxes(A, -1, -2))).max(axis=(-1, -2))
    size = np.abs(A).max(axis=(-1, -2))
    return bool(np.all(diff <= rtol * np.maximum(size, 1e-300)))
