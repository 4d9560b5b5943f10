"""Closure rows tying excised-core and boundary-band nodes to the unknowns.

Two variants are provided. The monotone variant (nonnegative weights) is
used by the envelope backend; the smooth variant (linear extrapolation)
is used by Newton, whose centred second differences turn a kink in the
closed field into spurious indefiniteness of the discrete Hessian.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import StencilOutOfDomain
from ..geometry import BOUNDARY, EXCISED, OUTSIDE, interpolation_weights


def _interp_rows(domain, rows, points, scale, mask, allowed_excised=False):
    idx, w = interpolation_weights(domain, points)
    use = w > 0
    if np.any(idx[use] < 0):
        raise StencilOutOfDomain("closure interpolation leaves the grid")
    tags = mask.ravel()[np.where(idx >= 0, idx, 0)]
    bad = use & ((tags == OUTSIDE) | ((tags == EXCISED) & (not allowed_excised)))
    if np.any(bad):
        raise StencilOutOfDomain("closure interpolation touches excised or outside nodes")
    r = np.repeat(rows, idx.shape[1])
    return r[use.ravel()], idx.ravel()[use.ravel()], (w * scale[:, None]).ravel()[use.ravel()]


def _core_geometry(problem, ex):
    """Owning pole, unit ray direction and radius for each excised node."""
    pts = problem.domain.node_points(ex)
    owner = np.zeros(len(ex), dtype=int)
    best = np.full(len(ex), np.inf)
    for m, P in enumerate(problem.singularities.poles):
        d = np.linalg.norm(pts - P.position[None, :], axis=1)
        closer = d < best
        owner[closer] = m
        best[closer] = d[closer]
    centers = np.array([P.position for P in problem.singularities.poles]).reshape(-1, problem.n)
    w = pts - centers[owner]
    r = np.linalg.norm(w, axis=1)
    u = np.where(r[:, None] > 0, w / np.where(r > 0, r, 1.0)[:, None], 0)
    u[r == 0, 0] = 1.0
    return centers[owner], u, r


def core_radii(problem):
    h = problem.domain.h
    R1 = problem.excision_radius + h * np.sqrt(2 * problem.n)
    return R1, R1 + 2 * h


def monotone_closure(problem, mask):
    """Constant extension of the remainder along rays into the cores.

    Returns a sparse matrix ``E`` whose excised rows hold interpolation
    weights of ``Phi`` at radius ``R1`` on the same ray.
    """
    dom = problem.domain
    N = dom.size
    ex = np.flatnonzero(mask.ravel() == EXCISED)
    if len(ex) == 0:
        return sp.csr_matrix((N, N)), ex
    c, u, _ = _core_geometry(problem, ex)
    R1, _ = core_radii(problem)
    r, cidx, v = _interp_rows(dom, ex, c + R1 * u, np.ones(len(ex)), mask)
    return sp.csr_matrix((v, (r, cidx)), shape=(N, N)), ex


def smooth_closure(problem, mask, phi_b_band):
    """Linear closures for Newton.

    Excised nodes: linear extrapolation from radii ``R1`` and ``R2``.
    Boundary-band nodes: linear interpolation along the inward normal
    between the data ``phi_b`` at the boundary point and the unknown at
    depth ``D = h (1 + sqrt(2n))``.

    Returns
    -------
    E : sparse matrix
    const : ndarray
        Constant part of each closure row.
    rows : ndarray
        Flat indices of all closure nodes.
    """
    dom = problem.domain
    N = dom.size
    h = dom.h
    R, C, W = [], [], []
    const = np.zeros(N)
    ex = np.flatnonzero(mask.ravel() == EXCISED)
    if len(ex):
        c, u, r = _core_geometry(problem, ex)
        R1, R2 = core_radii(problem)
        lam = (R1 - r) / (R2 - R1)
        for rad, fac in ((R1, 1 + lam), (R2, -lam)):
            a, b, w = _interp_rows(dom, ex, c + rad * u, fac, mask)
            R.append(a), C.append(b), W.append(w)
    bd = np.flatnonzero(mask.ravel() == BOUNDARY)
    if len(bd):
        pts = dom.node_points(bd)
        proj, normal, depth = dom.project(pts)
        D = h * (1 + np.sqrt(2 * dom.n))
        lam = depth / D
        a, b, w = _interp_rows(dom, bd, proj - D * normal, lam, mask)
        R.append(a), C.append(b), W.append(w)
        const[bd] = (1 - lam) * phi_b_band
    if R:
        E = sp.csr_matrix((np.concatenate(W), (np.concatenate(R), np.concatenate(C))), shape=(N, N))
    else:
        E = sp.csr_matrix((N, N))
    return E, const, np.concatenate([ex, bd])
