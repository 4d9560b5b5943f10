"""Assembly of the Green's function and the cross-backend uniqueness check."""
from __future__ import annotations

import numpy as np

from ..geometry import BOUNDARY, INTERIOR, ComplexGrid
from .envelope import solve_envelope
from .problem import GreenProblem, SolveReport
from .regularized import solve_regularized

BACKENDS = {"envelope": solve_envelope, "regularized": solve_regularized}


def solve(problem: GreenProblem, backend: str = "envelope") -> SolveReport:
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    return fn(problem)


def assemble_green(problem: GreenProblem, phi: ComplexGrid) -> ComplexGrid:
    """``G = s + Phi - sum eps`` off the excised cores, with exact boundary data.

    Parameters
    ----------
    problem : GreenProblem
    phi : ComplexGrid
        Remainder; only its carrying nodes are read.

    Returns
    -------
    ComplexGrid
        Excised and padding nodes carry NaN. Boundary nodes hold the
        Dirichlet data at their boundary projection, by assignment.
    """
    dom = problem.domain
    mask = phi.mask
    flat = mask.ravel()
    carry = np.flatnonzero(np.isin(flat, (INTERIOR, BOUNDARY)))
    G = np.full(dom.size, np.nan)
    G[carry] = (problem.singular_potential(dom.node_points(carry))
                + phi.values.ravel()[carry] - problem.eps_total)
    bd = np.flatnonzero(flat == BOUNDARY)
    if len(bd):
        proj, _, _ = dom.project(dom.node_points(bd))
        G[bd] = problem.boundary_values(proj)
    return ComplexGrid(dom, G, mask.copy(), {"field": "G"})


def uniqueness_check(problem: GreenProblem, reports=None, region=None) -> float:
    """Sup-norm gap between the two backends' Green's functions.

    Parameters
    ----------
    problem : GreenProblem
    reports : tuple of SolveReport, optional
        Precomputed ``(envelope, regularized)`` reports; solved here when
        omitted.
    region : callable, optional
        Boolean predicate on points ``(k, n)`` restricting the comparison;
        defaults to every non-excised node.

    Returns
    -------
    float
    """
    if reports is None:
        reports = (solve_envelope(problem), solve_regularized(problem))
    a, b = reports
    ga, gb = a.green.values.ravel(), b.green.values.ravel()
    idx = np.flatnonzero(np.isfinite(ga) & np.isfinite(gb))
    if region is not None:
        keep = np.asarray(region(problem.domain.node_points(idx)), dtype=bool)
        idx = idx[keep]
    if not len(idx):
        return 0.0
    return float(np.max(np.abs(ga[idx] - gb[idx])))
