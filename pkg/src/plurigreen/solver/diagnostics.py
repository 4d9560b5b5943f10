"""Post-solve diagnostics: maximality defect, gradient bound trace, assembly."""
from __future__ import annotations

import numpy as np

from ..geometry import BOUNDARY, INTERIOR, OUTSIDE, ComplexGrid


def gradient_sup(domain, phi_full, idx) -> float:
    """Largest centred-difference gradient norm over the nodes ``idx``."""
    g2 = np.zeros(len(idx))
    for a in range(2 * domain.n):
        e = np.zeros(2 * domain.n, dtype=int)
        e[a] = 1
        fp = phi_full[domain.shift(idx, e)]
        fm = phi_full[domain.shift(idx, -e)]
        g2 += ((fp - fm) / (2 * domain.h)) ** 2
    g = np.sqrt(g2)
    return float(np.nanmax(g)) if np.any(np.isfinite(g)) else 0.0


def c1_trace(domain, history, idx, max_power: int = 10, report_calibration: bool = False):
    """Trace of ``sup|grad phi_t| exp(-C2 (phi_t - inf phi_t0))`` along a path.

    Parameters
    ----------
    history : list of (t, phi_full)
        Iterates along the continuation path, first entry at ``t0``.
    idx : ndarray
        Interior nodes used for the supremum.

    Returns
    -------
    trace : list of (t, value)
    C2 : float
        Least power of two (up to ``2**max_power``) for which the value at
        ``t0`` is at most one. When none qualifies the gradient at the
        minimiser already exceeds one and ``C2 = 1`` is used, which keeps
        the trace from collapsing to zero.
    calibrated : bool
        Only with ``report_calibration``; false when the fallback was used.
    """
    if not history:
        return ([], 1.0, True) if report_calibration else ([], 1.0)
    base = float(np.nanmin(history[0][1][idx]))

    def value(phi, C2):
        g2 = np.zeros(len(idx))
        for a in range(2 * domain.n):
            e = np.zeros(2 * domain.n, dtype=int)
            e[a] = 1
            fp = phi[domain.shift(idx, e)]
            fm = phi[domain.shift(idx, -e)]
            g2 += ((fp - fm) / (2 * domain.h)) ** 2
        v = np.sqrt(g2) * np.exp(-C2 * (phi[idx] - base))
        return float(np.nanmax(v))

    C2, ok = 1.0, False
    for k in range(max_power + 1):
        if value(history[0][1], 2.0 ** k) <= 1.0:
            C2, ok = 2.0 ** k, True
            break
    trace = [(float(t), value(phi, C2)) for t, phi in history]
    return (trace, C2, ok) if report_calibration else (trace, C2)


def assemble(problem, mask, phi_full):
    """Remainder and Green grids from a closure-extended remainder array.

    Carrying nodes get ``G = s + Phi - sum eps``; boundary nodes are then
    assigned the Dirichlet data exactly.
    """
    dom = problem.domain
    flat_mask = mask.ravel()
    carry = np.flatnonzero(np.isin(flat_mask, (INTERIOR, BOUNDARY)))
    bd = np.flatnonzero(flat_mask == BOUNDARY)
    phi = np.full(dom.size, np.nan)
    phi[carry] = phi_full[carry]
    green = np.full(dom.size, np.nan)
    pts = dom.node_points(carry)
    green[carry] = problem.singular_potential(pts) + phi_full[carry] - problem.eps_total
    if len(bd):
        proj, _, _ = dom.project(dom.node_points(bd))
        green[bd] = problem.boundary_values(proj)
        phi[bd] = problem.phi_boundary(bd)
    return ComplexGrid(dom, phi, mask), ComplexGrid(dom, green, mask)


def outside_nan(mask, arr):
    out = arr.copy()
    out[mask.ravel() == OUTSIDE] = np.nan
    return out
