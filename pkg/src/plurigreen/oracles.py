"""Closed-form Green's functions used as reference solutions."""
from __future__ import annotations

import numpy as np


def mobius_green(poles, R: float = 1.0):
    """``sum eps_m k_m log|R (z - p_m) / (R^2 - conj(p_m) z)|^2`` on the disk of radius ``R``.

    In one variable the Monge-Ampere operator is the Laplacian, so Green's
    functions with several poles add. ``k_m`` is the vanishing order of
    ``f`` at ``p_m``.

    Parameters
    ----------
    poles : iterable of (position, epsilon, order)
    """
    poles = [(complex(np.ravel(p)[0]), float(e), int(k)) for p, e, k in poles]

    def G(z):
        z = np.atleast_2d(z)[:, 0]
        out = np.zeros(len(z))
        for p, e, k in poles:
            out += e * k * np.log(np.abs(R * (z - p) / (R * R - np.conj(p) * z)) ** 2)
        return out

    return G


def ball_radial_green(eps: float, order: int = 1, R: float = 1.0):
    """``eps k log(|z|^2 / R^2)``, the Green's function of the ball with a pole at the centre."""

    def G(z):
        z = np.atleast_2d(z)
        return eps * order * np.log(np.sum(np.abs(z) ** 2, axis=1) / R ** 2)

    return G


def oracle_for(problem):
    """Closed-form reference for a Green problem, or ``None`` when none applies.

    Applies to zero boundary data and a zero background on a disk (any
    number of poles) or a ball (one pole at the centre whose ``sum |f|^2`` is
    comparable to ``|z|^(2k)``, as for ``f = (z1^k, z2^k)``).
    """
    dom = problem.domain
    B = problem.background
    if callable(problem.boundary_data) or float(problem.boundary_data) != 0.0:
        return None
    if B.base != "zero" or B.augmentation != 0:
        return None
    poles = problem.singularities.poles
    if dom.kind == "disk":
        return mobius_green([(P.position, P.epsilon, P.order) for P in poles], dom.radii[0])
    if dom.kind == "ball" and len(poles) == 1:
        P = poles[0]
        if np.allclose(P.position, 0) and _homogeneous_comparable(P):
            return ball_radial_green(P.epsilon, P.order, dom.radii[0])
    return None


def _homogeneous_comparable(P) -> bool:
    """Whether ``sum |f|^2`` is comparable to ``|z|^(2k)``: the degree-k parts have no common zero on the sphere."""
    k = P.order
    from .measure import sphere_samples

    u = sphere_samples(len(P.position), 16)
    lead = 0.0
    for p in P.f:
        part = {e: c for e, c in p.terms.items() if sum(e) == k}
        val = np.zeros(len(u), dtype=complex)
        for e, c in part.items():
            val += c * np.prod(u ** np.array(e), axis=1)
        lead = lead + np.abs(val) ** 2
    return bool(np.min(lead) > 1e-8)
