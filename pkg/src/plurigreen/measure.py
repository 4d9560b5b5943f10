"""Monge-Ampere measures, pole masses and Lelong numbers.

Masses use the convention ``mass(A) = int_A det(omega + ddbar u) dV`` with
coefficient matrices of ``(i/2) d dbar`` and Lebesgue ``dV``, so ``|z|^2``
has density one. The Dirac constant ``c_n`` in
``det(ddbar log|z|^2) dV = c_n delta_0`` is measured by flux quadrature
(:func:`measure_dirac_constant`), never assumed.

The mass of a ball is evaluated through the divergence form

    mass(B_r) = 1/(2n) Re  sum_{j,k}  oint u_j C_{jk} nu_k dS,

with ``u_j = d u / d z_j``, ``C`` the cofactor matrix of the complex
Hessian (``C = 1`` in one variable) and ``nu_k`` the complex components of
the outward unit normal. The integrand only needs first and second
derivatives on the sphere, which stay bounded away from the pole.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InsufficientRadii, RadiusOutOfRange, StencilOutOfDomain
from .geometry import (BOUNDARY, EXCISED, INTERIOR, OUTSIDE, ComplexGrid,
                       DomainSpec, HermitianField, complex_hessian_at,
                       grid_from_function, hessian_coefficients,
                       interpolation_weights, second_difference_ops)

CLIP_THRESHOLD = 1e-8


# ---------------------------------------------------------------- fields
def _valued(u: ComplexGrid) -> np.ndarray:
    flat = u.values.ravel().astype(float).copy()
    flat[np.isin(u.mask.ravel(), (EXCISED, OUTSIDE))] = np.nan
    return flat


def _hessian_all(u: ComplexGrid) -> np.ndarray:
    """Complex Hessians at every node, NaN where the stencil is incomplete."""
    dom = u.domain
    v = ComplexGrid(dom, _valued(u), np.where(u.mask == OUTSIDE, OUTSIDE, INTERIOR))
    H = np.full((dom.size, dom.n, dom.n), np.nan, dtype=complex)
    idx = np.arange(dom.size)
    if not dom.periodic:
        # padding nodes at the array edge have no neighbours at all
        multi = dom.nodes_multi(idx)
        m = len(dom.axis)
        idx = idx[np.all((multi > 0) & (multi < m - 1), axis=1)]
    H[idx] = complex_hessian_at(v, idx, check=False)
    return H


def _interp(domain: DomainSpec, F: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation of a per-node array (any trailing shape)."""
    idx, w = interpolation_weights(domain, points)
    safe = np.maximum(idx, 0)
    vals = F[safe]
    extra = vals.ndim - 2
    wb = w.reshape(w.shape + (1,) * extra)
    out = np.sum(wb * np.where(np.isnan(vals), 0, vals), axis=1)
    bad = ((idx < 0) & (w > 0)) | ((w > 0) & np.isnan(vals).reshape(len(idx), w.shape[1], -1).any(axis=-1))
    out[bad.any(axis=1)] = np.nan
    return out


def _with_base(u: ComplexGrid, base_potential) -> ComplexGrid:
    if base_potential is None:
        return u
    dom = u.domain
    vals = u.values.ravel().copy()
    carry = np.flatnonzero(np.isfinite(vals))
    vals[carry] = vals[carry] + base_potential(dom.node_points(carry))
    return ComplexGrid(dom, vals, u.mask, dict(u.meta))


# ------------------------------------------------------------ ma_density
def ma_density(u: ComplexGrid, base: HermitianField | None = None) -> ComplexGrid:
    """Per-node ``det(base + complex_hessian(u))``.

    Nodes whose centred stencil touches an excised, padding or NaN node
    carry NaN. Determinants of matrices that are positive semidefinite up
    to ``1e-8`` relative are clipped at zero; nodes whose matrix has a
    genuinely negative eigenvalue keep their determinant and are counted
    in ``meta['negative_nodes']``.

    Parameters
    ----------
    u : ComplexGrid
    base : HermitianField, optional
        Background form. Its matrices are per node of the whole grid, or
        of ``base.nodes`` when given. Omitted means the zero form.
    """
    dom = u.domain
    H = _hessian_all(u)
    if base is not None:
        B = np.zeros_like(H)
        if base.nodes is None:
            B[:] = base.matrices.reshape(dom.size, dom.n, dom.n)
        else:
            B[np.asarray(base.nodes)] = base.matrices
        H = H + B
    ok = np.all(np.isfinite(H.reshape(dom.size, -1)), axis=1)
    ok &= np.isin(u.mask.ravel(), (INTERIOR, BOUNDARY))
    dens = np.full(dom.size, np.nan)
    neg = 0
    lam_min = np.inf
    if ok.any():
        Hk = H[ok]
        Hk = 0.5 * (Hk + np.conj(np.swapaxes(Hk, -1, -2)))
        lam = np.linalg.eigvalsh(Hk)
        d = np.prod(lam, axis=1)
        scale = np.maximum(1.0, np.abs(lam).max(axis=1))
        psd = lam[:, 0] >= -CLIP_THRESHOLD * scale
        d = np.where(psd, np.maximum(d, 0.0), d)
        neg = int(np.sum(~psd))
        lam_min = float(lam[:, 0].min())
        dens[ok] = d
    return ComplexGrid(dom, dens, u.mask.copy(),
                       {"field": "ma_density", "negative_nodes": neg, "min_eigenvalue": lam_min})


def integrate(density: ComplexGrid, region=None) -> float:
    """Node-quadrature integral over the nodes inside the domain that carry a value."""
    dom = density.domain
    vals = density.values.ravel()
    idx = np.flatnonzero(np.isfinite(vals))
    if not dom.periodic:
        idx = idx[dom.depth(dom.node_points(idx)) >= 0]
    if region is not None:
        idx = idx[np.asarray(region(dom.node_points(idx)), dtype=bool)]
    return float(np.sum(vals[idx]) * dom.h ** (2 * dom.n))


# --------------------------------------------------------- sphere fluxes
def sphere_quadrature(n: int, rho: float, m: int = 64):
    """Unit normals and surface weights of a product rule on ``|w| = rho``.

    In C^2 the sphere is parametrised by ``s = |w_2|^2 / rho^2`` and the
    two phases, with ``dS = rho^3/2 ds d(alpha) d(beta)``.
    """
    if n == 1:
        ang = 2 * np.pi * np.arange(m) / m
        nu = np.exp(1j * ang)[:, None]
        return nu, np.full(m, 2 * np.pi * rho / m)
    ms = max(4, m // 4)
    x, ws = np.polynomial.legendre.leggauss(ms)
    s = 0.5 * (x + 1)
    ws = 0.5 * ws
    ma = max(8, m // 2)
    ang = 2 * np.pi * np.arange(ma) / ma
    S, A, B = np.meshgrid(s, ang, ang, indexing="ij")
    W = np.broadcast_to(ws[:, None, None], S.shape)
    nu = np.stack([np.sqrt(1 - S) * np.exp(1j * A), np.sqrt(S) * np.exp(1j * B)], axis=-1).reshape(-1, 2)
    w = (rho ** 3 / 2) * W.ravel() * (2 * np.pi / ma) ** 2
    return nu, w


def _cofactor(H):
    if H.shape[-1] == 1:
        return np.ones_like(H)
    C = np.empty_like(H)
    C[..., 0, 0] = H[..., 1, 1]
    C[..., 1, 1] = H[..., 0, 0]
    C[..., 0, 1] = -H[..., 1, 0]
    C[..., 1, 0] = -H[..., 0, 1]
    return C


class _FluxField:
    """Derivatives of one grid function, evaluated lazily on sphere quadratures."""

    def __init__(self, u: ComplexGrid, base_potential=None):
        self.u = _with_base(u, base_potential)
        self.domain = u.domain
        self.flat = _valued(self.u)

    def _derivatives(self, nodes):
        """Complex gradients and Hessians at flat indices ``nodes`` (NaN without stencil)."""
        dom = self.domain
        f = self.flat

        def at(j):
            return np.where(j >= 0, f[np.maximum(j, 0)], np.nan)

        g = np.zeros((len(nodes), dom.n), dtype=complex)
        D = {}
        for key, terms in second_difference_ops(dom.n).items():
            D[key] = sum(w * at(dom.shift(nodes, off)) for off, w in terms) / dom.h ** 2
        for j in range(dom.n):
            parts = []
            for a in (2 * j, 2 * j + 1):
                e = np.zeros(2 * dom.n, dtype=int)
                e[a] = 1
                parts.append((at(dom.shift(nodes, e)) - at(dom.shift(nodes, -e))) / (2 * dom.h))
            g[:, j] = 0.5 * (parts[0] - 1j * parts[1])
        H = np.empty((len(nodes), dom.n, dom.n), dtype=complex)
        for (j, k), terms in hessian_coefficients(dom.n).items():
            H[:, j, k] = sum(w * D[key] for key, w in terms)
        return g, H

    def flux(self, center, rho: float, m: int = 64) -> float:
        dom = self.domain
        nu, w = sphere_quadrature(dom.n, rho, m)
        pts = np.asarray(center, dtype=complex)[None, :] + rho * nu
        idx, wts = interpolation_weights(dom, pts)
        if np.any((idx < 0) & (wts > 0)):
            raise RadiusOutOfRange(f"sphere of radius {rho:.4g} leaves the grid")
        nodes, inv = np.unique(np.maximum(idx, 0), return_inverse=True)
        gn, Hn = self._derivatives(nodes)
        inv = inv.reshape(idx.shape)
        g = np.einsum("pc,pcj->pj", wts, gn[inv])
        H = np.einsum("pc,pcjk->pjk", wts, Hn[inv])
        if np.isnan(g).any() or np.isnan(H).any():
            raise RadiusOutOfRange(f"sphere of radius {rho:.4g} leaves the region with derivative data")
        C = _cofactor(H)
        integrand = np.einsum("pj,pjk,pk->p", g, C, nu).real
        return float(np.sum(w * integrand) / (2 * dom.n))


def sphere_flux(u: ComplexGrid, center, rho: float, base_potential=None, m: int = 64) -> float:
    """Monge-Ampere mass of ``B(center, rho)`` from the divergence form on its boundary."""
    return _FluxField(u, base_potential).flux(center, rho, m)


def _core_radius(u: ComplexGrid, center) -> float:
    dom = u.domain
    ex = u.nodes(EXCISED)
    if not len(ex):
        return 0.0
    d = np.linalg.norm(dom.node_points(ex) - np.asarray(center)[None, :], axis=1)
    near = d < 0.5 * dom.scale
    return float(d[near].max()) if near.any() else 0.0


def min_flux_radius(u: ComplexGrid, center) -> float:
    """Smallest radius whose sphere keeps derivative stencils clear of the core."""
    h = u.domain.h
    return _core_radius(u, center) + h * (2 + np.sqrt(2 * u.domain.n))


def annulus_mass(u: ComplexGrid, pole, r: float, base=None, base_potential=None,
                 inner: float | None = None, r_max: float | None = None) -> float:
    """Monge-Ampere mass of ``B(pole, r)`` for a function with an excised core.

    The density is integrated over the annulus ``inner <= |z - pole| < r``
    by node quadrature and the core contribution is added as the flux
    through the inner sphere.

    Parameters
    ----------
    u : ComplexGrid
    pole : array_like, shape (n,)
    r : float
        Outer radius; must exceed the inner one and, when ``r_max`` is
        given (typically the pole's ``r_in``), must not exceed it.
    base : HermitianField, optional
        Background form for the density.
    base_potential : callable, optional
        Potential of the background form, used by the flux term.
    inner : float, optional
        Inner radius; defaults to :func:`min_flux_radius`.

    Raises
    ------
    RadiusOutOfRange
    """
    pole = np.atleast_1d(np.asarray(pole, dtype=complex))
    r0 = min_flux_radius(u, pole) if inner is None else float(inner)
    if not r > r0 or (r_max is not None and r > r_max * (1 + 1e-12)):
        raise RadiusOutOfRange(f"radius {r:.4g} outside ({r0:.4g}, {r_max if r_max else np.inf:.4g}]")
    dens = ma_density(u, base)
    dom = u.domain

    def ring(z):
        d = np.linalg.norm(z - pole[None, :], axis=1)
        return (d >= r0) & (d < r)

    vol = integrate(dens, ring)
    return vol + sphere_flux(u, pole, r0, base_potential)


def pole_mass(u: ComplexGrid, pole, radii, base_potential=None):
    """Flux masses on a set of radii and their linear extrapolation to ``r = 0``.

    Returns
    -------
    mass0 : float
    masses : ndarray
    """
    F = _FluxField(u, base_potential)
    radii = np.asarray(radii, dtype=float)
    masses = np.array([F.flux(pole, r) for r in radii])
    if len(radii) == 1:
        return float(masses[0]), masses
    A = np.column_stack([np.ones_like(radii), radii])
    coef, *_ = np.linalg.lstsq(A, masses, rcond=None)
    return float(coef[0]), masses


# -------------------------------------------------- Dirac normalisation
@lru_cache(maxsize=8)
def measure_dirac_constant(n: int, resolution: int | None = None) -> float:
    """``c_n`` with ``det(ddbar log|z|^2) dV = c_n delta_0``, by flux quadrature.

    ``log|z|^2`` is sampled on a grid with a small excised core. The
    centred-difference error of the flux decays like ``(h/r)^2``, so the
    fluxes on several radii are fitted by ``c + b r^-2`` and ``c`` is kept.
    """
    if n == 1:
        dom = DomainSpec("disk", (1.0,), resolution or 256)
    else:
        dom = DomainSpec("ball", (1.0,), resolution or 32)
    h = dom.h
    u = grid_from_function(dom, lambda z: np.log(np.sum(np.abs(z) ** 2, axis=1)),
                           cores=[(np.zeros(n), 2 * h)])
    F = _FluxField(u)
    radii = np.linspace(max(0.45, min_flux_radius(u, np.zeros(n)) + h), 0.85, 5)
    flux = np.array([F.flux(np.zeros(n), r, m=128) for r in radii])
    A = np.column_stack([np.ones_like(radii), radii ** -2])
    coef, *_ = np.linalg.lstsq(A, flux, rcond=None)
    return float(coef[0])


def dirac_constant(n: int) -> float:
    return measure_dirac_constant(n)


# ----------------------------------------------------------- Lelong
@dataclass
class LelongEstimate:
    """Slope of ``max_{|z-p|=r} u`` against ``log r^2`` over a radii ladder."""

    pole_index: int
    radii: np.ndarray
    slope: float
    intercept: float
    fit_residual: float
    maxima: np.ndarray
    convention: str = "nu(u, p) = lim_{r->0} max_{|z-p|=r} u / log r^2"

    @property
    def nu(self) -> float:
        return self.slope


def sphere_samples(n: int, m: int = 32) -> np.ndarray:
    """Unit vectors covering the sphere, including the coordinate axes."""
    if n == 1:
        return np.exp(2j * np.pi * np.arange(m) / m)[:, None]
    s = np.linspace(0.0, 1.0, m // 2 + 1)
    ang = 2 * np.pi * np.arange(m) / m
    S, A, B = np.meshgrid(s, ang, ang, indexing="ij")
    return np.stack([np.sqrt(1 - S) * np.exp(1j * A), np.sqrt(S) * np.exp(1j * B)], axis=-1).reshape(-1, 2)


def dyadic_ladder(r_top: float, r_bottom: float) -> np.ndarray:
    radii = [r_top]
    while radii[-1] / 2 >= r_bottom * (1 - 1e-12):
        radii.append(radii[-1] / 2)
    return np.array(radii)


def lelong_number(u, pole, r_in: float | None = None, excision_radius: float | None = None,
                  r_min: float | None = None, pole_index: int = 0, samples: int = 32) -> LelongEstimate:
    """Lelong number at ``pole`` by regression over a dyadic radii ladder.

    Parameters
    ----------
    u : ComplexGrid or callable
        A grid is interpolated on the spheres; a callable maps points
        ``(k, n)`` to values.
    pole : array_like, shape (n,)
    r_in : float
        Top rung of the ladder.
    excision_radius : float, optional
        For grids, the ladder stops at ``4 * excision_radius`` (defaults to
        the measured core radius).
    r_min : float, optional
        Bottom rung for callables; defaults to ``r_in / 32``.

    Raises
    ------
    InsufficientRadii
        Fewer than four rungs fit between the bounds.
    """
    pole = np.atleast_1d(np.asarray(pole, dtype=complex))
    n = len(pole)
    if r_in is None:
        raise InsufficientRadii("r_in is required to build the radii ladder")
    if isinstance(u, ComplexGrid):
        exc = _core_radius(u, pole) if excision_radius is None else excision_radius
        bottom = max(4 * exc, 2 * u.domain.h)
        evaluate = lambda z: _interp(u.domain, _valued(u), z)  # noqa: E731
    else:
        bottom = r_in / 32 if r_min is None else r_min
        evaluate = lambda z: np.asarray(u(z), dtype=float).reshape(len(z))  # noqa: E731
    radii = dyadic_ladder(r_in, bottom)
    if len(radii) < 4:
        raise InsufficientRadii(f"only {len(radii)} dyadic rungs between {r_in:.4g} and {bottom:.4g}")
    dirs = sphere_samples(n, samples)
    maxima = np.empty(len(radii))
    for i, r in enumerate(radii):
        vals = evaluate(pole[None, :] + r * dirs)
        if np.isnan(vals).any():
            raise StencilOutOfDomain(f"values missing on the sphere of radius {r:.4g}")
        maxima[i] = vals.max()
    x = np.log(radii ** 2)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, maxima, rcond=None)
    fit = A @ coef - maxima
    return LelongEstimate(pole_index, radii, float(coef[0]), float(coef[1]),
                          float(np.sqrt(np.mean(fit ** 2))), maxima)


def remainder_oscillation(u, pole, eps: float, sum_sq, radii, samples: int = 32) -> float:
    """Oscillation of ``u - eps log sum|f|^2`` over the spheres of a ladder."""
    pole = np.atleast_1d(np.asarray(pole, dtype=complex))
    dirs = sphere_samples(len(pole), samples)
    vals = []
    for r in radii:
        z = pole[None, :] + r * dirs
        S = sum_sq(z - pole[None, :])
        ok = S > 0
        vals.append(np.asarray(u(z[ok])) - eps * np.log(S[ok]))
    v = np.concatenate(vals)
    return float(v.max() - v.min())


def mass_obstruction_check(k: int, nu: float, tol: float = 0.05) -> bool:
    """Whether a slice Lelong number fits under unit slice mass.

    A Green's function slice on a unit-volume factor with Lelong number
    ``nu`` has Monge-Ampere mass at least ``nu``, so it can only exist when
    ``nu <= 1`` (for the model singularity this reads ``eps <= 1/k``).
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not np.isfinite(nu):
        raise ValueError("Lelong number must be finite")
    return bool(nu <= 1.0 + tol)


def slice_lelong(u, pole, r_in: float, r_min: float | None = None, samples: int = 32):
    """Largest Lelong number of the restrictions of ``u`` to the coordinate lines through ``pole``.

    Parameters
    ----------
    u : callable
        Points ``(k, n)`` to values (for example a Green's function callable).

    Returns
    -------
    nu : float
    per_axis : list of float
    """
    pole = np.atleast_1d(np.asarray(pole, dtype=complex))
    n = len(pole)
    per_axis = []
    for j in range(n):
        def restricted(w, j=j):
            z = np.repeat(pole[None, :], len(w), axis=0)
            z[:, j] = w[:, 0]
            return u(z)

        est = lelong_number(restricted, pole[j:j + 1], r_in=r_in, r_min=r_min, samples=samples)
        per_axis.append(est.nu)
    return float(max(per_axis)), per_axis


def obstruction_flags(problem, G, tol: float = 0.05) -> list:
    """Slice Lelong estimate and :func:`mass_obstruction_check` outcome for each pole."""
    rows = []
    for m, P in enumerate(problem.singularities.poles):
        try:
            nu, axes = slice_lelong(G, P.position, P.r_in)
        except (InsufficientRadii, StencilOutOfDomain) as exc:
            rows.append({"pole": m, "k": P.order, "slice_nu": None, "ok": None, "note": str(exc)})
            continue
        rows.append({"pole": m, "k": P.order, "slice_nu": nu, "per_axis": axes,
                     "ok": mass_obstruction_check(P.order, nu, tol)})
    return rows


# ------------------------------------------------------------- ledger
@dataclass
class MassLedger:
    """Split of a Monge-Ampere mass into absolutely continuous and pole parts."""

    total_mass: float
    pole_masses: list = field(default_factory=list)
    ac_mass: float = 0.0
    normalization_constant: float = float("nan")
    normalization_source: str = "measured by flux quadrature of log|z|^2"
    extra: dict = field(default_factory=dict)

    def discrepancy(self) -> float:
        return abs(self.total_mass - self.ac_mass - sum(m for _, m in self.pole_masses))

    def balanced(self, tol: float = 1e-2) -> bool:
        return self.discrepancy() <= tol * max(1.0, abs(self.total_mass))

    def to_dict(self) -> dict:
        return {"total_mass": self.total_mass, "ac_mass": self.ac_mass,
                "pole_masses": [[int(i), float(m)] for i, m in self.pole_masses],
                "normalization_constant": self.normalization_constant,
                "normalization_source": self.normalization_source,
                "discrepancy": self.discrepancy(), **self.extra}


def green_mass_ledger(problem, report, obstruction: bool = True) -> MassLedger:
    """Mass ledger of an assembled Green's function.

    The absolutely continuous part is the density integral off the pole
    balls ``B(p_m, r_in)`` and off a boundary layer of width
    ``(3 + sqrt(2n)) h``; each pole mass is the flux through its sphere
    of radius ``r_in``; the total is the flux through the sphere just
    inside the boundary for disks and balls (otherwise the sum of parts).
    With ``obstruction`` the slice Lelong estimates of each pole are
    checked against unit slice mass and violations are flagged in
    ``extra['obstruction_violated']``.
    """
    dom = problem.domain
    G = report.green
    q = problem.base_potential
    base = HermitianField(dom, problem.base_matrix(dom.all_points()))
    dens = ma_density(G, base)
    poles = problem.singularities.poles
    F = _FluxField(G, q)

    layer = dom.h * (3 + np.sqrt(2 * dom.n))

    def off_poles(z):
        # boundary nodes hold exact data, so the layer next to them carries a spurious ring
        keep = dom.depth(z) >= layer
        for P in poles:
            keep &= np.linalg.norm(z - P.position[None, :], axis=1) >= P.r_in
        return keep

    ac = integrate(dens, off_poles)
    pm = [(m, F.flux(P.position, P.r_in)) for m, P in enumerate(poles)]
    total = ac + sum(v for _, v in pm)
    if dom.kind in ("disk", "ball"):
        try:
            total = F.flux(np.zeros(dom.n), dom.radii[0] - layer)
        except RadiusOutOfRange:
            pass
    extra = {"negative_nodes": dens.meta["negative_nodes"], "reference_volume": dom.volume()}
    if obstruction and poles:
        flags = obstruction_flags(problem, report.green_callable(problem))
        extra["obstruction"] = flags
        extra["obstruction_violated"] = any(f["ok"] is False for f in flags)
    return MassLedger(total, pm, ac, dirac_constant(dom.n), extra=extra)
