"""Domains, sample grids, discrete complex Hessians and direction Laplacians.

Conventions
-----------
A point of C^n is stored as a complex vector ``(z_1, ..., z_n)``; grids are
laid out over the real axes ``(x_1, y_1, ..., x_n, y_n)`` in that order with
``indexing='ij'``. Hermitian matrices are coefficient matrices of
``(i/2) d dbar``, so ``|z|^2`` has the identity as its matrix and entry
``(j, k)`` approximates ``d^2 u / dz_j dzbar_k``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidDomain, StencilOutOfDomain

INTERIOR, BOUNDARY, EXCISED, OUTSIDE = 0, 1, 2, 3

_KIND_DIM = {"disk": 1, "annulus": 1, "ball": 2, "polydisk": 2}
KINDS = ("disk", "annulus", "ball", "polydisk", "torus")


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of a computational domain centred at the origin.

    Parameters
    ----------
    kind : {'disk', 'annulus', 'ball', 'polydisk', 'torus'}
    radii : tuple of float
        ``(R,)`` for disk and ball, ``(r_inner, R)`` for an annulus,
        ``(R_1, R_2)`` for a polydisk and ``(period,)`` for a square torus.
    resolution : int
        Grid points per real axis across the extent (at least 16).
    dim : int, optional
        Complex dimension; only needed for tori (defaults to 1).
    """

    kind: str
    radii: tuple
    resolution: int
    dim: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidDomain(f"unknown domain kind {self.kind!r}")
        radii = tuple(float(r) for r in np.atleast_1d(self.radii))
        object.__setattr__(self, "radii", radii)
        if not all(np.isfinite(r) and r > 0 for r in radii):
            raise InvalidDomain("radii/periods must be positive")
        want = {"disk": 1, "ball": 1, "annulus": 2, "polydisk": 2, "torus": 1}[self.kind]
        if len(radii) != want:
            raise InvalidDomain(f"{self.kind} takes {want} radii, got {len(radii)}")
        if self.kind == "annulus" and not radii[0] < radii[1]:
            raise InvalidDomain("annulus needs inner radius < outer radius")
        if int(self.resolution) != self.resolution or self.resolution < 16:
            raise InvalidDomain("resolution must be an integer >= 16")
        object.__setattr__(self, "resolution", int(self.resolution))
        if self.kind == "torus":
            d = 1 if self.dim is None else int(self.dim)
            if d not in (1, 2):
                raise InvalidDomain("torus dimension must be 1 or 2")
            object.__setattr__(self, "dim", d)
        else:
            d = _KIND_DIM[self.kind]
            if self.dim is not None and int(self.dim) != d:
                raise InvalidDomain(f"{self.kind} has complex dimension {d}")
            object.__setattr__(self, "dim", d)

    @property
    def n(self) -> int:
        return self.dim

    @property
    def strongly_pseudoconvex(self) -> bool:
        return self.kind in ("disk", "ball")

    @property
    def boundaryless(self) -> bool:
        return self.kind == "torus"

    @property
    def periodic(self) -> bool:
        return self.kind == "torus"

    @property
    def scale(self) -> float:
        return max(self.radii)

    @property
    def extent(self) -> float:
        return self.radii[0] if self.periodic else 2.0 * max(self.radii)

    @property
    def h(self) -> float:
        return self.extent / self.resolution

    @property
    def pad(self) -> int:
        return 0 if self.periodic else 2

    @property
    def axis(self) -> np.ndarray:
        N, h = self.resolution, self.h
        if self.periodic:
            return np.arange(N) * h
        return -0.5 * self.extent + (np.arange(-self.pad, N + self.pad) + 0.5) * h

    @property
    def shape(self) -> tuple:
        return (len(self.axis),) * (2 * self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> np.ndarray:
        m = len(self.axis)
        d = 2 * self.n
        return np.array([m ** (d - 1 - a) for a in range(d)], dtype=np.int64)

    def volume(self) -> float:
        """Lebesgue volume of the domain."""
        R = self.radii
        if self.kind == "disk":
            return np.pi * R[0] ** 2
        if self.kind == "annulus":
            return np.pi * (R[1] ** 2 - R[0] ** 2)
        if self.kind == "ball":
            return np.pi ** 2 / 2 * R[0] ** 4
        if self.kind == "polydisk":
            return np.pi ** 2 * R[0] ** 2 * R[1] ** 2
        return R[0] ** (2 * self.n)

    def depth(self, z) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        z = np.atleast_2d(z)
        R = self.radii
        if self.kind in ("disk", "ball"):
            return R[0] - np.linalg.norm(z, axis=1)
        if self.kind == "annulus":
            r = np.abs(z[:, 0])
            return np.minimum(R[1] - r, r - R[0])
        if self.kind == "polydisk":
            return np.minimum(R[0] - np.abs(z[:, 0]), R[1] - np.abs(z[:, 1]))
        return np.full(len(z), np.inf)

    def project(self, z):
        """Nearest boundary point and outward unit normal for each point.

        Returns
        -------
        proj : ndarray, shape (k, n), complex
        normal : ndarray, shape (k, n), complex
        depth : ndarray, shape (k,)
        """
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        if self.periodic:
            raise InvalidDomain("a torus has no boundary")
        R = self.radii
        dep = self.depth(z)
        if self.kind in ("disk", "ball"):
            r = np.linalg.norm(z, axis=1)
            u = _unit(z, r)
            return u * R[0], u, dep
        if self.kind == "annulus":
            r = np.abs(z[:, 0])
            u = _unit(z, r)
            outer = (R[1] - r) <= (r - R[0])
            proj = np.where(outer[:, None], u * R[1], u * R[0])
            normal = np.where(outer[:, None], u, -u)
            return proj, normal, dep
        proj = z.copy()
        normal = np.zeros_like(z)
        which = (R[0] - np.abs(z[:, 0])) > (R[1] - np.abs(z[:, 1]))
        for j in range(2):
            sel = (which == bool(j))
            rj = np.abs(z[sel, j])
            uj = np.where(rj > 0, z[sel, j] / np.where(rj > 0, rj, 1.0), 1.0)
            proj[sel, j] = uj * R[j]
            normal[sel, j] = uj
        return proj, normal, dep

    def nodes_multi(self, idx) -> np.ndarray:
        """Multi-indices of flat node indices."""
        return np.stack(np.unravel_index(np.asarray(idx), self.shape), axis=-1)

    def node_real(self, idx) -> np.ndarray:
        """Real coordinates ``(x1, y1, ...)`` of flat node indices."""
        return self.axis[self.nodes_multi(idx)]

    def node_points(self, idx) -> np.ndarray:
        """Complex coordinates of flat node indices, shape (k, n)."""
        x = self.node_real(idx)
        return x[..., 0::2] + 1j * x[..., 1::2]

    def all_points(self) -> np.ndarray:
        return self.node_points(np.arange(self.size))

    def shift(self, idx, offset) -> np.ndarray:
        """Flat index of ``idx + offset`` (integer multi-offset).

        Periodic domains wrap; otherwise indices leaving the array are -1.
        """
        idx = np.asarray(idx, dtype=np.int64)
        off = np.asarray(offset, dtype=np.int64)
        if self.periodic:
            m = len(self.axis)
            multi = (self.nodes_multi(idx) + off) % m
            return multi @ self.strides
        multi = self.nodes_multi(idx) + off
        m = len(self.axis)
        ok = np.all((multi >= 0) & (multi < m), axis=-1)
        return np.where(ok, multi @ self.strides, -1)


def _unit(z, r):
    safe = np.where(r > 0, r, 1.0)
    u = z / safe[:, None]
    if np.any(r == 0):
        e = np.zeros(z.shape[1], dtype=complex)
        e[0] = 1.0
        u[r == 0] = e
    return u


@dataclass
class ComplexGrid:
    """Real scalar field sampled on the nodes of a domain grid.

    ``mask`` tags each node as INTERIOR, BOUNDARY (Dirichlet band),
    EXCISED (pole core, no value) or OUTSIDE (padding, no value).
    """

    domain: DomainSpec
    values: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.domain.shape)
        self.mask = np.asarray(self.mask, dtype=np.int8).reshape(self.domain.shape)

    @property
    def n(self) -> int:
        return self.domain.n

    def nodes(self, *tags) -> np.ndarray:
        return np.flatnonzero(np.isin(self.mask.ravel(), tags))

    def carrying(self) -> np.ndarray:
        """Flat indices of nodes that carry a value."""
        return self.nodes(INTERIOR, BOUNDARY)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def copy(self, values=None) -> "ComplexGrid":
        v = self.values.copy() if values is None else values
        return ComplexGrid(self.domain, v, self.mask.copy(), dict(self.meta))


@dataclass
class HermitianField:
    """Per-node Hermitian matrices over a set of grid nodes."""

    domain: DomainSpec
    matrices: np.ndarray
    nodes: np.ndarray | None = None

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=complex)
        H = self.matrices
        asym = np.abs(H - np.conj(np.swapaxes(H, -1, -2))).max(axis=(-1, -2))
        size = np.abs(H).max(axis=(-1, -2))
        if np.any(asym > 1e-12 * np.maximum(size, 1e-300)):
            raise ValueError("HermitianField matrices are not Hermitian")


def build_mask(domain: DomainSpec, cores=()) -> np.ndarray:
    """Node tags for a domain with optional excised balls.

    Parameters
    ----------
    cores : iterable of (center, radius)
        Balls ``|z - center| < radius`` removed from the computation.
    """
    pts = domain.all_points()
    mask = np.full(domain.size, INTERIOR, dtype=np.int8)
    if not domain.periodic:
        h = domain.h
        dep = domain.depth(pts)
        band = h * np.sqrt(2 * domain.n)
        mask[dep < h] = BOUNDARY
        mask[dep <= -band - 1e-12 * h] = OUTSIDE
    for c, rad in cores:
        d = _distance(domain, pts, np.asarray(c, dtype=complex))
        mask[(d < rad) & (mask != OUTSIDE)] = EXCISED
    return mask.reshape(domain.shape)


def _distance(domain, pts, c):
    diff = pts - c[None, :]
    if domain.periodic:
        L = domain.radii[0]
        re = (diff.real + L / 2) % L - L / 2
        im = (diff.imag + L / 2) % L - L / 2
        diff = re + 1j * im
    return np.linalg.norm(diff, axis=1)


def grid_from_function(domain: DomainSpec, func, cores=(), mask=None) -> ComplexGrid:
    """Sample ``func`` (complex points (k, n) -> reals) on carrying nodes."""
    mask = build_mask(domain, cores) if mask is None else mask
    vals = np.full(domain.size, np.nan)
    idx = np.flatnonzero(np.isin(mask.ravel(), (INTERIOR, BOUNDARY)))
    vals[idx] = func(domain.node_points(idx))
    return ComplexGrid(domain, vals, mask)


def _require(u: ComplexGrid, idx):
    idx = np.asarray(idx)
    if np.any(idx < 0):
        raise StencilOutOfDomain("stencil leaves the grid")
    tags = u.mask.ravel()[idx]
    if np.any((tags == EXCISED) | (tags == OUTSIDE)):
        raise StencilOutOfDomain("stencil touches an excised or outside node")
    if not np.all(np.isfinite(u.values.ravel()[idx])):
        raise StencilOutOfDomain("stencil touches a node without a finite value")


def second_difference_ops(n: int):
    """Offsets and weights of the centred real second differences.

    Returns a dict mapping ``(a, b)`` with ``a <= b`` over real axes to a
    list of ``(offset, weight)`` pairs, weights in units of ``1/h^2``.
    """
    d = 2 * n
    ops = {}
    for a in range(d):
        for b in range(a, d):
            ea = np.eye(d, dtype=int)[a]
            eb = np.eye(d, dtype=int)[b]
            if a == b:
                ops[(a, b)] = [(ea, 1.0), (-ea, 1.0), (0 * ea, -2.0)]
            else:
                ops[(a, b)] = [(ea + eb, 0.25), (ea - eb, -0.25),
                               (-ea + eb, -0.25), (-ea - eb, 0.25)]
    return ops


def hessian_coefficients(n: int):
    """Real-derivative weights composing each complex Hessian entry.

    ``u_{j kbar} = 1/4 [u_{xj xk} + u_{yj yk} + i(u_{xj yk} - u_{yj xk})]``.
    Returns a dict ``(j, k) -> list of ((a, b), complex weight)``.
    """
    out = {}
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = 2 * j, 2 * j + 1, 2 * k, 2 * k + 1
            terms = [((xj, xk), 0.25), ((yj, yk), 0.25), ((xj, yk), 0.25j), ((yj, xk), -0.25j)]
            out[(j, k)] = [((min(a, b), max(a, b)), w) for (a, b), w in terms]
    return out


def real_second_derivatives(u: ComplexGrid, idx, check: bool = True) -> dict:
    dom = u.domain
    h2 = dom.h ** 2
    flat = u.values.ravel()
    res = {}
    for key, terms in second_difference_ops(dom.n).items():
        acc = 0.0
        for off, w in terms:
            j = dom.shift(idx, off)
            if check:
                _require(u, j)
            acc = acc + w * flat[j]
        res[key] = acc / h2
    return res


def complex_hessian_at(u: ComplexGrid, idx, check: bool = True) -> np.ndarray:
    """Centred-difference complex Hessians at a set of nodes, shape (k, n, n)."""
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    n = u.domain.n
    D = real_second_derivatives(u, idx, check=check)
    H = np.empty((len(idx), n, n), dtype=complex)
    for (j, k), terms in hessian_coefficients(n).items():
        H[:, j, k] = sum(w * D[key] for key, w in terms)
    # exact Hermitian symmetry by construction of the stencils; enforce bitwise
    return 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))


def complex_hessian(u: ComplexGrid, p) -> np.ndarray:
    """Centred-difference approximation of ``d^2 u / dz_j dzbar_k`` at node ``p``.

    Parameters
    ----------
    u : ComplexGrid
    p : int or tuple of int
        Flat index or multi-index of an interior node.

    Returns
    -------
    ndarray, shape (n, n)
        Hermitian matrix.
    """
    if isinstance(p, tuple):
        p = int(np.ravel_multi_index(p, u.domain.shape))
    return complex_hessian_at(u, [p])[0]


def default_directions(n: int, count: int | None = None) -> np.ndarray:
    """Unit directions used by the direction Laplacian.

    In C^1 a single direction suffices. In C^2 the points of a Fibonacci
    lattice on the 2-sphere are lifted to unit vectors of C^2 through the
    Hopf map, giving a near-uniform sampling of the projective line.
    """
    if n == 1:
        return np.ones((1, 1), dtype=complex)
    K = 32 if count is None else int(count)
    i = np.arange(K) + 0.5
    polar = np.arccos(1 - 2 * i / K)
    azim = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(polar / 2) + 0j, np.exp(1j * azim) * np.sin(polar / 2)], axis=1)


def multilinear_corners(frac_pos):
    """Corner offsets and weights for multilinear interpolation.

    Parameters
    ----------
    frac_pos : ndarray, shape (k, d)
        Positions in index units.

    Returns
    -------
    base : ndarray, shape (k, d), int
    offsets : ndarray, shape (2**d, d), int
    weights : ndarray, shape (k, 2**d)
    """
    frac_pos = np.atleast_2d(frac_pos)
    d = frac_pos.shape[1]
    base = np.floor(frac_pos).astype(np.int64)
    fr = frac_pos - base
    offsets = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
    w = np.ones((len(frac_pos), len(offsets)))
    for a in range(d):
        w *= np.where(offsets[None, :, a] == 1, fr[:, a:a + 1], 1 - fr[:, a:a + 1])
    return base, offsets, w


@lru_cache(maxsize=64)
def _circle_kernel_cached(v_key, samples):
    v = np.array(v_key[0::2]) + 1j * np.array(v_key[1::2])
    ang = 2 * np.pi * np.arange(samples) / samples
    off = np.exp(1j * ang)[:, None] * v[None, :]
    pos = np.empty((samples, 2 * len(v)))
    pos[:, 0::2] = off.real
    pos[:, 1::2] = off.imag
    base, offs, w = multilinear_corners(pos)
    ker = {}
    for s in range(samples):
        for c in range(len(offs)):
            if w[s, c] <= 1e-15:
                continue
            key = tuple(int(x) for x in base[s] + offs[c])
            ker[key] = ker.get(key, 0.0) + w[s, c] / samples
    keys = sorted(ker)
    return tuple(keys), tuple(ker[k] for k in keys)


def circle_kernel(v, samples: int = 8):
    """Averaging kernel of ``u(p + h e^{i theta} v)`` over ``samples`` angles.

    Offsets are integer multi-offsets in grid units; weights sum to one
    and are nonnegative, which keeps the scheme monotone.
    """
    v = np.asarray(v, dtype=complex)
    key = tuple(np.round(np.column_stack([v.real, v.imag]).ravel(), 15).tolist())
    offs, w = _circle_kernel_cached(key, int(samples))
    return np.array(offs, dtype=np.int64), np.array(w)


def circle_means(u: ComplexGrid, idx, directions, samples: int = 8, check: bool = True):
    """Circle means ``(K_dirs, k)`` of ``u`` around the nodes ``idx``."""
    dom = u.domain
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    flat = u.values.ravel()
    out = np.zeros((len(directions), len(idx)))
    for k, v in enumerate(directions):
        offs, w = circle_kernel(v, samples)
        for off, wt in zip(offs, w):
            j = dom.shift(idx, off)
            if check:
                _require(u, j)
            out[k] += wt * flat[j]
    return out


def direction_laplacians(u: ComplexGrid, idx, directions=None, samples: int = 8, check=True):
    """``4/h^2 (circle mean - centre)`` per direction, shape (K_dirs, k).

    Circle points off the grid are multilinearly interpolated, which keeps
    the kernel monotone but overestimates convex functions: pluriharmonic
    quadratics give exactly zero, while ``|z|^2`` in C^1 gives
    ``2 (1 + sqrt 2)`` instead of 4 with eight samples.
    """
    dirs = default_directions(u.domain.n) if directions is None else np.atleast_2d(directions)
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    m = circle_means(u, idx, dirs, samples, check)
    return 4.0 / u.domain.h ** 2 * (m - u.values.ravel()[idx][None, :])


def min_direction_laplacian(u: ComplexGrid, p, directions=None, samples: int = 8):
    """Smallest direction Laplacian at node(s) ``p``.

    Approximates ``4 min_v v* (d dbar u) v`` over the given unit directions.

    Parameters
    ----------
    u : ComplexGrid
    p : int, tuple of int, or array of flat indices
    directions : array_like, shape (K, n), optional
        Unit vectors of C^n; defaults to :func:`default_directions`.
    samples : int
        Circle quadrature points per direction.
    """
    scalar = np.isscalar(p) or isinstance(p, tuple)
    if isinstance(p, tuple):
        p = int(np.ravel_multi_index(p, u.domain.shape))
    vals = direction_laplacians(u, np.atleast_1d(p), directions, samples).min(axis=0)
    return float(vals[0]) if scalar else vals


def interpolation_weights(domain: DomainSpec, points):
    """Corner indices and multilinear weights for arbitrary points.

    Returns ``(indices (k, 2^d), weights (k, 2^d))``; indices outside
    a nonperiodic array are -1.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    real = np.empty((len(pts), 2 * domain.n))
    real[:, 0::2] = pts.real
    real[:, 1::2] = pts.imag
    ax = domain.axis
    pos = (real - ax[0]) / domain.h
    base, offs, w = multilinear_corners(pos)
    m = len(ax)
    multi = base[:, None, :] + offs[None, :, :]
    if domain.periodic:
        multi = multi % m
        return multi @ domain.strides, w
    ok = np.all((multi >= 0) & (multi < m), axis=-1)
    return np.where(ok, multi @ domain.strides, -1), w


def interpolate(u: ComplexGrid, points, strict: bool = False) -> np.ndarray:
    """Multilinear interpolation of ``u``; NaN where a corner lacks a value."""
    idx, w = interpolation_weights(u.domain, points)
    flat = u.values.ravel()
    ok_idx = np.where(idx >= 0, idx, 0)
    tags = u.mask.ravel()[ok_idx]
    vals = flat[ok_idx]
    bad = (idx < 0) | (tags == EXCISED) | (tags == OUTSIDE) | ~np.isfinite(vals)
    bad &= w > 0
    out = np.sum(np.where(w > 0, w * np.where(bad, 0.0, vals), 0.0), axis=1)
    rowbad = bad.any(axis=1)
    if strict and rowbad.any():
        raise StencilOutOfDomain("interpolation stencil lacks values")
    out[rowbad] = np.nan
    return out
