"""Rotation-invariant geodesic rays on P^1 from central-fibre singularities.

On ``X = P^1`` with the Fubini-Study potential ``log(1 + |z|^2)`` and the
punctured disk in ``w``, an ``S^1 x S^1``-invariant potential is a function
``u(s, t)`` of ``s = log|z|^2`` and ``t = log|w|``. Plurisubharmonicity is
convexity in ``(s, t)`` and the homogeneous equation becomes the real one,
``u_ss u_tt = u_st^2``. The geodesic equation for ``phi_t = u(., t) - log(1 + e^s)``
reads ``u_tt - u_st^2 / u_ss = 0``.

On the truncated strip ``-T <= t <= 0`` the largest convex function below
the end data ``g_0`` (at ``t = 0``) and ``g_T`` (at ``t = -T``) is the
inf-convolution of the two traces, so its Legendre transform in ``s`` is
affine in ``t``:

    u(., t)^* = lam g_0^* + (1 - lam) g_T^*,   lam = (t + T) / T.

The Fubini-Study trace has the entropy ``p log p + (1 - p) log(1 - p)`` as
its transform on the moment interval ``[0, 1]``; the singular trace is
transformed numerically. The slope variable is parametrised by its logit
so that slopes near 0 and 1 are resolved.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleProblem, SymmetryViolation
from .singularity import CutoffProfile, Polynomial


def _to_polynomial(text: str) -> Polynomial:
    t = re.sub(r"\bz\b", "z1", str(text))
    t = re.sub(r"\bw\b", "z2", t)
    p = Polynomial.parse(t, 2)
    p.text = str(text)
    return p


@dataclass
class RayPole:
    """Central-fibre pole at ``z = 0`` or ``z = inf`` (the torus-fixed points of ``P^1``).

    ``f`` holds polynomials in ``z`` and ``w``; at ``inf`` the variable ``z``
    stands for the chart coordinate ``1/z``.
    """

    at: str = "0"
    f: tuple = ("z", "w")
    epsilon: float = 0.2

    def __post_init__(self):
        if self.at not in ("0", "inf"):
            raise SymmetryViolation("rotation-invariant poles sit at z = 0 or z = inf")
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        self.polys = [_to_polynomial(t) for t in self.f]
        self.z_degree = max(k[0] for p in self.polys for k in p.terms)

    def sum_sq(self, zw) -> np.ndarray:
        return sum(np.abs(p(zw)) ** 2 for p in self.polys)


@dataclass
class RayProblem:
    """Truncated ray problem on ``P^1 x {e^-T < |w| < 1}``.

    Parameters
    ----------
    T : float
        Annulus depth.
    poles : list of RayPole
    r_in, r_out : float
        Cutoff radii in ``|w|`` of the glued singular potential,
        ``r_out < 1`` so that the trace at ``|w| = 1`` vanishes.
    resolution : int
        Grid points along ``t``; ``s`` uses twice as many over ``s_range``.
    s_range : tuple, optional
        Reported window in ``s``; defaults to ``(-2T - 6, 2T + 6)``.
    """

    T: float = 3.0
    poles: list = field(default_factory=list)
    r_in: float = 0.5
    r_out: float = 0.9
    resolution: int = 64
    s_range: tuple | None = None
    fine: int = 16001
    slopes: int = 6001

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not 0 < self.r_in < self.r_out < 1:
            raise ValueError("cutoff radii need 0 < r_in < r_out < 1")
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")
        if len({P.at for P in self.poles}) != len(self.poles):
            raise InfeasibleProblem("two poles share a central-fibre point")
        self.cutoff = CutoffProfile(self.r_in, self.r_out)
        if self.s_range is None:
            self.s_range = (-2 * self.T - 6.0, 2 * self.T + 6.0)
        check_symmetry(self)

    def singular_potential(self, s, t) -> np.ndarray:
        """Glued ``sum eps chi(|w|) [log sum|f|^2 - d log(1 + |z|^2)]`` at real points ``(s, t)``.

        ``d`` is the top degree of ``f`` in the pole-chart variable, which
        makes the bracket a bounded function on ``P^1`` away from the pole.
        The cutoff acts in ``|w|`` alone and vanishes at ``|w| = 1``.
        """
        s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
        out = np.zeros(s.shape)
        chi = self.cutoff.q(np.exp(t))
        live = chi > 0
        if not live.any():
            return out
        for P in self.poles:
            sl = (s if P.at == "0" else -s)[live]
            zw = np.stack([np.exp(0.5 * sl), np.exp(t[live])], axis=-1).astype(complex)
            vals = np.log(P.sum_sq(zw)) - P.z_degree * np.logaddexp(0.0, sl)
            out[live] += P.epsilon * chi[live] * vals
        return out

    def trace_outer(self, s):
        return np.logaddexp(0.0, s)

    def trace_inner(self, s):
        return np.logaddexp(0.0, s) + self.singular_potential(s, -self.T)


def check_symmetry(P: RayProblem, samples: int = 64, seed: int = 0):
    """Sampled check that each ``sum|f|^2`` depends on ``(|z|, |w|)`` only.

    Raises
    ------
    SymmetryViolation
    """
    rng = np.random.default_rng(seed)
    for pole in P.poles:
        zw = (rng.uniform(0.05, 0.9, (samples, 2)) * np.exp(2j * np.pi * rng.random((samples, 2))))
        rot = zw * np.exp(2j * np.pi * rng.random((samples, 2)))
        a, b = pole.sum_sq(zw), pole.sum_sq(rot)
        if np.max(np.abs(a - b) / np.maximum(1e-300, np.abs(a))) > 1e-10:
            raise SymmetryViolation(f"sum |f|^2 of the pole at {pole.at} is not rotation invariant")
        if np.min(pole.sum_sq(np.array([[0.0, 0.3], [0.3, 0.0], [0.2, 0.2]], dtype=complex))) <= 0:
            raise SymmetryViolation("f has common zeros off the central-fibre point")


def ray_feasible_epsilon(P: RayProblem, samples: int = 48, step: float = 1e-3,
                         augmentation: float = 1.0) -> float:
    """Largest uniform scaling ``delta`` of the weights keeping ``omega_delta > 0`` on samples.

    ``omega = omega_FS + A (i/2) d dbar |w|^2`` with ``A = augmentation``. For invariant functions of
    ``(s, x)`` with ``x = log|w|^2`` the coefficient matrix of the form is
    ``diag(1/|z|, 1/|w|) Hess diag(1/|z|, 1/|w|)``, so positivity is that
    of the real Hessian rescaled. Samples cover ``s_range`` times
    ``e^-T <= |w| <= r_out``; the returned value scales the pole weights.
    """
    if not P.poles:
        return float("inf")
    ss = np.linspace(P.s_range[0], P.s_range[1], 2 * samples)
    xs = 2 * np.linspace(-P.T, np.log(P.r_out), samples)
    S, Xw = np.meshgrid(ss, xs, indexing="ij")
    X = np.stack([S.ravel(), Xw.ravel()], axis=1)

    def hess(F):
        e1, e2 = np.array([step, 0.0]), np.array([0.0, step])
        f0 = F(X)
        fss = (F(X + e1) - 2 * f0 + F(X - e1)) / step ** 2
        fxx = (F(X + e2) - 2 * f0 + F(X - e2)) / step ** 2
        fsx = (F(X + e1 + e2) - F(X + e1 - e2) - F(X - e1 + e2) + F(X - e1 - e2)) / (4 * step ** 2)
        return fss, fsx, fxx

    q = hess(lambda Y: np.logaddexp(0.0, Y[:, 0]) + augmentation * np.exp(Y[:, 1]))
    g = hess(lambda Y: P.singular_potential(Y[:, 0], 0.5 * Y[:, 1]))
    sz, sw = np.exp(-0.5 * X[:, 0]), np.exp(-0.5 * X[:, 1])

    def ok(d):
        a = (q[0] + d * g[0]) * sz ** 2
        b = (q[1] + d * g[1]) * sz * sw
        c = (q[2] + d * g[2]) * sw ** 2
        return bool(np.all(a > 0) and np.all(a * c - b * b > 0))

    if not ok(1.0):
        lo, hi = 0.0, 1.0
    else:
        lo, hi = 1.0, 2.0
        while ok(hi) and hi < 2.0 ** 20:
            lo, hi = hi, 2 * hi
        if hi >= 2.0 ** 20:
            return float("inf")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def gate_augmentation(P: RayProblem, max_power: int = 20):
    """Least ``A = 2^k`` for which the weights pass the ``omega_delta`` gate.

    The term ``A |w|^2`` only enters the positivity check; the solved
    potential keeps the Fubini-Study trace as its background.

    Raises
    ------
    InfeasibleProblem
        No ``A`` up to ``2^max_power`` works.
    """
    best = 0.0
    for k in range(max_power + 1):
        A = 2.0 ** k
        feas = ray_feasible_epsilon(P, augmentation=A)
        best = max(best, feas)
        if feas >= 1.0:
            return A, feas
    raise InfeasibleProblem(f"pole weights exceed the feasible scaling ({best:.4g} < 1)")


# ------------------------------------------------------------- Legendre
def _expit(q):
    return 0.5 * (1 + np.tanh(0.5 * q))


def _refined_max(V, x):
    """Row-wise maximum of samples ``V`` on a uniform grid ``x`` with parabolic refinement."""
    k = np.argmax(V, axis=-1)
    rows = np.arange(V.shape[0])
    kk = np.clip(k, 1, V.shape[1] - 2)
    a, b, c = V[rows, kk - 1], V[rows, kk], V[rows, kk + 1]
    den = a - 2 * b + c
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(den < 0, 0.5 * (a - c) / den, 0.0)
    off = np.clip(off, -0.5, 0.5)
    best = b - 0.25 * (a - c) * off
    interior = (k == kk)
    dx = x[1] - x[0]
    return np.where(interior, best, V[rows, k]), x[kk] + np.where(interior, off, 0.0) * dx


def _entropy(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((p > 0) & (p < 1), p * np.log(p) + (1 - p) * np.log1p(-p), 0.0)


@dataclass
class RayResult:
    s: np.ndarray
    t: np.ndarray
    u: np.ndarray
    Phi: np.ndarray
    slices: list
    info: dict

    def slice_function(self, k):
        """``phi_t`` of slice ``k`` as a function of ``z`` (rotation invariant by construction)."""
        t, vals = self.slices[k]

        def phi(z):
            sz = np.log(np.abs(np.asarray(z)) ** 2)
            return np.interp(sz, self.s, vals)

        return phi


def _transform_inner(P: RayProblem, q):
    """``g_T^*`` at slopes ``p = expit(q)`` by a discrete maximum over a wide ``s`` window.

    Also returns the maximising ``s`` for each slope.
    """
    a, b = P.s_range
    pad = 2 * P.T + 40.0
    s = np.linspace(a - pad, b + pad, P.fine)
    g = P.trace_inner(s)
    p = _expit(q)
    out = np.empty(len(p))
    arg = np.empty(len(p))
    step = max(1, 4_000_000 // len(s))
    for i in range(0, len(p), step):
        V = p[i:i + step, None] * s[None, :] - g[None, :]
        out[i:i + step], arg[i:i + step] = _refined_max(V, s)
    return out, arg


class ReducedEnvelope:
    """Legendre data of the two traces; evaluates ``u(s, t)`` at any ``t`` in ``[-T, 0]``."""

    def __init__(self, P: RayProblem):
        self.P = P
        qmax = 0.5 * (P.s_range[1] - P.s_range[0]) + 20.0
        self.q = np.linspace(-qmax, qmax, P.slopes)
        self.p = _expit(self.q)
        self.g0 = _entropy(self.p)
        self.g1, self.s1 = _transform_inner(P, self.q)

    def __call__(self, s, t) -> np.ndarray:
        """``u(s, t)``.

        The discrete maximum over slopes is a lower bound. Its maximiser
        also fixes the split ``s = lam s_0 + (1 - lam) s_1`` of the
        inf-convolution, whose objective is stationary there. Evaluating
        that objective exactly gives an upper bound with quadratic error,
        which is used unless the two bounds disagree (convexified traces).
        """
        s = np.atleast_1d(np.asarray(s, float))
        P = self.P
        if t >= 0:
            return P.trace_outer(s)
        lam = (t + P.T) / P.T
        h = lam * self.g0 + (1 - lam) * self.g1
        lower = np.empty(len(s))
        qs = np.empty(len(s))
        step = max(1, 2_000_000 // len(self.q))
        for i in range(0, len(s), step):
            V = self.p[None, :] * s[i:i + step, None] - h[None, :]
            lower[i:i + step], qs[i:i + step] = _refined_max(V, self.q)
        if lam <= 0:
            upper = P.trace_inner(s)
        else:
            s1 = np.interp(qs, self.q, self.s1)
            s0 = (s - (1 - lam) * s1) / lam
            upper = lam * P.trace_outer(s0) + (1 - lam) * P.trace_inner(s1)
        return np.where(upper - lower < 1e-6, upper, lower)


def solve_ray(P: RayProblem, slice_count: int = 7) -> RayResult:
    """Reduced envelope on ``[s_lo, s_hi] x [-T, 0]`` and its time slices.

    Parameters
    ----------
    slice_count : int
        Number of equispaced slice times in ``[-T/2, 0]``.

    Returns
    -------
    RayResult
        ``u`` is the total potential on the grid, ``Phi = u - log(1 + e^s)``;
        ``slices`` holds ``(t, phi_t)`` on the ``s`` grid. ``info`` carries
        the geodesic residual, the fibrewise minimum of ``u_ss`` and the
        midpoint-convexity violation.
    """
    t0 = time.perf_counter()
    A, feas = getattr(P, "gate", None) or gate_augmentation(P)
    Nt = P.resolution + 1
    Ns = 2 * P.resolution + 1
    s = np.linspace(*P.s_range, Ns)
    t = np.linspace(-P.T, 0.0, Nt)
    env = ReducedEnvelope(P)
    u = np.stack([env(s, ti) for ti in t])
    g0 = P.trace_outer(s)
    Phi = u - g0[None, :]
    slices = [(float(ti), env(s, ti) - g0) for ti in np.linspace(-P.T / 2, 0.0, slice_count)]
    info = {"feasible_scaling": feas, "augmentation": A, "seconds": time.perf_counter() - t0,
            "fiber_min_uss": fiber_min_second_derivative(s, u),
            "convexity_violation": midpoint_convexity_violation(u),
            "geodesic_residual": geodesic_residual(s, t, u)}
    return RayResult(s, t, u, Phi, slices, info)


# ------------------------------------------------------------ diagnostics
def geodesic_residual(s, t, u, window=None, floor: float = 1e-2) -> float:
    """Max of ``|u_tt - u_st^2 / u_ss|`` by centred differences at smooth samples.

    Samples are interior nodes inside ``window = (s_lo, s_hi, t_lo, t_hi)``
    (default: the middle half in both variables) with ``u_ss > floor``.
    """
    hs, ht = s[1] - s[0], t[1] - t[0]
    uss = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / hs ** 2
    utt = (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / ht ** 2
    ust = (u[2:, 2:] - u[2:, :-2] - u[:-2, 2:] + u[:-2, :-2]) / (4 * hs * ht)
    S, Tm = np.meshgrid(s[1:-1], t[1:-1])
    if window is None:
        a, b = s[0] + 0.25 * (s[-1] - s[0]), s[-1] - 0.25 * (s[-1] - s[0])
        c, d = t[0] + 0.25 * (t[-1] - t[0]), t[-1] - 0.25 * (t[-1] - t[0])
    else:
        a, b, c, d = window
    sel = (S >= a - 1e-12) & (S <= b + 1e-12) & (Tm >= c - 1e-12) & (Tm <= d + 1e-12) & (uss > floor)
    if not sel.any():
        return 0.0
    res = utt[sel] - ust[sel] ** 2 / uss[sel]
    return float(np.max(np.abs(res)))


def fiber_min_second_derivative(s, u) -> float:
    """Smallest ``u_ss`` over the grid; ``phi_t`` is ``omega_FS``-psh iff it is ``>= 0``."""
    hs = s[1] - s[0]
    return float(np.min((u[:, 2:] - 2 * u[:, 1:-1] + u[:, :-2]) / hs ** 2))


def midpoint_convexity_violation(u, max_step: int = 4) -> float:
    """Largest ``u(mid) - (u(a) + u(b)) / 2`` over grid segments with integer offsets."""
    worst = -np.inf
    Nt, Ns = u.shape
    for di in range(0, max_step + 1):
        for dj in range(-max_step, max_step + 1):
            if (di, dj) <= (0, 0):
                continue
            i0, i1 = max(0, -2 * di), Nt - max(0, 2 * di)
            j0, j1 = max(0, -2 * dj), Ns - max(0, 2 * dj)
            if i1 - i0 <= 0 or j1 - j0 <= 0:
                continue
            a = u[i0:i1, j0:j1]
            m = u[i0 + di:i1 + di, j0 + dj:j1 + dj]
            b = u[i0 + 2 * di:i1 + 2 * di, j0 + 2 * dj:j1 + 2 * dj]
            worst = max(worst, float(np.max(m - 0.5 * (a + b))))
    return worst


def ray_nontriviality(slices) -> float:
    """Min over consecutive slices of ``sup |phi_t - phi_t'|``.

    Parameters
    ----------
    slices : sequence of (t, values) or of arrays
    """
    vals = [np.asarray(v[1] if isinstance(v, tuple) else v, dtype=float) for v in slices]
    if len(vals) < 3:
        raise ValueError("need at least three slices")
    return float(min(np.max(np.abs(b - a)) for a, b in zip(vals, vals[1:])))
