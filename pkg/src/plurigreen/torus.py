"""Flat tori: Monge-Ampere equations with a mollified Dirac right-hand side.

On a square torus of period ``L`` in C^n the flat form is ``omega = c I``
with ``c^n L^{2n} = 1``, so ``omega^n`` has unit mass. The equation

    det(c I + H_phi) = (1 - eps) f c^n + eps delta_sigma

is solved in the zero-mean gauge. For n = 1 it is the linear problem
``Laplace(phi) = 4 (rhs - c)``, diagonalised by the discrete Fourier
transform. The symbol is that of the centred five-point Laplacian, so the
finite-difference density reproduces the right-hand side node by node
(the continuous symbol rings around a mollifier only a few cells wide). For n = 2 a bordered Newton
iteration carries the constant Lagrange multiplier that absorbs the
discrete incompatibility, with a homotopy in the right-hand side.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import GaugeFailure, InvalidDomain, NewtonDivergence, PositivityLoss
from .geometry import INTERIOR, ComplexGrid, DomainSpec, interpolate
from .measure import MassLedger, integrate, ma_density, sphere_samples
from .solver.problem import SolveReport, SolverConfig
from .solver.regularized import HessianOperator, det, positive_definite

log = logging.getLogger(__name__)

COMPAT_TOL = 1e-6


@dataclass
class TorusProblem:
    """Data for one torus solve.

    Parameters
    ----------
    n : int
        Complex dimension, 1 or 2.
    period : float
    resolution : int
        Grid points per real axis.
    density : callable or None
        Positive ``f`` with ``int f omega^n = 1``; ``None`` means ``f = 1``.
    pole : array_like
    epsilon : float
        Dirac weight in ``[0, 1)``.
    sigma : float, optional
        Mollification radius; defaults to ``4 h``.
    """

    n: int = 1
    period: float = 1.0
    resolution: int = 128
    density: object = None
    pole: object = None
    epsilon: float = 0.3
    sigma: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        self.domain = DomainSpec("torus", (self.period,), self.resolution, dim=self.n)
        self.pole = np.zeros(self.n, dtype=complex) if self.pole is None else \
            np.atleast_1d(np.asarray(self.pole, dtype=complex))
        if self.pole.shape != (self.n,):
            raise InvalidDomain("pole has the wrong dimension")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.sigma is None:
            self.sigma = 4 * self.domain.h
        if not self.domain.h < self.sigma < self.period / 2:
            raise ValueError("sigma must exceed one cell and stay below half a period")

    @property
    def c(self) -> float:
        return self.period ** (-2.0)

    @property
    def cn(self) -> float:
        return self.c ** self.n

    def f_values(self) -> np.ndarray:
        dom = self.domain
        if self.density is None:
            return np.ones(dom.size)
        f = np.asarray(self.density(dom.all_points()), dtype=float).reshape(dom.size)
        if np.any(f <= 0) or not np.all(np.isfinite(f)):
            raise ValueError("density must be finite and positive")
        return f

    def displacement(self, z) -> np.ndarray:
        """Minimum-image ``z - p``."""
        d = np.atleast_2d(z) - self.pole[None, :]
        L = self.period
        re = d.real - L * np.round(d.real / L)
        im = d.imag - L * np.round(d.imag / L)
        return re + 1j * im

    def mollifier(self, sigma=None) -> np.ndarray:
        """Smooth bump of radius ``sigma`` at the pole with unit discrete mass."""
        dom = self.domain
        sigma = self.sigma if sigma is None else sigma
        t = np.linalg.norm(self.displacement(dom.all_points()), axis=1) / sigma
        b = np.zeros(dom.size)
        inside = t < 1
        b[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
        return b / (b.sum() * dom.h ** (2 * self.n))

    def rhs(self, sigma=None) -> np.ndarray:
        """``(1 - eps) f c^n + eps delta_sigma`` at every node, after the compatibility check."""
        dom = self.domain
        f = self.f_values()
        vol = dom.h ** (2 * self.n)
        fmass = float(np.sum(f) * self.cn * vol)
        if abs(fmass - 1) > COMPAT_TOL:
            raise GaugeFailure(f"int f omega^n = {fmass:.8g}, compatibility needs 1")
        rho = (1 - self.epsilon) * f * self.cn + self.epsilon * self.mollifier(sigma)
        gap = float(np.sum(rho - self.cn) * vol)
        if abs(gap) > COMPAT_TOL:
            raise GaugeFailure(f"int (rhs - omega^n) = {gap:.3e}")
        return rho


# ------------------------------------------------------------------ n = 1
def _symbol_1d(N: int, h: float, L: float) -> np.ndarray:
    """``(4 / h^2) sin^2(k h / 2)`` for the integer modes in FFT order."""
    k = 2 * np.pi * np.fft.fftfreq(N, d=1.0 / N) / L
    return 4.0 / h ** 2 * np.sin(0.5 * k * h) ** 2


def _wavenumbers(dom: DomainSpec):
    s = _symbol_1d(dom.resolution, dom.h, dom.radii[0])
    grids = np.meshgrid(*([s] * (2 * dom.n)), indexing="ij")
    return sum(grids)


def _spectral_planar(P: TorusProblem, rho):
    dom = P.domain
    src = (4.0 * (rho - P.c)).reshape(dom.shape)
    k2 = _wavenumbers(dom)
    S = np.fft.fftn(src)
    with np.errstate(divide="ignore", invalid="ignore"):
        Phi = np.where(k2 > 0, -S / k2, 0.0)
    phi = np.fft.ifftn(Phi).real
    resid = np.fft.ifftn(-k2 * np.fft.fftn(phi)).real - (src - src.mean())
    return phi.ravel(), float(np.abs(resid).max())


def fourier_series_oracle(P: TorusProblem, probes, sigma=None) -> np.ndarray:
    """Planar solution at grid probes by explicit Fourier sums, without FFTs.

    Parameters
    ----------
    probes : array_like of int, shape (k, 2)
        Grid index pairs ``(i, j)`` for the real and imaginary axes.
    """
    if P.n != 1:
        raise ValueError("the Fourier oracle covers n = 1")
    dom = P.domain
    N = dom.resolution
    rho = P.rhs(sigma).reshape(N, N)
    src = 4.0 * (rho - P.c)
    j = np.arange(N)
    W = np.exp(-2j * np.pi * np.outer(j, j) / N)
    coef = W @ src @ W.T
    m = np.where(j <= N // 2, j, j - N) * 2 * np.pi / P.period
    w = (2.0 / dom.h * np.sin(0.5 * m * dom.h)) ** 2
    k2 = w[:, None] + w[None, :]
    k2[0, 0] = 1.0
    coef = -coef / k2
    coef[0, 0] = 0.0
    probes = np.atleast_2d(probes)
    Ea = np.exp(2j * np.pi * np.outer(probes[:, 0], j) / N)
    Eb = np.exp(2j * np.pi * np.outer(probes[:, 1], j) / N)
    return (np.einsum("pa,ab,pb->p", Ea, coef, Eb) / N ** 2).real


def trig_interpolant(P: TorusProblem, phi_flat):
    """Callable evaluating the trigonometric interpolant of a planar grid field."""
    dom = P.domain
    N = dom.resolution
    coef = np.fft.fft2(phi_flat.reshape(N, N)) / N ** 2
    m = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        # split the Nyquist mode so the interpolant is real
        coef[N // 2, :] *= 0.5
        coef[:, N // 2] *= 0.5
        coef = np.concatenate([coef, coef[N // 2:N // 2 + 1, :]], axis=0)
        coef = np.concatenate([coef, coef[:, N // 2:N // 2 + 1]], axis=1)
        m = np.concatenate([m, [N // 2]])
    w = 2 * np.pi * m / P.period

    def u(z):
        z = np.atleast_2d(z)
        Ea = np.exp(1j * np.outer(z[:, 0].real, w))
        Eb = np.exp(1j * np.outer(z[:, 0].imag, w))
        return np.einsum("pa,ab,pb->p", Ea, coef, Eb).real

    return u


# ------------------------------------------------------------------ n = 2
def _fft_preconditioner(dom: DomainSpec, A0):
    """Inverse of the constant-coefficient operator ``sum A0_{kj} d_j dbar_k`` with a zero-mean gauge."""
    N = dom.resolution
    k = 2 * np.pi * np.fft.fftfreq(N, d=dom.h)
    kx1, ky1, kx2, ky2 = np.meshgrid(k, k, k, k, indexing="ij")
    # symbol of d_j dbar_k u: (1/4)(ik_xj + k_yj)(ik_xk - k_yk) -> -(1/4) conj(kappa_j) kappa_k
    kap = [kx1 + 1j * ky1, kx2 + 1j * ky2]
    sym = np.zeros(dom.shape, dtype=complex)
    for j in range(2):
        for kk in range(2):
            sym += A0[kk, j] * (-0.25) * np.conj(kap[j]) * kap[kk]
    sym = sym.real
    sym[0, 0, 0, 0] = 1.0

    def apply(r):
        x = np.fft.ifftn(np.fft.fftn(r.reshape(dom.shape)) / sym).real
        return x.ravel() - x.mean()

    return apply


def _newton_periodic(P: TorusProblem, rho, cfg: SolverConfig):
    dom = P.domain
    N = dom.size
    idx = np.arange(N)
    hop = HessianOperator(dom, idx)
    base = P.c * np.eye(2)[None]
    phi = np.zeros(N)
    mu = 0.0
    s, ds = 0.0, 0.25
    total = 0
    last_res = np.inf
    while s < 1 - 1e-12:
        s_try = min(1.0, s + ds)
        target = (1 - s_try) * P.cn + s_try * rho
        trial_phi, trial_mu = phi.copy(), mu
        ok = False
        for it in range(cfg.newton_max_iter + 1):
            H = base + hop(trial_phi)
            F = det(H) - target - trial_mu
            last_res = float(np.abs(F).max())
            if last_res <= cfg.newton_tol:
                ok = True
                break
            if it == cfg.newton_max_iter:
                break
            J = hop.det_jacobian(H, N)
            A0 = np.mean(H, axis=0)
            adj0 = np.array([[A0[1, 1], -A0[0, 1]], [-A0[1, 0], A0[0, 0]]])
            pre = _fft_preconditioner(dom, adj0)

            def mv(x):
                return np.concatenate([J @ x[:N] - x[N], [x[:N].mean()]])

            def pv(y):
                a, b = y[:N], y[N]
                return np.concatenate([pre(a - a.mean()) + b, [-a.mean()]])

            A = spla.LinearOperator((N + 1, N + 1), matvec=mv, dtype=float)
            M = spla.LinearOperator((N + 1, N + 1), matvec=pv, dtype=float)
            sol, info = spla.gmres(A, np.concatenate([-F, [0.0]]), M=M, rtol=cfg.linear_tol,
                                   restart=60, maxiter=20)
            lam = 1.0
            for _ in range(cfg.max_halvings + 1):
                cand = trial_phi + lam * sol[:N]
                if positive_definite(base + hop(cand)):
                    break
                lam *= 0.5
            else:
                break
            trial_phi = cand - cand.mean()
            trial_mu = trial_mu + lam * sol[N]
            total += 1
        if ok:
            phi, mu, s = trial_phi, trial_mu, s_try
            ds = min(2 * ds, 0.5)
            log.debug("torus homotopy s = %.4g: residual %.2e", s, last_res)
        else:
            ds /= 2
            if ds < 1.0 / 1024:
                raise NewtonDivergence(f"periodic Newton failed near s = {s_try:.4g} "
                                       f"(residual {last_res:.3e})", t=s_try, last=phi.copy())
    H = base + hop(phi)
    lam_min = float(np.linalg.eigvalsh(H).min())
    if lam_min <= 0:
        raise PositivityLoss("final torus iterate is not positive", t=1.0, last=phi)
    return phi, last_res, total, mu, lam_min


# ------------------------------------------------------------- public API
@dataclass
class TorusLelong:
    slope: float
    nu: float
    radii: np.ndarray


def solve_torus(P: TorusProblem, sigma=None, ball_radius=None):
    """Solve on the torus and measure the mass split.

    Returns
    -------
    report : SolveReport
        ``phi`` (zero mean) doubles as ``green``; ``info`` carries the
        Lelong estimate at the pole and the Lagrange multiplier (n = 2).
    ledger : MassLedger
        Total mass of ``det(omega + H_phi)`` by node quadrature and the
        pole mass inside ``B(p, ball_radius)`` after removing the
        absolutely continuous part ``(1 - eps) f omega^n``.
    """
    t0 = time.perf_counter()
    dom = P.domain
    sigma = P.sigma if sigma is None else sigma
    rho = P.rhs(sigma)
    mask = np.full(dom.shape, INTERIOR, dtype=np.int8)
    info = {"sigma": sigma}
    if P.n == 1:
        phi, resid = _spectral_planar(P, rho)
        iterations = 1
        backend = "spectral"
        u = trig_interpolant(P, phi)
    else:
        phi, resid, iterations, mu, lam = _newton_periodic(P, rho, P.solver)
        backend = "regularized"
        info.update(multiplier=mu, min_eigenvalue=lam)
        grid = ComplexGrid(dom, phi, mask)
        u = lambda z: interpolate(grid, np.mod(z.real, P.period) + 1j * np.mod(z.imag, P.period))  # noqa: E731
    grid = ComplexGrid(dom, phi, mask, {"field": "phi"})
    report = SolveReport(grid, grid, resid, iterations, [], backend, phi_full=phi)
    lel = torus_lelong(P, u, sigma)
    info["lelong"] = None if lel is None else lel.nu
    info["seconds"] = time.perf_counter() - t0
    report.info = info
    return report, torus_mass_ledger(P, grid, sigma, ball_radius)


def torus_mass_ledger(P: TorusProblem, phi: ComplexGrid, sigma, ball_radius=None) -> MassLedger:
    from .geometry import HermitianField

    dom = P.domain
    base = HermitianField(dom, np.broadcast_to(P.c * np.eye(P.n), (dom.size, P.n, P.n)))
    dens = ma_density(phi, base)
    R = min(2 * sigma + 4 * dom.h, 0.5 * P.period - dom.h) if ball_radius is None else ball_radius
    vol = dom.h ** (2 * P.n)
    near = np.linalg.norm(P.displacement(dom.all_points()), axis=1) < R
    f = P.f_values()
    d = dens.values.ravel()
    total = integrate(dens)
    ac_in = float(np.sum((1 - P.epsilon) * f[near] * P.cn) * vol)
    pole = float(np.sum(d[near]) * vol) - ac_in
    ac = float(np.sum(d[~near]) * vol) + ac_in
    fmass = float(np.sum(f) * P.cn * vol)
    dirac = float(np.sum(P.mollifier(sigma)) * vol)
    return MassLedger(total, [(0, pole)], ac, 1.0, "unit-mass mollifier",
                      {"expected_total": (1 - P.epsilon) * fmass + P.epsilon * dirac,
                       "ball_radius": R, "sigma": sigma,
                       "negative_nodes": dens.meta["negative_nodes"]})


def torus_lelong(P: TorusProblem, u, sigma, samples: int = 32):
    """Pole strength from ``max`` on spheres fitted by ``a log r^2 + b + c r^2``.

    The smooth part of the solution near the pole is quadratic to leading
    order, hence the ``r^2`` column. Besides the raw slope ``a`` the
    strength ``c_n a^n`` is reported (``c_1 = pi``, ``c_2 = pi^2 / 2``), the
    Monge-Ampere mass of ``a log|z - p|^2``, so a unit Dirac mass has
    strength one.
    """
    r_top = P.period / 4
    radii = []
    r = r_top
    while r >= 2 * sigma:
        radii.append(r)
        r /= np.sqrt(2)
    if len(radii) < 4:
        return None
    radii = np.array(radii)
    dirs = sphere_samples(P.n, samples)
    maxima = np.array([u(P.pole[None, :] + rr * dirs).max() for rr in radii])
    A = np.column_stack([np.log(radii ** 2), np.ones_like(radii), radii ** 2])
    coef, *_ = np.linalg.lstsq(A, maxima, rcond=None)
    cn = np.pi if P.n == 1 else np.pi ** 2 / 2
    return TorusLelong(float(coef[0]), float(cn * max(coef[0], 0.0) ** P.n), radii)


def sigma_extrapolation(P: TorusProblem, factors=(4, 8, 16)) -> dict:
    """Pole mass, total mass and Lelong estimate over ``sigma = k h``, fitted linearly to ``sigma = 0``."""
    h = P.domain.h
    sig = np.array([k * h for k in factors])
    R = 2 * sig.max() + 4 * h
    rows = []
    for s in sig:
        rep, led = solve_torus(P, sigma=s, ball_radius=R)
        rows.append((led.total_mass, led.pole_masses[0][1], rep.info["lelong"]))
    tot, pm, nu = (np.array(c, dtype=float) for c in zip(*[(a, b, np.nan if c is None else c)
                                                           for a, b, c in rows]))
    def fit(y):
        ok = np.isfinite(y)
        if ok.sum() >= 2:
            return float(np.polyfit(sig[ok], y[ok], 1)[1])
        return float(y[ok][0]) if ok.any() else float("nan")

    return {"sigma": sig, "total_mass": tot, "pole_mass": pm, "lelong": nu,
            "pole_mass_extrapolated": fit(pm), "total_mass_extrapolated": fit(tot),
            "lelong_extrapolated": fit(nu)}
