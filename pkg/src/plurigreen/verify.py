"""Built-in acceptance suites with pass/fail tables."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import UnknownSuite


@dataclass
class Check:
    name: str
    measured: float
    expected: str
    tolerance: str
    passed: bool

    def row(self) -> str:
        m = f"{self.measured:.6g}" if isinstance(self.measured, (int, float, np.floating)) else str(self.measured)
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44} {m:>14}  {self.expected:<22} {self.tolerance}"


def format_table(checks) -> str:
    head = f"{'':4}  {'check':<44} {'measured':>14}  {'expected':<22} tolerance"
    return "\n".join([head] + [c.row() for c in checks])


# ------------------------------------------------------------- helpers
# Refinement study, worst case over the one- and two-pole disk problems
# (measured sup errors 0.28, 0.11, 0.044 at N = 64, 128, 256), rounded up.
TOLERANCE_1D = {64: 0.30, 128: 0.12, 256: 0.05}


def oracle_tolerance(N: int) -> float:
    """Sup-error tolerance for the disk oracles at ``N`` points per axis.

    Table entries are used directly; other resolutions interpolate the
    table log-log, and finer grids keep the ``5e-2`` entry of 256.
    """
    if N in TOLERANCE_1D:
        return TOLERANCE_1D[N]
    if N >= 256:
        return TOLERANCE_1D[256]
    Ns = np.log(sorted(TOLERANCE_1D))
    tol = np.log([TOLERANCE_1D[k] for k in sorted(TOLERANCE_1D)])
    slope = (tol[1] - tol[0]) / (Ns[1] - Ns[0])
    return float(np.exp(np.interp(np.log(N), Ns, tol, left=tol[0] + slope * (np.log(N) - Ns[0]))))


def disk_case(N: int, poles, backend: str = "envelope", r_cut=None):
    """Solve a zero-background disk problem and return ``(error, report, problem)``.

    ``poles`` holds ``(position, epsilon)``; cutoff radii default to values
    that keep the excision radius admissible at the given resolution.
    """
    from .geometry import DomainSpec
    from .oracles import oracle_for
    from .singularity import BackgroundSpec, Pole, SingularityData
    from .solver import GreenProblem, solve

    dom = DomainSpec("disk", (1.0,), N)
    if r_cut is None:
        r_cut = (0.1, 0.2) if N >= 256 else (0.2, 0.4) if N >= 128 else (0.3, 0.5)
    S = SingularityData([Pole([p], e, ["z"], *r_cut) for p, e in poles])
    P = GreenProblem(dom, BackgroundSpec("zero"), S)
    rep = solve(P, backend)
    G = oracle_for(P)
    return sup_error(P, rep, G, 0.05), rep, P


def sup_error(P, rep, oracle, min_dist: float) -> float:
    dom = P.domain
    pts = dom.all_points()
    g = rep.green.values.ravel()
    keep = np.isfinite(g) & (dom.depth(pts) >= 0)
    for Q in P.singularities.poles:
        keep &= np.linalg.norm(pts - Q.position[None, :], axis=1) >= min_dist
    return float(np.max(np.abs(g[keep] - oracle(pts[keep]))))


def ball_case(N: int, eps: float = 0.25, f=("z1", "z2"), backend: str = "envelope",
              r_cut=(0.6, 0.9), excision=None):
    from .geometry import DomainSpec
    from .oracles import oracle_for
    from .singularity import BackgroundSpec, Pole, SingularityData
    from .solver import GreenProblem, SolverConfig, solve

    dom = DomainSpec("ball", (1.0,), N)
    if excision is None and 4 * dom.h >= r_cut[0] / 2:
        excision = 0.25
    S = SingularityData([Pole([0, 0], eps, list(f), *r_cut)])
    P = GreenProblem(dom, BackgroundSpec("zero"), S, excision_radius=excision,
                     solver=SolverConfig())
    rep = solve(P, backend)
    return sup_error(P, rep, oracle_for(P), 0.2), rep, P


def random_threshold_instance(rng, a: int, d: int):
    """Random ``(A, X, D, Y)`` with ``A, D`` positive definite and ``X`` Hermitian."""
    def cplx(r, c):
        return rng.normal(size=(r, c)) + 1j * rng.normal(size=(r, c))

    G = cplx(a, a)
    A = G @ G.conj().T + 0.1 * np.eye(a)
    H = cplx(d, d)
    D = H @ H.conj().T + 0.1 * np.eye(d)
    K = cplx(a, a)
    X = 0.5 * (K + K.conj().T)
    Y = 2.0 * cplx(a, d)
    return A, X, D, Y


def scan_threshold(A, X, D, Y, rtol: float = 1e-6, points: int = 256):
    """Dense-scan oracle for the least ``lambda`` with ``M(lambda) > 0``.

    Scans a grid, then rescans the first cell that turns positive, until
    the cell width drops below ``rtol``. Uses LAPACK eigenvalues only.
    Returns ``(lambda, cell_width)``.
    """
    from .blowup import threshold_matrix

    def pd(lams):
        M = np.stack([threshold_matrix(l, A, X, Y, D) for l in lams])
        return np.linalg.eigvalsh(M).min(axis=1) > 0

    if pd([0.0])[0]:
        return 0.0, 0.0
    hi = 1.0
    while not pd([hi])[0]:
        hi *= 2
    lo = 0.0
    while True:
        grid = np.linspace(lo, hi, points)
        ok = pd(grid)
        k = int(np.argmax(ok))
        lo, hi = grid[k - 1], grid[k]
        if hi - lo <= rtol * max(1.0, hi):
            return float(hi), float(hi - lo)


# --------------------------------------------------------------- suites
def suite_oracles_1d(resolution: int | None = None):
    N = resolution or 256
    tol = oracle_tolerance(N)
    out = []
    for be in ("envelope", "regularized"):
        err, rep, _ = disk_case(N, [(0.3, 0.5)], be)
        out.append(Check(f"disk N={N} one pole [{be}]", err, "0 (Mobius oracle)", f"<= {tol:.3g}", err <= tol))
    cut = (0.15, 0.3) if N >= 128 else (0.26, 0.31)
    err, rep, _ = disk_case(N, [(0.45, 0.5), (-0.45j, 0.3)], "envelope", r_cut=cut)
    out.append(Check(f"disk N={N} two poles additivity", err, "0 (sum of Mobius)", f"<= {tol:.3g}", err <= tol))
    out.append(Check("maximality residual", rep.residual_max, "0", "<= 1e-6", rep.residual_max <= 1e-6))
    return out


def suite_oracles_2d(resolution: int | None = None):
    N = resolution or 16
    err, rep, _ = ball_case(N)
    return [Check(f"ball N={N} radial C^2 case", err, "0 (0.25 log|z|^2)", "<= 0.2", err <= 0.2),
            Check("maximality residual", rep.residual_max, "0", "<= 0.1", rep.residual_max <= 0.1)]


def suite_lemmas(resolution: int | None = None):
    from .blowup import (CutoffProfile, ExceptionalMetric, iterated_metric, lambda_threshold,
                         threshold_matrix, log_product_metric, positivity_threshold)

    rng = np.random.default_rng(2024)
    worst, pd_after = 0.0, 0
    for _ in range(100):
        a, d = rng.integers(1, 5, size=2)
        A, X, D, Y = random_threshold_instance(rng, int(a), int(d))
        lam = lambda_threshold(A, X, D, Y)
        ref, cell = scan_threshold(A, X, D, Y)
        step = 1e-6 * max(1.0, lam)
        worst = max(worst, abs(lam - ref) / (step + cell))
        pd_after += np.linalg.eigvalsh(threshold_matrix(lam + 1, A, X, Y, D)).min() > 0
    out = [Check("lambda_threshold vs dense scan", worst, "<= 1 step", "one bisection step", worst <= 1.0),
           Check("M(lambda*+1) positive definite", pd_after, "100/100", "exact", pd_after == 100)]
    R = positivity_threshold()
    out.append(Check("eps_K > 0", R.eps_K, "> 0", "strict", R.eps_K > 0))
    out.append(Check("min eigenvalue at eps_K/2", R.min_witness, "> 0", "all samples", R.min_witness > 0))
    d0 = float(np.real(R.d_block["D"][0]))
    out.append(Check("D-block on E at theta=0", d0, "1 (Fubini-Study)", "1e-8", abs(d0 - 1) <= 1e-8))
    m2 = ExceptionalMetric(cutoff=CutoffProfile(0.1, 0.2))
    it = iterated_metric(R, m2)
    out.append(Check("iterated metric n1*n2", it.n1 * it.n2, "finite", "certified",
                     it.min_eigenvalue > 0))
    w2 = np.array([[0.3, 0.4], [0.05, 1.0], [0.2 - 0.1j, -0.7]])
    direct, summed = log_product_metric(ExceptionalMetric(), m2, 4, w2)
    dev = float(np.max(np.abs(direct - summed)))
    out.append(Check("log-product identity", dev, "0", "<= 1e-10", dev <= 1e-10))
    return out


def suite_torus(resolution: int | None = None):
    from .torus import TorusProblem, fourier_series_oracle, sigma_extrapolation, solve_torus

    N = resolution or 128
    P = TorusProblem(n=1, period=1.0, resolution=N, epsilon=0.3)
    rep, led = solve_torus(P)
    rng = np.random.default_rng(0)
    probes = rng.integers(0, N, size=(64, 2))
    ref = fourier_series_oracle(P, probes)
    dev = float(np.max(np.abs(rep.phi.values.reshape(N, N)[probes[:, 0], probes[:, 1]] - ref)))
    ex = sigma_extrapolation(P)
    return [Check("spectral oracle at fixed sigma", dev, "0", "<= 1e-6", dev <= 1e-6),
            Check("total mass", led.total_mass, "1", "1e-2", abs(led.total_mass - 1) <= 1e-2),
            Check("pole mass (sigma -> 0)", ex["pole_mass_extrapolated"], "0.3", "1e-2",
                  abs(ex["pole_mass_extrapolated"] - 0.3) <= 1e-2)]


def suite_ray(resolution: int | None = None):
    from .ray import RayPole, RayProblem, ray_nontriviality, solve_ray

    N = resolution or 32
    res = []
    for r in (N, 2 * N):
        R = solve_ray(RayProblem(T=3.0, poles=[RayPole("0", ("z", "w"), 0.2)], resolution=r))
        res.append(R)
    nt = ray_nontriviality(res[-1].slices)
    ratio = res[1].info["geodesic_residual"] / res[0].info["geodesic_residual"]
    zero = float(np.max(np.abs(solve_ray(RayProblem(T=3.0, resolution=N)).Phi)))
    return [Check("ray nontriviality", nt, "> 1e-2", "strict", nt > 1e-2),
            Check(f"geodesic residual ratio {N}->{2 * N}", ratio, "<= 0.7", "per doubling", ratio <= 0.7),
            Check("zero-data ray sup|Phi|", zero, "0", "<= 1e-8", zero <= 1e-8)]


SUITES = {"oracles-1d": suite_oracles_1d, "oracles-2d": suite_oracles_2d, "lemmas": suite_lemmas,
          "torus": suite_torus, "ray": suite_ray}


def run_suite(name: str, resolution: int | None = None):
    """Run a named suite and return ``(checks, seconds)``.

    Raises
    ------
    UnknownSuite
        ``name`` is not one of the built-in suites.
    """
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    t0 = time.perf_counter()
    checks = SUITES[name](resolution)
    return checks, time.perf_counter() - t0
