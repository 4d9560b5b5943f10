"""Blow-up charts, the exceptional-divisor metric and its positivity thresholds.

A center ``Z = {z_0 = ... = z_{c-1} = 0}`` of codimension ``c`` in C^n is
blown up in charts indexed by ``j0 < c``. Chart coordinates are ordered
``(zeta_0, zeta_1..zeta_d, theta_1..theta_{c-1})`` with ``d = n - c`` and

    z_{j0} = zeta_0,  z_k = zeta_0 theta_k (k < c, k != j0),  z_{c+i-1} = zeta_i.

The exceptional divisor is ``{zeta_0 = 0}`` in every chart. The metric
``h_E`` on ``O(-E)`` is given through its denominator

    den = (1 - psi) + psi |y|^2,   y = (z_0, ..., z_{c-1}),

with ``psi = q(|y|)`` the quintic cutoff, so ``|f|^2_{h_E} = |f|^2 / den`` and
``-(i/2) d dbar log h_E = d dbar log den`` in the coefficient convention
where ``|z|^2`` has matrix identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (HypothesisViolated, NotASection, NotPositive,
                     PivotDegenerate, StageFailure)
from .linalg import jacobi_eigvalsh
from .singularity import CutoffProfile

PIVOT_TOL = 1e-12


# ---------------------------------------------------------------- charts
@dataclass(frozen=True)
class BlowupChart:
    """One coordinate chart of the blow-up of C^n along a linear center.

    Parameters
    ----------
    n : int
        Ambient dimension.
    center_dim : int
        Dimension ``d`` of the center (0 for a point).
    j0 : int
        Index of the normal coordinate that becomes ``zeta_0``.
    """

    n: int = 2
    center_dim: int = 0
    j0: int = 0

    def __post_init__(self):
        if not 0 <= self.center_dim <= self.n - 2:
            raise ValueError("center codimension must be at least 2")
        if not 0 <= self.j0 < self.codim:
            raise ValueError("chart index must select a normal coordinate")

    @property
    def codim(self) -> int:
        return self.n - self.center_dim

    @property
    def others(self) -> list:
        return [k for k in range(self.codim) if k != self.j0]

    def project(self, w) -> np.ndarray:
        """``pi`` in closed form, points ``(k, n)`` in chart coordinates."""
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        d, c = self.center_dim, self.codim
        z = np.empty_like(w)
        zeta0 = w[:, 0]
        z[:, self.j0] = zeta0
        for m, k in enumerate(self.others):
            z[:, k] = zeta0 * w[:, 1 + d + m]
        for i in range(d):
            z[:, c + i] = w[:, 1 + i]
        return z

    def fiber(self, w) -> np.ndarray:
        """Homogeneous fiber coordinates ``y`` with ``y_{j0} = 1``."""
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        y = np.ones((len(w), self.codim), dtype=complex)
        for m, k in enumerate(self.others):
            y[:, k] = w[:, 1 + self.center_dim + m]
        return y

    def from_fiber(self, zeta0_scale, y, center) -> np.ndarray:
        """Chart coordinates of the point with normal coordinates ``zeta0_scale * y``."""
        piv = y[:, self.j0]
        if np.any(np.abs(piv) <= PIVOT_TOL * np.maximum(1.0, np.abs(y).max(axis=1))):
            raise PivotDegenerate(f"fiber coordinate {self.j0} vanishes; point is outside chart {self.j0}")
        w = np.empty((len(y), self.n), dtype=complex)
        w[:, 0] = zeta0_scale * piv
        w[:, 1:1 + self.center_dim] = center
        for m, k in enumerate(self.others):
            w[:, 1 + self.center_dim + m] = y[:, k] / piv
        return w

    def jacobian(self, w) -> np.ndarray:
        """Holomorphic Jacobian ``dz/dw``, shape (k, n, n) with rows indexed by ``z``."""
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        d, c = self.center_dim, self.codim
        J = np.zeros((len(w), self.n, self.n), dtype=complex)
        J[:, self.j0, 0] = 1.0
        for m, k in enumerate(self.others):
            J[:, k, 0] = w[:, 1 + d + m]
            J[:, k, 1 + d + m] = w[:, 0]
        for i in range(d):
            J[:, c + i, 1 + i] = 1.0
        return J


def chart_transition(src: BlowupChart, dst: BlowupChart, point, check: bool = True) -> np.ndarray:
    """Coordinates in ``dst`` of a point given in ``src``.

    Works on the exceptional divisor as well: the fiber point is carried
    through homogeneous coordinates and re-normalised at the pivot ``dst.j0``.

    Raises
    ------
    PivotDegenerate
        The point does not lie in the destination chart, or the holomorphy
        check fails because the pivot is numerically degenerate.
    """
    if (src.n, src.center_dim) != (dst.n, dst.center_dim):
        raise ValueError("charts belong to different blow-ups")
    w = np.atleast_2d(np.asarray(point, dtype=complex))
    y = src.fiber(w)
    out = dst.from_fiber(w[:, 0], y, w[:, 1:1 + src.center_dim])
    if check:
        res = cr_residual(lambda v: dst.from_fiber(v[:, 0], src.fiber(v), v[:, 1:1 + src.center_dim]), w)
        if res > 1e-6:
            raise PivotDegenerate(f"transition fails the Cauchy-Riemann check (residual {res:.2e})")
    return out[0] if np.ndim(point) == 1 else out


def cr_residual(F, w, step: float = 1e-6) -> float:
    """Largest ``|dF/d wbar|`` by centred differences, relative to ``|dF/dw|``."""
    w = np.atleast_2d(np.asarray(w, dtype=complex))
    worst = 0.0
    for a in range(w.shape[1]):
        e = np.zeros(w.shape[1])
        e[a] = step
        dx = (F(w + e) - F(w - e)) / (2 * step)
        dy = (F(w + 1j * e) - F(w - 1j * e)) / (2 * step)
        dbar = 0.5 * (dx + 1j * dy)
        d = 0.5 * (dx - 1j * dy)
        worst = max(worst, float(np.max(np.abs(dbar) / np.maximum(1.0, np.abs(d)))))
    return worst


def transition_jacobian(src: BlowupChart, dst: BlowupChart, point, step: float = 1e-6) -> np.ndarray:
    """Complex Jacobian of the transition by centred differences."""
    w = np.atleast_1d(np.asarray(point, dtype=complex))
    J = np.empty((len(w), len(w)), dtype=complex)
    for a in range(len(w)):
        e = np.zeros(len(w))
        e[a] = step
        fx = (chart_transition(src, dst, w + e, False) - chart_transition(src, dst, w - e, False)) / (2 * step)
        fy = (chart_transition(src, dst, w + 1j * e, False)
              - chart_transition(src, dst, w - 1j * e, False)) / (2 * step)
        J[:, a] = 0.5 * (fx - 1j * fy)
    return J


# ---------------------------------------------------------------- metric
@dataclass(frozen=True)
class ExceptionalMetric:
    """Partition-of-unity metric on ``O(-E)`` for one center.

    A single coordinate patch covers the center, so the partition has the
    one weight ``psi = q(|y|)``.
    """

    n: int = 2
    center_dim: int = 0
    cutoff: CutoffProfile = field(default_factory=lambda: CutoffProfile(0.5, 1.0))

    @property
    def codim(self) -> int:
        return self.n - self.center_dim

    def chart(self, j0: int = 0) -> BlowupChart:
        return BlowupChart(self.n, self.center_dim, j0)

    def denominator(self, z) -> np.ndarray:
        """``(1 - psi) + psi |y|^2`` at ambient points."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        s = np.sum(np.abs(z[:, :self.codim]) ** 2, axis=1)
        psi = self.cutoff.q(np.sqrt(s))
        return (1 - psi) + psi * s

    def reduced_denominator(self, chart: BlowupChart, w) -> np.ndarray:
        """``den / |zeta_0|^2``, smooth across ``E`` where ``psi = 1``."""
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        y = chart.fiber(w)
        ny = np.sum(np.abs(y) ** 2, axis=1)
        z = chart.project(w)
        s = np.sum(np.abs(z[:, :self.codim]) ** 2, axis=1)
        psi = self.cutoff.q(np.sqrt(s))
        z0 = np.abs(w[:, 0]) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            off = np.where(psi < 1, (1 - psi) / z0, 0.0)
        return off + psi * ny

    def ddbar_log(self, chart: BlowupChart, w) -> np.ndarray:
        """Coefficient matrix of ``d dbar log den`` in chart coordinates.

        Where ``psi = 1`` this is the Fubini-Study form of the fiber
        coordinates ``theta``; elsewhere the ambient radial formula
        ``F' P + F'' ybar y^T`` for ``F = log den(|y|^2)`` is pulled back.
        """
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        k, n, c, d = len(w), self.n, self.codim, self.center_dim
        out = np.zeros((k, n, n), dtype=complex)
        z = chart.project(w)
        y = z[:, :c]
        s = np.sum(np.abs(y) ** 2, axis=1)
        r = np.sqrt(s)
        inner = r <= self.cutoff.r_in
        if inner.any():
            th = w[inner, 1 + d:]
            t2 = 1 + np.sum(np.abs(th) ** 2, axis=1)
            fs = (np.eye(c - 1)[None] * t2[:, None, None]
                  - np.conj(th)[:, :, None] * th[:, None, :]) / t2[:, None, None] ** 2
            sub = np.zeros((inner.sum(), n, n), dtype=complex)
            sub[:, 1 + d:, 1 + d:] = fs
            out[inner] = sub
        outer = ~inner
        if outer.any():
            so, ro = s[outer], r[outer]
            q, dq, d2q = self.cutoff.q(ro), self.cutoff.dq(ro), self.cutoff.d2q(ro)
            D = (1 - q) + q * so
            # derivatives in s = r^2: d/ds = (1/(2r)) d/dr
            dq_s = dq / (2 * ro)
            d2q_s = (d2q - dq / ro) / (4 * so)
            D1 = q + dq_s * (so - 1)
            D2 = 2 * dq_s + d2q_s * (so - 1)
            F1 = D1 / D
            F2 = D2 / D - F1 ** 2
            yo = y[outer]
            amb = np.zeros((outer.sum(), n, n), dtype=complex)
            amb[:, :c, :c] = (F1[:, None, None] * np.eye(c)[None]
                              + F2[:, None, None] * np.conj(yo)[:, :, None] * yo[:, None, :])
            J = chart.jacobian(w[outer])
            out[outer] = pullback(amb, J)
        return out


def pullback(M, J) -> np.ndarray:
    """``(pi^* M)_{a bbar} = sum J_{ja} M_{j kbar} conj(J_{kb})``."""
    return np.einsum("pja,pjk,pkb->pab", J, M, np.conj(J))


def h_E_norm(metric: ExceptionalMetric, f, point, chart: BlowupChart | None = None,
             tol: float = 1e-8) -> float:
    """``|f|^2_{h_E} = |f|^2 / den`` at a chart point.

    Parameters
    ----------
    f : callable
        Local section: chart points ``(k, n)`` to complex values. It must
        vanish on ``E``; ``f = g zeta_0`` is checked on the ``zeta_0`` ray.
    point : array_like, shape (n,)

    Raises
    ------
    NotASection
        ``f`` does not vanish on ``E`` at the fiber point.
    """
    chart = metric.chart(0) if chart is None else chart
    w = np.asarray(point, dtype=complex).reshape(1, -1)
    onE = w.copy()
    onE[0, 0] = 0.0
    f0 = complex(np.asarray(f(onE)).ravel()[0])
    scale = max(1.0, abs(complex(np.asarray(f(w)).ravel()[0])))
    if abs(f0) > tol * scale:
        raise NotASection(f"section does not vanish on E (|f| = {abs(f0):.2e})")
    if abs(w[0, 0]) > 1e-6:
        fv = complex(np.asarray(f(w)).ravel()[0])
        return float(abs(fv) ** 2 / metric.denominator(chart.project(w))[0])
    # on or near E: |f|^2/den = |g|^2 / (den/|zeta0|^2) with g = f/zeta0
    step = 1e-6
    wp = onE.copy()
    wp[0, 0] = step
    g = (complex(np.asarray(f(wp)).ravel()[0]) - f0) / step
    if abs(w[0, 0]) > 0:
        g = complex(np.asarray(f(w)).ravel()[0]) / w[0, 0]
    return float(abs(g) ** 2 / metric.reduced_denominator(chart, onE if w[0, 0] == 0 else w)[0])


# ------------------------------------------------- Schur-type threshold
def threshold_matrix(lam, A, X, Y, D) -> np.ndarray:
    a = A.shape[0]
    M = np.block([[X, Y], [np.conj(Y).T, D]]).astype(complex)
    M[:a, :a] += lam * A
    return M


def _pd(M) -> bool:
    return bool(jacobi_eigvalsh(M[None])[0].min() > 0)


def lambda_threshold(A, X, D, Y, rtol: float = 1e-6) -> float:
    """Least ``lambda >= 0`` on a bisection grid with ``M(lambda) > 0``.

    ``M(lambda) = lambda diag(A, 0) + [[X, Y], [Y^H, D]]`` grows in the
    positive semidefinite order with ``lambda``, so positivity holds on an
    interval ``(lambda*, inf)``. The returned value is the upper end of the
    final bracket, within ``rtol`` (relative) of ``lambda*``.

    Raises
    ------
    HypothesisViolated
        ``A`` or ``D`` is not positive definite.
    """
    A, X, D, Y = (np.atleast_2d(np.asarray(m, dtype=complex)) for m in (A, X, D, Y))
    if not _pd(A):
        raise HypothesisViolated("A must be positive definite")
    if not _pd(D):
        raise HypothesisViolated("D must be positive definite")
    if _pd(threshold_matrix(0.0, A, X, Y, D)):
        return 0.0
    lo, hi = 0.0, 1.0
    while not _pd(threshold_matrix(hi, A, X, Y, D)):
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise HypothesisViolated("no finite threshold found")
    while hi - lo > rtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _pd(threshold_matrix(mid, A, X, Y, D)):
            hi = mid
        else:
            lo = mid
    return hi


def lambda_threshold_schur(A, X, D, Y) -> float:
    """Closed form ``max(0, lambda_max(A^{-1/2} (Y D^{-1} Y^H - X) A^{-1/2}))``."""
    A, X, D, Y = (np.atleast_2d(np.asarray(m, dtype=complex)) for m in (A, X, D, Y))
    w, V = np.linalg.eigh(A)
    Ais = V @ np.diag(w ** -0.5) @ V.conj().T
    S = Ais @ (Y @ np.linalg.solve(D, Y.conj().T) - X) @ Ais
    return max(0.0, float(np.linalg.eigvalsh(0.5 * (S + S.conj().T)).max()))


# ---------------------------------------------- uniform positivity on K
@dataclass
class ThresholdReport:
    """Outcome of a uniform positivity search on a sampled compact set.

    The certificate is sample-based: positivity is checked at the sample
    points only, at the reported resolution.
    """

    K: dict
    eps_K: float
    witness: np.ndarray
    samples: np.ndarray
    eps0_min_eigenvalue: float
    d_block: dict = field(default_factory=dict)
    chart: BlowupChart | None = None
    metric: ExceptionalMetric | None = None

    @property
    def min_witness(self) -> float:
        return float(self.witness.min())


def compact_samples(K: dict) -> np.ndarray:
    """Chart points of ``{|zeta_0| <= zeta_max, |theta| <= theta_max}`` on a square grid.

    ``K`` may also carry explicit ``points`` (k, 2).
    """
    if "points" in K:
        return np.atleast_2d(np.asarray(K["points"], dtype=complex))
    m = int(K.get("per_axis", 33))
    a, b = float(K.get("zeta_max", 1.0)), float(K.get("theta_max", 2.0))
    xa = np.linspace(-a, a, m)
    xb = np.linspace(-b, b, m)
    Z = (xa[:, None] + 1j * xa[None, :]).ravel()
    T = (xb[:, None] + 1j * xb[None, :]).ravel()
    Z = Z[np.abs(Z) <= a * (1 + 1e-12)]
    T = T[np.abs(T) <= b * (1 + 1e-12)]
    ZZ, TT = np.meshgrid(Z, T, indexing="ij")
    return np.stack([ZZ.ravel(), TT.ravel()], axis=1)


def _min_eigs(M) -> np.ndarray:
    if M.shape[-1] == 2:
        a, d = M[:, 0, 0].real, M[:, 1, 1].real
        b = 0.5 * (M[:, 0, 1] + np.conj(M[:, 1, 0]))
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)
    return jacobi_eigvalsh(M).min(axis=1)


def _largest_eps(P, Q, margin: float = 0.0, hi: float = 1.0, steps: int = 40):
    """Largest ``eps`` with ``P + eps Q > margin`` at every sample (bisection)."""
    ok = lambda e: bool(_min_eigs(P + e * Q).min() > margin)  # noqa: E731
    if ok(hi):
        while ok(2 * hi) and hi < 2.0 ** 20:
            hi *= 2
        return hi
    lo = hi
    for _ in range(60):
        lo /= 2
        if ok(lo):
            break
    else:
        return 0.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def positivity_threshold(metric: ExceptionalMetric | None = None, omega=None, K: dict | None = None,
                         chart: BlowupChart | None = None) -> ThresholdReport:
    """Uniform ``eps_K`` with ``pi^* omega + eps d dbar log den > 0`` on sampled ``K``.

    Parameters
    ----------
    metric : ExceptionalMetric
        Defaults to the point blow-up of C^2 with cutoff radii 0.5 and 1.
    omega : callable, optional
        Ambient form: points ``(k, n)`` to matrices ``(k, n, n)``; flat by default.
    K : dict
        ``zeta_max``, ``theta_max``, ``per_axis`` (33), or explicit ``points``.

    Raises
    ------
    NotPositive
        ``omega`` fails positivity on ``pi(K)``.
    """
    metric = ExceptionalMetric() if metric is None else metric
    chart = metric.chart(0) if chart is None else chart
    K = {"zeta_max": 1.0, "theta_max": 2.0, "per_axis": 33} if K is None else dict(K)
    w = compact_samples(K)
    z = chart.project(w)
    Om = flat_form(z) if omega is None else np.asarray(omega(z), dtype=complex)
    if _min_eigs(Om).min() <= 0:
        raise NotPositive("omega is not positive on pi(K)")
    P = pullback(Om, chart.jacobian(w))
    Q = metric.ddbar_log(chart, w)
    eps_K = _largest_eps(P, Q)
    if eps_K <= 0:
        raise NotPositive("no positive eps keeps the form positive on K")
    witness = _min_eigs(P + 0.5 * eps_K * Q)
    eps0 = float(_min_eigs(P).min())
    return ThresholdReport(K, eps_K, witness, w, eps0, d_block_on_E(metric, chart), chart, metric)


def flat_form(z) -> np.ndarray:
    z = np.atleast_2d(z)
    return np.broadcast_to(np.eye(z.shape[1], dtype=complex), (len(z), z.shape[1], z.shape[1])).copy()


def d_block_on_E(metric: ExceptionalMetric, chart: BlowupChart, thetas=(0.0, 0.5, 1.0 + 1.0j, 2.0)) -> dict:
    """The ``theta``-block of ``d dbar log den`` at ``zeta_0 = 0`` against Fubini-Study."""
    d = metric.center_dim
    th = np.asarray(thetas, dtype=complex)
    w = np.zeros((len(th), metric.n), dtype=complex)
    w[:, 1 + d] = th
    Q = metric.ddbar_log(chart, w)
    block = Q[:, 1 + d:, 1 + d:]
    fs = 1.0 / (1 + np.abs(th) ** 2) ** 2
    return {"theta": th, "D": block[:, 0, 0].real if block.shape[-1] == 1 else block,
            "fubini_study": fs, "min_eigenvalue": _min_eigs(block)}


# ------------------------------------------------------- iterated blow-up
@dataclass
class IteratedMetricReport:
    n1: int
    n2: int
    eps1: float
    eps2: float
    min_eigenvalue: float
    samples: np.ndarray
    stage1: ThresholdReport | None = None


def _stage_form(metric, chart, base_form, w, eps):
    """``pi^* base + eps d dbar log den`` at chart points ``w``."""
    z = chart.project(w)
    return pullback(base_form(z), chart.jacobian(w)) + eps * metric.ddbar_log(chart, w)


def iterated_metric(stage1: ThresholdReport | None = None, stage2: ExceptionalMetric | None = None,
                    K2: dict | None = None, omega=None, max_power: int = 20) -> IteratedMetricReport:
    """Certify ``pi^* omega - (1/(n1 n2)) (i/2) d dbar log h_{E'}`` on a sample compact.

    The second blow-up is centred at the origin of chart 0 of the first
    one, a point of ``E_1``. ``n1`` is the least power of two with
    ``1/n1`` inside the stage-one threshold; ``n2`` is then the least power
    of two for which the combined form is positive on ``K2`` (in chart 0
    of the second blow-up).

    Parameters
    ----------
    stage1 : ThresholdReport
        Stage-one context; computed with defaults when omitted.
    stage2 : ExceptionalMetric or None
        Metric of the second blow-up; ``None`` means an empty center,
        which reduces to stage one with ``n2 = 1``.

    Raises
    ------
    StageFailure
        With ``stage`` set to the failing stage.
    """
    if stage1 is None:
        stage1 = positivity_threshold(omega=omega)
    m1, ch1 = stage1.metric, stage1.chart
    n1 = None
    for k in range(max_power + 1):
        if 1.0 / 2 ** k < stage1.eps_K:
            n1 = 2 ** k
            break
    if n1 is None:
        raise StageFailure("stage one admits no eps = 1/n1", stage=1)
    eps1 = 1.0 / n1
    base = flat_form if omega is None else omega

    def form1(v):
        return _stage_form(m1, ch1, base, v, eps1)

    if stage2 is None:
        P = form1(stage1.samples)
        lam = float(_min_eigs(P).min())
        if lam <= 0:
            raise StageFailure("stage one form not positive at eps = 1/n1", stage=1)
        return IteratedMetricReport(n1, 1, eps1, eps1, lam, stage1.samples, stage1)
    if _min_eigs(form1(stage1.samples)).min() <= 0:
        raise StageFailure("stage one form not positive at eps = 1/n1", stage=1)
    K2 = {"zeta_max": 0.5, "theta_max": 2.0, "per_axis": 17} if K2 is None else K2
    w2 = compact_samples(K2)
    ch2 = stage2.chart(0)
    for k in range(max_power + 1):
        n2 = 2 ** k
        eps2 = 1.0 / (n1 * n2)
        M = _stage_form(stage2, ch2, form1, w2, eps2)
        lam = float(_min_eigs(M).min())
        if lam > 0:
            return IteratedMetricReport(n1, n2, eps1, eps2, lam, w2, stage1)
    raise StageFailure("no n2 up to the cap certifies the combined form", stage=2)


def log_product_metric(metric1: ExceptionalMetric, metric2: ExceptionalMetric, n2: int, w2):
    """``log h_{E'}`` for ``h_{E'} = (h_{E_1} o pi_2)^{n2} h_{E_2}``, computed two ways.

    Points ``w2`` are chart-0 coordinates of the second blow-up, off both
    exceptional divisors. With ``h = 1/den`` the product is formed first
    and its logarithm taken, and separately the weighted sum of logs.

    Returns
    -------
    direct, summed : ndarray
    """
    w2 = np.atleast_2d(np.asarray(w2, dtype=complex))
    ch1, ch2 = metric1.chart(0), metric2.chart(0)
    w1 = ch2.project(w2)
    h1 = 1.0 / metric1.denominator(ch1.project(w1))
    h2 = 1.0 / metric2.denominator(w1)
    direct = np.log(h1 ** n2 * h2)
    summed = n2 * np.log(h1) + np.log(h2)
    return direct, summed
