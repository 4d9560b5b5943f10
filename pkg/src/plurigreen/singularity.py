"""Pole data, cutoff profiles, glued singular potentials and the forms omega_delta.

The holomorphic tuple ``f_m`` attached to a pole ``p_m`` is written in the
local coordinate ``w = z - p_m``; the variable names ``z`` (in C^1) or
``z1, z2`` (in C^2) inside a polynomial string refer to that local
coordinate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (EvaluationAtPole, InfeasibleBackground,
                     InvalidSingularityData)
from .linalg import min_eigenvalue

# ---------------------------------------------------------------- polynomials


class Polynomial:
    """Polynomial in the local coordinates with complex coefficients.

    Parameters
    ----------
    terms : dict
        Maps exponent tuples (length n) to complex coefficients.
    n : int
        Number of variables.
    text : str, optional
        Source string, kept for serialisation.
    """

    def __init__(self, terms: dict, n: int, text: str | None = None):
        self.n = int(n)
        self.terms = {tuple(int(e) for e in k): complex(v) for k, v in terms.items() if v != 0}
        for k in self.terms:
            if len(k) != self.n or min(k) < 0:
                raise InvalidSingularityData(f"bad exponent {k} for {n} variables")
        self.text = text if text is not None else self._render()

    @classmethod
    def parse(cls, text: str, n: int) -> "Polynomial":
        """Parse a polynomial string such as ``"z1**2 + 2*I*z2"``."""
        import sympy

        names = ["z"] if n == 1 else [f"z{j + 1}" for j in range(n)]
        syms = sympy.symbols(names)
        local = {nm: s for nm, s in zip(names, syms)}
        if n == 1:
            local["z1"] = syms[0]
        local["I"] = sympy.I
        try:
            expr = sympy.sympify(text, locals=local)
            poly = sympy.Poly(sympy.expand(expr), *syms)
        except (sympy.SympifyError, sympy.PolynomialError, TypeError, SyntaxError) as exc:
            raise InvalidSingularityData(f"not a polynomial in {names}: {text!r}") from exc
        if poly.free_symbols - set(syms):
            raise InvalidSingularityData(f"unknown symbols in {text!r}")
        terms = {m: complex(sympy.N(c)) for m, c in poly.terms()}
        return cls(terms, n, text=str(text))

    def _render(self) -> str:
        names = ["z"] if self.n == 1 else [f"z{j + 1}" for j in range(self.n)]
        parts = []
        for k, c in sorted(self.terms.items()):
            mono = "*".join(f"{nm}**{e}" if e > 1 else nm for nm, e in zip(names, k) if e > 0)
            coef = f"({c.real!r}+{c.imag!r}*I)" if c.imag else repr(c.real)
            parts.append(f"{coef}*{mono}" if mono else coef)
        return " + ".join(parts) if parts else "0"

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    @property
    def order(self) -> int:
        """Vanishing order at the origin (lowest total degree)."""
        return min((sum(k) for k in self.terms), default=0)

    def _eval(self, w, dk=()):
        w = np.atleast_2d(w)
        out = np.zeros(len(w), dtype=complex)
        for k, c in self.terms.items():
            e = list(k)
            coef = c
            for a in dk:
                coef *= e[a]
                e[a] -= 1
            if coef == 0 or min(e) < 0:
                continue
            term = np.full(len(w), coef, dtype=complex)
            for a, ea in enumerate(e):
                if ea:
                    term = term * w[:, a] ** ea
            out += term
        return out

    def __call__(self, w):
        return self._eval(w)

    def grad(self, w) -> np.ndarray:
        return np.stack([self._eval(w, (a,)) for a in range(self.n)], axis=-1)

    def is_monomial(self) -> bool:
        return len(self.terms) == 1


# -------------------------------------------------------------------- cutoff


@dataclass(frozen=True)
class CutoffProfile:
    """C^2 quintic bump: 1 for ``t <= r_in``, 0 for ``t >= r_out``, monotone."""

    r_in: float
    r_out: float

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out):
            raise InvalidSingularityData("cutoff radii need 0 < r_in < r_out")

    def _u(self, t):
        return np.clip((np.asarray(t, dtype=float) - self.r_in) / (self.r_out - self.r_in), 0.0, 1.0)

    def q(self, t):
        u = self._u(t)
        return 1.0 - u ** 3 * (10 - 15 * u + 6 * u * u)

    def dq(self, t):
        u = self._u(t)
        return -30.0 * u * u * (1 - u) ** 2 / (self.r_out - self.r_in)

    def d2q(self, t):
        u = self._u(t)
        return -60.0 * u * (1 - u) * (1 - 2 * u) / (self.r_out - self.r_in) ** 2

    __call__ = q


# ---------------------------------------------------------------------- data


@dataclass
class Pole:
    position: np.ndarray
    epsilon: float
    f: list
    r_in: float = 0.1
    r_out: float = 0.2

    def __post_init__(self):
        self.position = np.atleast_1d(np.asarray(self.position, dtype=complex))
        n = len(self.position)
        self.f = [p if isinstance(p, Polynomial) else Polynomial.parse(str(p), n) for p in self.f]
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidSingularityData("epsilon must be > 0")
        if not self.f:
            raise InvalidSingularityData("pole needs at least one holomorphic function")
        self.cutoff = CutoffProfile(float(self.r_in), float(self.r_out))

    @property
    def order(self) -> int:
        """Vanishing order of ``sum |f_j|^2`` at the pole, in powers of |w|^2."""
        return min(p.order for p in self.f)

    def sum_sq(self, w):
        return sum(np.abs(p(w)) ** 2 for p in self.f)


@dataclass
class SingularityData:
    """Immutable-after-validation collection of poles in C^n."""

    poles: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.poles[0].position) if self.poles else None

    @property
    def max_epsilon(self) -> float:
        return max((p.epsilon for p in self.poles), default=0.0)

    def validate(self, domain=None, samples: int | None = None):
        """Check disjointness, containment and isolated common zeros.

        Raises
        ------
        InvalidSingularityData
            With a message naming the violated invariant.
        """
        for m, P in enumerate(self.poles):
            if domain is not None and len(P.position) != domain.n:
                raise InvalidSingularityData(f"pole {m}: dimension does not match the domain")
            if domain is not None and not domain.periodic:
                if domain.depth(P.position[None, :])[0] <= P.r_out:
                    raise InvalidSingularityData(
                        f"pole {m}: ball B(p, r_out) is not contained in the domain interior")
            for l in range(m):
                Q = self.poles[l]
                if np.linalg.norm(P.position - Q.position) < P.r_out + Q.r_out:
                    raise InvalidSingularityData(
                        f"poles {l} and {m}: balls B(p, r_out) overlap (pole balls must be pairwise disjoint)")
            self._certify_zero(m, P, samples)
        return self

    @staticmethod
    def _certify_zero(m, P, samples):
        for p in P.f:
            if abs(p.terms.get((0,) * p.n, 0)) > 0:
                raise InvalidSingularityData(f"pole {m}: f does not vanish at the pole")
        dirs = sphere_directions(len(P.position), samples)
        radii = np.geomspace(1e-3 * P.r_in, P.r_out, 13)
        D = max(p.degree for p in P.f)
        worst = np.inf
        for r in radii:
            w = r * dirs
            worst = min(worst, float(np.min(P.sum_sq(w) / r ** (2 * D))))
        if not worst > 1e-12:
            raise InvalidSingularityData(
                f"pole {m}: f has common zeros other than the pole inside B(p, r_out)")


def sphere_directions(n: int, samples: int | None = None) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors of C^n (n = 1 or 2)."""
    if n == 1:
        k = 64 if samples is None else int(samples)
        return np.exp(2j * np.pi * np.arange(k) / k)[:, None]
    k = 12 if samples is None else int(samples)
    eta = np.linspace(0.0, np.pi / 2, k // 2 + 1)
    xi = 2 * np.pi * np.arange(k) / k
    E, X1, X2 = np.meshgrid(eta, xi, xi, indexing="ij")
    d = np.stack([np.cos(E) * np.exp(1j * X1), np.sin(E) * np.exp(1j * X2)], axis=-1)
    return d.reshape(-1, 2)


# ------------------------------------------------------------------ background


@dataclass(frozen=True)
class BackgroundSpec:
    """Background form plus optional pseudoconvexity augmentation ``A (|z|^2 - R^2)``."""

    base: str = "flat"
    augmentation: float = 0.0
    R: float = 1.0

    def __post_init__(self):
        if self.base not in ("flat", "zero", "fubini-study"):
            raise ValueError(f"unknown background {self.base!r}")
        if self.augmentation < 0:
            raise ValueError("augmentation must be >= 0")

    def potential(self, z):
        z = np.atleast_2d(z)
        r2 = np.sum(np.abs(z) ** 2, axis=1)
        base = {"flat": r2, "zero": 0.0 * r2, "fubini-study": np.log1p(r2)}[self.base]
        return base + self.augmentation * (r2 - self.R ** 2)

    def matrix(self, z) -> np.ndarray:
        z = np.atleast_2d(z)
        k, n = z.shape
        eye = np.broadcast_to(np.eye(n, dtype=complex), (k, n, n))
        if self.base == "flat":
            M = eye.copy()
        elif self.base == "zero":
            M = np.zeros((k, n, n), dtype=complex)
        else:
            s = 1 + np.sum(np.abs(z) ** 2, axis=1)
            M = eye / s[:, None, None] - np.conj(z)[:, :, None] * z[:, None, :] / (s ** 2)[:, None, None]
        return M + self.augmentation * eye


# ------------------------------------------------------------ glued potential


def _pole_terms(P: Pole, z, need_hessian: bool):
    w = np.atleast_2d(z) - P.position[None, :]
    rho = np.linalg.norm(w, axis=1)
    psi = P.cutoff.q(rho)
    inside = rho < P.r_out
    S = P.sum_sq(w)
    L = np.zeros_like(rho)
    L[inside] = np.log(S[inside])
    if not need_hessian:
        return psi, L, None
    k, n = w.shape
    Hm = np.zeros((k, n, n), dtype=complex)
    if not inside.any():
        return psi, L, Hm
    wi, ri, Si, Li = w[inside], rho[inside], S[inside], L[inside]
    vals = [p(wi) for p in P.f]
    grads = [p.grad(wi) for p in P.f]
    # S_j = sum_l d_j f_l conj(f_l), S_{j kbar} = sum_l d_j f_l conj(d_k f_l)
    Sj = sum(g * np.conj(v)[:, None] for g, v in zip(grads, vals))
    Sjk = sum(g[:, :, None] * np.conj(g)[:, None, :] for g in grads)
    Lj = Sj / Si[:, None]
    Lkb = np.conj(Lj)
    Ljk = Sjk / Si[:, None, None] - Sj[:, :, None] * np.conj(Sj)[:, None, :] / (Si ** 2)[:, None, None]
    q1 = P.cutoff.dq(ri)
    q2 = P.cutoff.d2q(ri)
    psi_i = psi[inside]
    trans = q1 != 0
    rs = np.where(ri > 0, ri, 1.0)
    psi_j = (q1 / (2 * rs))[:, None] * np.conj(wi)
    psi_kb = np.conj(psi_j)
    coef = np.where(trans | (q2 != 0), q2 / (4 * rs ** 2) - q1 / (4 * rs ** 3), 0.0)
    eye = np.eye(n)[None]
    psi_jk = coef[:, None, None] * np.conj(wi)[:, :, None] * wi[:, None, :] + (q1 / (2 * rs))[:, None, None] * eye
    H = (psi_jk * (Li - 1)[:, None, None]
         + psi_j[:, :, None] * Lkb[:, None, :]
         + Lj[:, :, None] * psi_kb[:, None, :]
         + psi_i[:, None, None] * Ljk)
    Hm[inside] = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    return psi, L, Hm


def _check_poles(S: SingularityData, z):
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    for P in S.poles:
        if np.any(np.linalg.norm(z - P.position[None, :], axis=1) == 0):
            raise EvaluationAtPole("evaluation at a pole")
    return z


def glued_terms(S: SingularityData, z):
    """Per-pole glued terms ``psi_m log sum|f|^2 + 1 - psi_m``, shape (M, k)."""
    z = _check_poles(S, z)
    out = []
    for P in S.poles:
        psi, L, _ = _pole_terms(P, z, False)
        out.append(psi * L + 1.0 - psi)
    return np.array(out).reshape(len(S.poles), len(z))


def glued_potential(S: SingularityData, z):
    """Glued singular potential ``sum_m eps_m [psi_m log sum_j |f_jm|^2 + 1 - psi_m]``.

    Parameters
    ----------
    S : SingularityData
    z : array_like, shape (n,) or (k, n)

    Returns
    -------
    float or ndarray
    """
    zz = np.asarray(z)
    single = zz.ndim == 1
    terms = glued_terms(S, z)
    eps = np.array([P.epsilon for P in S.poles])
    val = eps @ terms if len(eps) else np.zeros(terms.shape[1])
    return float(val[0]) if single else val


def glued_ddbar(S: SingularityData, z, weights=None) -> np.ndarray:
    """Exact complex Hessian of ``sum_m weights_m * glued_m`` at points ``z``."""
    z = _check_poles(S, z)
    k, n = z.shape
    w = [P.epsilon for P in S.poles] if weights is None else list(weights)
    H = np.zeros((k, n, n), dtype=complex)
    for P, wt in zip(S.poles, w):
        H += wt * _pole_terms(P, z, True)[2]
    return H


def omega_delta(S: SingularityData, B: BackgroundSpec, delta: float, z) -> np.ndarray:
    """Coefficient matrix of ``omega + delta (i/2) ddbar(psi log sum|f|^2 + 1 - psi)``.

    The same ``delta`` multiplies the glued term of every pole; since the
    pole balls are disjoint at most one term is active at any point.
    """
    zz = np.asarray(z)
    single = zz.ndim == 1
    H = B.matrix(np.atleast_2d(zz)) + glued_ddbar(S, zz, [delta] * len(S.poles))
    return H[0] if single else H


def transition_samples(S: SingularityData, radial: int = 17, angular: int | None = None) -> np.ndarray:
    """Sample points in every annulus ``r_in <= |z - p_m| <= r_out``."""
    pts = []
    for P in S.poles:
        dirs = sphere_directions(len(P.position), angular)
        for r in np.linspace(P.r_in, P.r_out, radial):
            pts.append(P.position[None, :] + r * dirs)
    return np.concatenate(pts, axis=0)


def max_feasible_epsilon(S: SingularityData, B: BackgroundSpec, margin: float = 1e-6,
                         delta_hi: float = 1.0, steps: int = 20, points=None) -> float:
    """Largest uniform weight keeping omega_delta positive on the transition annuli.

    Parameters
    ----------
    margin : float
        Positivity margin on the smallest eigenvalue.
    delta_hi : float
        Upper end of the bisection bracket ``[0, delta_hi]``.
    points : array_like, optional
        Sample points; defaults to :func:`transition_samples`.

    Returns
    -------
    float
        The bisection lower end after ``steps`` halvings, ``delta_hi``
        when the whole bracket passes, or ``inf`` when an augmented
        background makes the whole bracket pass.

    Raises
    ------
    InfeasibleBackground
        If the background itself fails the positivity test.
    """
    pts = transition_samples(S) if points is None else np.atleast_2d(points)
    W = B.matrix(pts)
    if not np.all(min_eigenvalue(W) > margin):
        raise InfeasibleBackground("background form is not positive on the samples")
    Q = glued_ddbar(S, pts, [1.0] * len(S.poles))

    def ok(d):
        return bool(np.all(min_eigenvalue(W + d * Q) > margin))

    if ok(delta_hi):
        return np.inf if B.augmentation > 0 else float(delta_hi)
    lo, hi = 0.0, float(delta_hi)
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def auto_augmentation(S: SingularityData, base: BackgroundSpec, margin: float = 1e-6,
                      max_power: int = 30) -> BackgroundSpec:
    """Least power-of-two augmentation making every pole weight feasible."""
    pts = transition_samples(S)
    need = max(S.max_epsilon, 1e-12)
    A = 2.0 ** -4
    for _ in range(max_power):
        B = BackgroundSpec(base.base, A, base.R)
        try:
            if max_feasible_epsilon(S, B, margin, delta_hi=need, points=pts) >= need:
                return B
        except InfeasibleBackground:
            pass
        A *= 2
    raise InfeasibleBackground("no augmentation up to 2^26 makes the problem feasible")
