"""Problem and report types for the Monge-Ampere Dirichlet solves."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InfeasibleBackground, InfeasibleProblem, InvalidSingularityData
from ..geometry import (BOUNDARY, EXCISED, INTERIOR, OUTSIDE, ComplexGrid,
                        DomainSpec, build_mask)
from ..singularity import (BackgroundSpec, SingularityData, auto_augmentation,
                           glued_ddbar, glued_terms, max_feasible_epsilon)


@dataclass
class SolverConfig:
    """Numerical parameters shared by both backends.

    ``max_sweeps`` counts outer iterations of the envelope backend (policy
    updates, or relaxation sweeps with ``method='jacobi'``). ``tol``
    defaults to ``1e-8`` times the domain scale.
    """

    directions: int = 32
    samples: int = 8
    max_sweeps: int = 100000
    tol: float | None = None
    method: str = "policy"
    t0: float = 1.0
    ratio: float = 0.5
    t_min: float = 1e-3
    newton_max_iter: int = 30
    newton_tol: float = 1e-9
    max_halvings: int = 30
    linear_tol: float = 1e-10
    extrapolate: bool = True
    sources: str | None = None

    def __post_init__(self):
        if self.method not in ("policy", "jacobi"):
            raise ValueError("method must be 'policy' or 'jacobi'")
        if self.sources not in (None, "split", "interpolated", "exact"):
            raise ValueError("sources must be 'split', 'interpolated' or 'exact'")
        if not (0 < self.t_min <= self.t0 <= 1):
            raise ValueError("t schedule needs 0 < t_min <= t0 <= 1")
        if self.t_min < 1e-4:
            raise ValueError("t_min must be >= 1e-4")
        if not (0 < self.ratio < 1):
            raise ValueError("t ratio must lie in (0, 1)")

    def t_schedule(self):
        ts = [self.t0]
        while ts[-1] * self.ratio >= self.t_min * (1 - 1e-12):
            ts.append(ts[-1] * self.ratio)
        return ts


@dataclass
class GreenProblem:
    """Dirichlet problem for the bounded remainder of a Green's function.

    Parameters
    ----------
    domain : DomainSpec
    background : BackgroundSpec
        Its base potential enters the solved potential; any augmentation
        only serves the feasibility gate and the Newton initial guess.
    singularities : SingularityData
    boundary_data : float or callable
        Dirichlet data for G on the boundary, evaluated at the nearest
        boundary point of each boundary node.
    delta : float, optional
        Weight of the glued term in omega_delta; defaults to the largest
        pole weight.
    excision_radius : float, optional
        Core radius removed around each pole; defaults to ``4 h``.
    solver : SolverConfig
    """

    domain: DomainSpec
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    singularities: SingularityData = field(default_factory=SingularityData)
    boundary_data: object = 0.0
    delta: float | None = None
    excision_radius: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    margin: float = 1e-6

    def __post_init__(self):
        dom = self.domain
        if dom.periodic:
            raise InfeasibleProblem("Green problems need a domain with boundary")
        try:
            self.singularities.validate(dom)
        except InvalidSingularityData as exc:
            raise InfeasibleProblem(str(exc)) from exc
        if self.excision_radius is None:
            self.excision_radius = 4 * dom.h
        for m, P in enumerate(self.singularities.poles):
            if not self.excision_radius < P.r_in / 2:
                raise InfeasibleProblem(
                    f"pole {m}: excision radius {self.excision_radius:.4g} must be < r_in/2 = {P.r_in / 2:.4g}")
        if self.delta is None:
            self.delta = self.singularities.max_epsilon
        if self.delta < self.singularities.max_epsilon:
            raise InfeasibleProblem("delta must be at least the largest pole weight")
        self.gate_background = self.background
        self.feasible_epsilon = np.inf
        if self.singularities.poles:
            self._gate()
        if not callable(self.boundary_data) and not np.isfinite(float(self.boundary_data)):
            raise InfeasibleProblem("boundary data must be finite")

    def _gate(self):
        S, B = self.singularities, self.background
        try:
            if B.base == "zero" and B.augmentation == 0:
                if not self.domain.strongly_pseudoconvex:
                    raise InfeasibleProblem("zero background needs a strongly pseudoconvex domain")
                B = auto_augmentation(S, BackgroundSpec("zero", 0.0, self.domain.radii[0]), self.margin)
            eps0 = max_feasible_epsilon(S, B, self.margin, delta_hi=max(1.0, self.delta))
        except InfeasibleBackground as exc:
            raise InfeasibleProblem(str(exc)) from exc
        self.gate_background = B
        self.feasible_epsilon = eps0
        if self.delta > eps0:
            raise InfeasibleProblem(
                f"weight {self.delta:.4g} exceeds the feasible bound {eps0:.4g} for omega_delta > 0")

    # ------------------------------------------------------------ evaluation
    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def eps_total(self) -> float:
        return float(sum(P.epsilon for P in self.singularities.poles))

    def cores(self):
        return [(P.position, self.excision_radius) for P in self.singularities.poles]

    def mask(self) -> np.ndarray:
        return build_mask(self.domain, self.cores())

    def base_potential(self, z):
        B = self.background
        return BackgroundSpec(B.base, 0.0, B.R).potential(z)

    def base_matrix(self, z):
        B = self.background
        return BackgroundSpec(B.base, 0.0, B.R).matrix(z)

    def singular_potential(self, z):
        """``s(z) = sum_m eps_m glued_m(z)``."""
        z = np.atleast_2d(z)
        if not self.singularities.poles:
            return np.zeros(len(z))
        eps = np.array([P.epsilon for P in self.singularities.poles])
        return eps @ glued_terms(self.singularities, z)

    def V(self, z):
        """Analytic part ``q_omega + s`` of the total potential."""
        return self.base_potential(z) + self.singular_potential(z)

    def H_V(self, z):
        z = np.atleast_2d(z)
        H = self.base_matrix(z)
        if self.singularities.poles:
            H = H + glued_ddbar(self.singularities, z)
        return H

    def boundary_values(self, z):
        """Dirichlet data for G at (projected) boundary points."""
        z = np.atleast_2d(z)
        if callable(self.boundary_data):
            return np.asarray(self.boundary_data(z), dtype=float).reshape(len(z))
        return np.full(len(z), float(self.boundary_data))

    def phi_boundary(self, idx):
        """Data for the remainder at boundary nodes: ``phi_b(proj) - s + sum eps``."""
        pts = self.domain.node_points(idx)
        proj, _, _ = self.domain.project(pts)
        return self.boundary_values(proj) - self.singular_potential(pts) + self.eps_total

    def phi_boundary_projected(self, idx):
        """Remainder data evaluated at the boundary point itself."""
        proj, _, _ = self.domain.project(self.domain.node_points(idx))
        return self.boundary_values(proj) - self.singular_potential(proj) + self.eps_total

    @property
    def tol(self) -> float:
        t = self.solver.tol
        return 1e-8 * self.domain.scale if t is None else t


@dataclass
class SolveReport:
    """Outcome of one backend run.

    Attributes
    ----------
    phi, green : ComplexGrid
        Bounded remainder and assembled Green's function (excised and
        padding nodes carry NaN).
    residual_max : float
        Max over interior nodes of ``|min_v L_v (V + Phi)|``, the
        discrete maximality defect.
    iterations : int
        Outer iterations (envelope) or total Newton steps (regularized).
    c1_trace : list of (t, value)
    backend : str
    """

    phi: ComplexGrid
    green: ComplexGrid
    residual_max: float
    iterations: int
    c1_trace: list
    backend: str
    converged: bool = True
    psh_defect: float = 0.0
    phi_full: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def green_callable(self, problem: GreenProblem):
        """Evaluate G off-grid as ``s + interp(Phi) - sum eps``.

        The remainder is interpolated from the closure-extended array, so
        the callable is defined inside the excised cores as well.
        """
        from ..geometry import interpolate

        full = ComplexGrid(self.phi.domain, self.phi_full, np.where(
            self.phi.mask == OUTSIDE, OUTSIDE, INTERIOR))

        def G(z):
            z = np.atleast_2d(z)
            return problem.singular_potential(z) + interpolate(full, z) - problem.eps_total

        return G


def carrying_mask(mask) -> np.ndarray:
    return np.isin(mask, (INTERIOR, BOUNDARY))


__all__ = ["SolverConfig", "GreenProblem", "SolveReport", "INTERIOR", "BOUNDARY",
           "EXCISED", "OUTSIDE", "DomainSpec", "carrying_mask"]
