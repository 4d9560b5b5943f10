"""Monotone envelope backend for the degenerate Dirichlet problem.

The discrete problem is the fixed point

    Phi(p) = min_v [ mean_theta (V + Phi)(p + h e^{i theta} v) ] - V(p)

at interior nodes, where ``V`` is the analytic part of the potential and
off-grid samples are interpolated multilinearly. Multilinear
interpolation biases the circle mean by a multiple of the real second
derivatives; to keep that bias away from the logarithmic poles, each
pole's ``eps log sum|f|^2`` is sampled exactly (``sources='split'``). The update
is monotone and the min is over finitely many linear operators, so the
fixed point is computed by policy iteration: freeze the minimising
direction at every node, solve the resulting linear M-matrix system,
re-select, and repeat until the update stalls.
"""
from __future__ import annotations

import logging
import time

import numpy as np
import scipy.sparse as sp

from ..errors import NonConvergence, StencilOutOfDomain
from ..geometry import (BOUNDARY, EXCISED, INTERIOR, OUTSIDE, circle_kernel,
                        default_directions)
from . import linear
from .closure import monotone_closure
from .diagnostics import assemble, c1_trace
from .problem import GreenProblem, SolveReport

log = logging.getLogger(__name__)


class EnvelopeOperator:
    """Direction-wise affine maps ``A_k(Phi) = S_k + K_k Phi`` at interior nodes."""

    def __init__(self, problem: GreenProblem, mask=None, sources: str | None = None):
        cfg = problem.solver
        dom = problem.domain
        self.problem = problem
        self.domain = dom
        self.mask = problem.mask() if mask is None else mask
        flat = self.mask.ravel()
        self.idx = np.flatnonzero(flat == INTERIOR)
        self.dirs = default_directions(dom.n, cfg.directions)
        self.samples = cfg.samples
        self.offsets, self.weights = [], []
        for v in self.dirs:
            offs, w = circle_kernel(v, self.samples)
            flat_off = offs @ dom.strides
            self.offsets.append(flat_off)
            self.weights.append(w)
            for o in offs:
                j = dom.shift(self.idx, o)
                if np.any(j < 0) or np.any(flat[j] == OUTSIDE):
                    raise StencilOutOfDomain("direction stencil leaves the computational set")
        mode = sources or cfg.sources or "split"
        self.source_mode = mode
        if mode == "exact":
            self.S = self._sources_exact()
        else:
            self.S = self._sources_interpolated()
            if mode == "split":
                self._split_correction()

    def _sources_interpolated(self):
        dom, P = self.domain, self.problem
        flat = self.mask.ravel()
        live = np.flatnonzero(flat != OUTSIDE)
        Vn = np.zeros(dom.size)
        Vn[live] = P.V(dom.node_points(live))
        if not np.all(np.isfinite(Vn[live])):
            raise StencilOutOfDomain("a grid node coincides with a pole")
        S = np.empty((len(self.dirs), len(self.idx)))
        for k in range(len(self.dirs)):
            acc = -Vn[self.idx]
            for o, w in zip(self.offsets[k], self.weights[k]):
                acc = acc + w * Vn[self.idx + o]
            S[k] = acc
        return S

    def _split_correction(self, chunk: int = 400_000):
        """Sample each pole's ``eps log sum|f|^2`` exactly instead of interpolating it.

        The logarithmic term is maximal off the pole, so moving it out of
        the interpolated part leaves only a bounded smooth remainder
        exposed to the multilinear interpolation bias. The correction is
        applied wherever the logarithm is finite on the whole stencil;
        otherwise it is restricted to the pole ball.
        """
        dom, P = self.domain, self.problem
        flat = self.mask.ravel()
        live = np.flatnonzero(flat != OUTSIDE)
        pts_live = dom.node_points(live)
        pts = dom.node_points(self.idx)
        ang = np.exp(2j * np.pi * np.arange(self.samples) / self.samples)
        reach = dom.h * (1 + np.sqrt(2 * dom.n))
        for pole in P.singularities.poles:
            def logpart(z, pole=pole):
                return pole.epsilon * np.log(pole.sum_sq(z - pole.position[None, :]))
            Ln = np.zeros(dom.size)
            with np.errstate(divide="ignore"):
                Ln[live] = logpart(pts_live)
            dist = np.linalg.norm(pts - pole.position[None, :], axis=1)
            if np.all(np.isfinite(Ln[live][np.linalg.norm(pts_live - pole.position[None, :], axis=1) > 0.5 * dom.h])):
                sel = np.flatnonzero(dist >= P.excision_radius)
            else:
                sel = np.flatnonzero((dist >= P.excision_radius) & (dist <= pole.r_out - reach))
            if not len(sel):
                continue
            step = max(1, chunk // self.samples)
            for k, v in enumerate(self.dirs):
                off = dom.h * ang[:, None] * v[None, :]
                interp = np.zeros(len(sel))
                for o, w in zip(self.offsets[k], self.weights[k]):
                    interp += w * Ln[self.idx[sel] + o]
                exact = np.empty(len(sel))
                for a in range(0, len(sel), step):
                    sl = slice(a, a + step)
                    q = (pts[sel[sl]][:, None, :] + off[None, :, :]).reshape(-1, dom.n)
                    exact[sl] = logpart(q).reshape(-1, self.samples).mean(axis=1)
                self.S[k, sel] += exact - interp

    def _sources_exact(self, chunk: int = 400_000):
        dom, P = self.domain, self.problem
        pts = dom.node_points(self.idx)
        Vp = P.V(pts)
        ang = np.exp(2j * np.pi * np.arange(self.samples) / self.samples)
        S = np.empty((len(self.dirs), len(self.idx)))
        step = max(1, chunk // self.samples)
        for k, v in enumerate(self.dirs):
            off = dom.h * ang[:, None] * v[None, :]
            for a in range(0, len(self.idx), step):
                sl = slice(a, a + step)
                q = (pts[sl][:, None, :] + off[None, :, :]).reshape(-1, dom.n)
                S[k, sl] = P.V(q).reshape(-1, self.samples).mean(axis=1) - Vp[sl]
        return S

    def evaluate(self, phi):
        """Values ``A_k(Phi)`` for every direction, shape (K, n_interior)."""
        out = self.S.copy()
        for k in range(len(self.dirs)):
            for o, w in zip(self.offsets[k], self.weights[k]):
                out[k] += w * phi[self.idx + o]
        return out

    def policy_matrix(self, pol):
        N = self.domain.size
        R, C, W = [], [], []
        for k in range(len(self.dirs)):
            sel = self.idx[pol == k]
            if not len(sel):
                continue
            for o, w in zip(self.offsets[k], self.weights[k]):
                R.append(sel)
                C.append(sel + o)
                W.append(np.full(len(sel), w))
        if not R:
            return sp.csr_matrix((N, N))
        return sp.csr_matrix((np.concatenate(W), (np.concatenate(R), np.concatenate(C))), shape=(N, N))

    def defect(self, phi):
        """Per-node ``min_v L_v (V + Phi)`` with ``L_v`` the 4/h^2-scaled direction Laplacian."""
        A = self.evaluate(phi)
        return 4.0 / self.domain.h ** 2 * (A.min(axis=0) - phi[self.idx])


def operator_for(problem: GreenProblem, sources: str | None = None):
    cache = problem.__dict__.setdefault("_cache", {})
    key = ("envelope_operator", sources)
    if key not in cache:
        cache[key] = EnvelopeOperator(problem, sources=sources)
    return cache[key]


def solve_envelope(problem: GreenProblem, phi0=None) -> SolveReport:
    """Discrete maximal remainder with the given boundary values.

    Parameters
    ----------
    problem : GreenProblem
    phi0 : ndarray, optional
        Initial remainder on all nodes (policy iteration only uses it to
        pick the first policy).

    Returns
    -------
    SolveReport

    Raises
    ------
    NonConvergence
        After ``max_sweeps`` outer iterations without meeting the
        tolerance; the partial report is attached as ``last``.
    """
    t_start = time.perf_counter()
    op = operator_for(problem)
    dom, mask = problem.domain, op.mask
    flat = mask.ravel()
    N = dom.size
    bd = np.flatnonzero(flat == BOUNDARY)
    E, ex = monotone_closure(problem, mask)
    unknown = np.flatnonzero(np.isin(flat, (INTERIOR, EXCISED)))
    phi = np.zeros(N) if phi0 is None else np.array(phi0, dtype=float)
    phi[flat == OUTSIDE] = 0.0
    phi[bd] = problem.phi_boundary(bd)
    if len(ex):
        phi[ex] = E[ex] @ phi
    tol = problem.tol
    cfg = problem.solver
    converged = False
    it = 0
    res = np.inf
    for it in range(cfg.max_sweeps):
        A = op.evaluate(phi)
        pol = np.argmin(A, axis=0)
        upd = A[pol, np.arange(len(op.idx))]
        res = float(np.max(np.abs(upd - phi[op.idx]))) if len(op.idx) else 0.0
        if len(ex):
            res = max(res, float(np.max(np.abs(E[ex] @ phi - phi[ex]))))
        log.debug("envelope iteration %d residual %.3e", it, res)
        if res < tol:
            converged = True
            break
        if cfg.method == "jacobi":
            phi[op.idx] = upd
            if len(ex):
                phi[ex] = E[ex] @ phi
            continue
        M = op.policy_matrix(pol)
        Afull = sp.identity(N, format="csr") - M - E
        Afull = Afull.tocsr()
        Auu = Afull[unknown][:, unknown]
        rhs = np.zeros(N)
        rhs[op.idx] = op.S[pol, np.arange(len(op.idx))]
        b = rhs[unknown] - Afull[unknown][:, bd] @ phi[bd]
        x = linear.solve(Auu, b, x0=phi[unknown], tol=cfg.linear_tol, planar=dom.n == 1)
        phi[unknown] = x
    iterations = it + 1 if converged else cfg.max_sweeps
    phi_grid, green = assemble(problem, mask, phi)
    defect = op.defect(phi)
    residual = float(np.max(np.abs(defect))) if len(defect) else 0.0
    psh = float(max(0.0, -defect.min())) if len(defect) else 0.0
    trace, C2 = c1_trace(dom, [(0.0, phi)], op.idx)
    report = SolveReport(phi_grid, green, residual, iterations, trace, "envelope",
                         converged=converged, psh_defect=psh, phi_full=phi,
                         info={"update_residual": res, "C2": C2,
                               "seconds": time.perf_counter() - t_start,
                               "directions": len(op.dirs)})
    if not converged:
        raise NonConvergence(
            f"envelope backend: update {res:.3e} above tolerance {tol:.1e} after {cfg.max_sweeps} iterations",
            max_sweeps=cfg.max_sweeps, last=report)
    return report
