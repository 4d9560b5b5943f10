"""Run orchestration: build the pipeline from a config, persist grids, report and manifest.

Exit codes: 0 success, 1 solver failure (partial outputs and manifest are
still written), 2 configuration or feasibility error (nothing written).
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import RunConfig, serialize
from .errors import (ConfigError, InfeasibleBackground, InfeasibleProblem, InsufficientRadii,
                     InvalidDomain, InvalidSingularityData, NewtonDivergence, NonConvergence,
                     NotPositive, PlurigreenError, PositivityLoss, RadiusOutOfRange, StageFailure,
                     StencilOutOfDomain, SymmetryViolation, UnknownSuite)
from .geometry import OUTSIDE

log = logging.getLogger("plurigreen")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2
SOLVER_FAILURES = (NonConvergence, NewtonDivergence, PositivityLoss)
SETUP_FAILURES = (InfeasibleProblem, InfeasibleBackground, InvalidDomain, InvalidSingularityData,
                  SymmetryViolation, UnknownSuite, ConfigError)
MANIFEST = "manifest.json"
LOG_NAME = "run.log"


def fmt(x) -> str:
    """17 significant digits, ``nan``/``inf`` spelled out."""
    return "{:.17g}".format(float(x))


# ----------------------------------------------------------------- writers
class OutputDir:
    """Serialized writer that records timings and the file inventory."""

    def __init__(self, path: Path):
        self.path = path
        self.timings: dict[str, float] = {}

    def write_text(self, name: str, text: str):
        with open(self.path / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def write_grid(self, name: str, grid, values=None):
        """One row per non-padding node in row-major order: coordinates then value."""
        dom = grid.domain
        vals = grid.values.ravel() if values is None else np.asarray(values).ravel()
        idx = np.flatnonzero(grid.mask.ravel() != OUTSIDE)
        coords = dom.node_real(idx)
        cols = [f"{p}_z{j + 1}" for j in range(dom.n) for p in ("re", "im")]
        self.write_table(name, cols + ["value"], np.column_stack([coords, vals[idx]]))

    def write_table(self, name: str, header, rows):
        lines = [",".join(header)]
        lines += [",".join(fmt(v) for v in row) for row in np.asarray(rows, dtype=float)]
        self.write_text(name, "\n".join(lines) + "\n")

    def write_report(self, fields: dict):
        """``key=value`` lines followed by the same content as a JSON block."""
        flat = {}

        def walk(prefix, v):
            if isinstance(v, dict):
                for k, w in v.items():
                    walk(f"{prefix}.{k}" if prefix else str(k), w)
            elif isinstance(v, list) and v and all(isinstance(w, dict) for w in v):
                for k, w in enumerate(v):
                    walk(f"{prefix}.{k}", w)
            else:
                flat[prefix] = v

        walk("", fields)
        lines = ["# plurigreen report"]
        for k, v in flat.items():
            lines.append(f"{k}={_text(v)}")
        lines += ["", "--- json ---", json.dumps(_jsonable(fields), indent=2, sort_keys=False)]
        self.write_text("report.txt", "\n".join(lines) + "\n")


def _text(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if v is None:
        return "null"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_text(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(w) for k, w in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v) if np.isfinite(v) else str(float(v))
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _clear_previous(path: Path):
    """Remove outputs listed by an earlier manifest in the same directory."""
    old = path / MANIFEST
    if not old.exists():
        return
    try:
        names = [f["name"] for f in json.loads(old.read_text())["files"]]
    except (ValueError, KeyError, TypeError):
        names = []
    for name in names:
        p = path / name
        if p.is_file() and p.parent == path:
            p.unlink()
    old.unlink()


# ------------------------------------------------------------- builders
def build_green_problem(g):
    """``GreenProblem`` from a validated green block."""
    from .geometry import DomainSpec
    from .singularity import BackgroundSpec, Pole, SingularityData
    from .solver import GreenProblem, SolverConfig

    dom = DomainSpec(g.domain.kind, tuple(g.domain.radii), g.domain.resolution)
    poles = [Pole(np.array(P.position), P.epsilon, list(P.f), P.r_in, P.r_out) for P in g.singularities]
    R = dom.radii[-1]
    bg = BackgroundSpec(g.background.base, g.background.augmentation, R)
    s = g.solver
    cfg = SolverConfig(directions=s.directions, samples=s.samples, max_sweeps=s.max_sweeps, tol=s.tol,
                       method=s.method, t0=s.t0, ratio=s.ratio, t_min=s.t_min,
                       newton_max_iter=s.newton_max_iter, newton_tol=s.newton_tol,
                       extrapolate=s.extrapolate, sources=s.sources)
    return GreenProblem(dom, bg, SingularityData(poles), float(g.boundary),
                        excision_radius=g.excision_radius, solver=cfg)


def _prepare(cfg: RunConfig):
    """Build everything that can fail for configuration reasons, before any file is written."""
    c = cfg.command
    if c == "green":
        return build_green_problem(cfg.green)
    if c == "torus":
        from .torus import TorusProblem

        t = cfg.torus
        return TorusProblem(n=t.n, period=t.period, resolution=t.resolution, epsilon=t.epsilon,
                            pole=None if t.pole is None else np.array(t.pole), sigma=t.sigma)
    if c == "ray":
        from .ray import RayPole, RayProblem, gate_augmentation

        r = cfg.ray
        P = RayProblem(T=r.T, poles=[RayPole(p.at, tuple(p.f), p.epsilon) for p in r.poles],
                       r_in=r.r_in, r_out=r.r_out, resolution=r.resolution)
        P.gate = gate_augmentation(P)
        return P
    if c == "blowup":
        from .blowup import CutoffProfile, ExceptionalMetric

        b = cfg.blowup
        m1 = ExceptionalMetric(cutoff=CutoffProfile(b.r_in, b.r_out))
        m2 = None if b.stage2 is None else ExceptionalMetric(
            cutoff=CutoffProfile(b.stage2.r_in, b.stage2.r_out))
        return m1, m2
    if c == "verify":
        from .verify import SUITES

        if cfg.verify.suite not in SUITES:
            raise UnknownSuite(f"unknown suite {cfg.verify.suite!r}; choose from {sorted(SUITES)}")
        return cfg.verify
    raise ConfigError(f"unknown command {c!r}")


# -------------------------------------------------------------- pipelines
def _lelong_rows(problem, G):
    out = []
    for m, P in enumerate(problem.singularities.poles):
        from .measure import lelong_number

        try:
            est = lelong_number(G, P.position, r_in=P.r_in, pole_index=m)
            out.append({"pole": m, "nu": est.nu, "expected": P.epsilon * P.order,
                        "fit_residual": est.fit_residual})
        except (InsufficientRadii, StencilOutOfDomain) as exc:
            out.append({"pole": m, "nu": None, "note": str(exc)})
    return out


def _green_outputs(out: OutputDir, problem, rep, status: str, extra: dict):
    from .geometry import HermitianField
    from .measure import green_mass_ledger, ma_density
    from .oracles import oracle_for
    from .verify import sup_error

    dom = problem.domain
    t = time.perf_counter()
    base = HermitianField(dom, problem.base_matrix(dom.all_points()))
    dens = ma_density(rep.green, base)
    out.write_grid("G.csv", rep.green)
    out.write_grid("phi.csv", rep.phi)
    out.write_grid("density.csv", dens)
    out.timings["write_grids"] = time.perf_counter() - t
    fields = {"command": "green", "status": status, "backend": rep.backend,
              "converged": bool(rep.converged), "iterations": rep.iterations,
              "residual_max": rep.residual_max, "psh_defect": rep.psh_defect,
              "feasible_epsilon": problem.feasible_epsilon,
              "excision_radius": problem.excision_radius,
              "negative_density_nodes": dens.meta["negative_nodes"]}
    if status == "converged":
        t = time.perf_counter()
        try:
            fields["mass"] = green_mass_ledger(problem, rep).to_dict()
        except (RadiusOutOfRange, InsufficientRadii, StencilOutOfDomain) as exc:
            # the solve itself succeeded; only the flux spheres do not fit the grid
            log.warning("mass ledger unavailable: %s", exc)
            fields["mass"] = {"unavailable": str(exc)}
        fields["lelong"] = _lelong_rows(problem, rep.green_callable(problem))
        oracle = oracle_for(problem)
        fields["oracle_sup_error"] = None if oracle is None else sup_error(problem, rep, oracle, 0.05)
        out.timings["diagnostics"] = time.perf_counter() - t
    fields["c1_trace"] = [[float(a), float(b)] for a, b in rep.c1_trace]
    fields["info"] = {k: v for k, v in rep.info.items() if np.isscalar(v) or v is None}
    fields.update(extra)
    out.write_report(fields)


def run_green(problem, out: OutputDir, backend: str):
    from .solver import solve
    from .solver.diagnostics import assemble
    from .solver.problem import SolveReport

    t = time.perf_counter()
    try:
        rep = solve(problem, backend)
    except SOLVER_FAILURES as exc:
        out.timings["solve"] = time.perf_counter() - t
        log.error("%s: %s", type(exc).__name__, exc)
        last = exc.last
        if isinstance(last, SolveReport):
            rep = last
        elif last is not None:
            phi, green = assemble(problem, problem.mask(), last)
            rep = SolveReport(phi, green, float("nan"), 0, [], backend, converged=False, phi_full=last)
        else:
            out.write_report({"command": "green", "status": "failed", "backend": backend,
                              "error": f"{type(exc).__name__}: {exc}"})
            return EXIT_SOLVER
        rep.converged = False
        _green_outputs(out, problem, rep, "partial", {"error": f"{type(exc).__name__}: {exc}"})
        return EXIT_SOLVER
    out.timings["solve"] = time.perf_counter() - t
    log.info("solved with %s: residual %.3e after %d iterations", backend, rep.residual_max, rep.iterations)
    _green_outputs(out, problem, rep, "converged", {})
    return EXIT_OK


def run_torus(P, out: OutputDir, study: bool):
    from .torus import sigma_extrapolation, solve_torus

    t = time.perf_counter()
    rep, led = solve_torus(P)
    out.timings["solve"] = time.perf_counter() - t
    from .geometry import HermitianField
    from .measure import ma_density

    dom = P.domain
    dens = ma_density(rep.phi, HermitianField(dom, np.broadcast_to(P.c * np.eye(P.n), (dom.size, P.n, P.n))))
    out.write_grid("phi.csv", rep.phi)
    out.write_grid("density.csv", dens)
    fields = {"command": "torus", "status": "converged", "n": P.n, "backend": rep.backend,
              "residual_max": rep.residual_max, "iterations": rep.iterations,
              "mass": led.to_dict(),
              "info": {k: v for k, v in rep.info.items() if np.isscalar(v) or v is None}}
    if study:
        t = time.perf_counter()
        ex = sigma_extrapolation(P)
        out.timings["sigma_study"] = time.perf_counter() - t
        fields["sigma_study"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in ex.items()}
    out.write_report(fields)
    return EXIT_OK


def run_ray(P, out: OutputDir, slices: int):
    from .ray import ray_nontriviality, solve_ray

    t = time.perf_counter()
    R = solve_ray(P, slices)
    out.timings["solve"] = time.perf_counter() - t
    S, T = np.meshgrid(R.s, R.t)
    out.write_table("u.csv", ["s", "t", "value"], np.column_stack([S.ravel(), T.ravel(), R.u.ravel()]))
    out.write_table("Phi.csv", ["s", "t", "value"], np.column_stack([S.ravel(), T.ravel(), R.Phi.ravel()]))
    rows = np.concatenate([np.column_stack([np.full(len(R.s), tk), R.s, v]) for tk, v in R.slices])
    out.write_table("slices.csv", ["t", "s", "value"], rows)
    fields = {"command": "ray", "status": "converged", "T": P.T,
              "poles": [{"at": p.at, "f": list(p.f), "epsilon": p.epsilon} for p in P.poles],
              "nontriviality": ray_nontriviality(R.slices) if len(R.slices) >= 3 else None,
              "sup_abs_Phi": float(np.max(np.abs(R.Phi))),
              "info": {k: v for k, v in R.info.items() if np.isscalar(v)}}
    out.write_report(fields)
    return EXIT_OK


def run_blowup(metrics, cfg, out: OutputDir):
    from .blowup import iterated_metric, positivity_threshold

    m1, m2 = metrics
    t = time.perf_counter()
    R = positivity_threshold(m1, K=cfg.K.model_dump())
    out.timings["stage1"] = time.perf_counter() - t
    w = R.samples
    out.write_table("witness.csv", ["re_zeta0", "im_zeta0", "re_theta", "im_theta", "min_eigenvalue"],
                    np.column_stack([w[:, 0].real, w[:, 0].imag, w[:, 1].real, w[:, 1].imag, R.witness]))
    fields = {"command": "blowup", "status": "certified",
              "stage1": {"eps_K": R.eps_K, "min_eigenvalue_half_eps": R.min_witness,
                         "eps0_min_eigenvalue": R.eps0_min_eigenvalue, "samples": len(R.samples),
                         "d_block_theta": [[complex(th).real, complex(th).imag] for th in R.d_block["theta"]],
                         "d_block": np.real(R.d_block["D"]).tolist(),
                         "fubini_study": R.d_block["fubini_study"].tolist()}}
    t = time.perf_counter()
    try:
        it = iterated_metric(R, m2, K2=cfg.K2.model_dump())
        fields["iterated"] = {"n1": it.n1, "n2": it.n2, "eps1": it.eps1, "eps2": it.eps2,
                              "min_eigenvalue": it.min_eigenvalue}
        code = EXIT_OK
    except StageFailure as exc:
        log.error("stage %s failed: %s", exc.stage, exc)
        fields["status"] = "failed"
        fields["iterated"] = {"failed_stage": exc.stage, "error": str(exc)}
        code = EXIT_SOLVER
    out.timings["iterated"] = time.perf_counter() - t
    out.write_report(fields)
    return code


def run_verify(v, out: OutputDir, seed: int):
    from .verify import format_table, run_suite

    checks, secs = run_suite(v.suite, v.resolution)
    out.timings["suite"] = secs
    table = format_table(checks)
    print(table)
    out.write_text("verify_table.txt", table + "\n")
    ok = all(c.passed for c in checks)
    out.write_report({"command": "verify", "suite": v.suite, "status": "pass" if ok else "fail",
                      "checks": [{"name": c.name, "measured": float(c.measured), "expected": c.expected,
                                  "tolerance": c.tolerance, "passed": c.passed} for c in checks]})
    return EXIT_OK if ok else EXIT_SOLVER


# --------------------------------------------------------------------- run
def thread_limit():
    """``PLURIGREEN_THREADS`` as an integer >= 1, or ``None`` when unset."""
    raw = os.environ.get("PLURIGREEN_THREADS")
    if raw is None or raw == "":
        return None
    try:
        k = int(raw)
    except ValueError:
        raise ConfigError(f"PLURIGREEN_THREADS must be an integer >= 1, got {raw!r}") from None
    if k < 1:
        raise ConfigError(f"PLURIGREEN_THREADS must be an integer >= 1, got {raw!r}")
    return k


def run(cfg: RunConfig, out: str | os.PathLike | None = None, seed: int | None = None) -> int:
    """Execute a validated configuration and persist its outputs.

    Parameters
    ----------
    cfg : RunConfig
    out : path, optional
        Output directory; overrides ``cfg.output`` (default ``results``).
    seed : int, optional
        Overrides ``cfg.seed``.

    Returns
    -------
    int
        0 on success, 1 on solver failure with partial outputs, 2 on
        configuration or feasibility errors with nothing written.
    """
    started = time.time()
    t_all = time.perf_counter()
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": int(seed)})
    try:
        threads = thread_limit()
        prepared = _prepare(cfg)
    except SETUP_FAILURES + (ValueError,) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    np.random.seed(cfg.seed % 2 ** 32)

    path = Path(out if out is not None else (cfg.output or "results"))
    path.mkdir(parents=True, exist_ok=True)
    _clear_previous(path)
    outdir = OutputDir(path)
    handler = logging.FileHandler(path / LOG_NAME, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("plurigreen")
    root.addHandler(handler)
    old_level = root.level
    root.setLevel(logging.INFO)
    log.info("plurigreen %s command=%s seed=%d", __version__, cfg.command, cfg.seed)
    code = EXIT_SOLVER
    try:
        limit = threadpool_limits(threads) if threads else nullcontext()
        with limit:
            if cfg.command == "green":
                code = run_green(prepared, outdir, cfg.green.backend)
            elif cfg.command == "torus":
                code = run_torus(prepared, outdir, cfg.torus.sigma_study)
            elif cfg.command == "ray":
                code = run_ray(prepared, outdir, cfg.ray.slices)
            elif cfg.command == "blowup":
                code = run_blowup(prepared, cfg.blowup, outdir)
            else:
                code = run_verify(prepared, outdir, cfg.seed)
    except (PlurigreenError, NotPositive) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        code = EXIT_SOLVER
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure: %s", exc)
        code = EXIT_SOLVER
    finally:
        log.info("exit code %d", code)
        root.removeHandler(handler)
        root.setLevel(old_level)
        handler.close()
    outdir.timings["total"] = time.perf_counter() - t_all
    write_manifest(outdir, cfg, code, started)
    return code


def write_manifest(out: OutputDir, cfg: RunConfig, code: int, started: float):
    """Inventory every file in the output directory with its digest; written last."""
    files = []
    for p in sorted(out.path.iterdir()):
        if p.is_file() and p.name != MANIFEST:
            files.append({"name": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)})
    manifest = {"version": __version__, "command": cfg.command, "seed": cfg.seed,
                "exit_code": code, "started_unix": started,
                "wall_clock_seconds": out.timings.get("total"),
                "timings": out.timings, "config": cfg.model_dump(mode="json"),
                "config_yaml": serialize(cfg), "files": files}
    tmp = out.path / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    tmp.replace(out.path / MANIFEST)
