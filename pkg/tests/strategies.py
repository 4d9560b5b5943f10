"""Hypothesis strategies for run configurations."""
from __future__ import annotations

import math

from hypothesis import strategies as st

finite = st.floats(allow_nan=False, allow_infinity=False)


def unit(lo=0.0, hi=1.0):
    return st.floats(lo, hi, allow_nan=False, allow_subnormal=False, exclude_min=True, exclude_max=True)


def cstr(lo, hi):
    """Complex numbers written as YAML strings such as ``(0.1-0.2j)``."""
    return st.builds(complex, unit(lo, hi), unit(lo, hi)).map(str)


complexes = st.one_of(unit(-0.2, 0.2), cstr(-0.2, 0.2))

solver_block = st.fixed_dictionaries({}, optional={
    "directions": st.integers(4, 512), "samples": st.integers(4, 64), "max_sweeps": st.integers(1, 10 ** 6),
    "tol": st.none() | unit(0, 1), "method": st.sampled_from(["policy", "jacobi"]),
    "t0": st.floats(0.5, 1.0), "ratio": unit(0, 1), "t_min": st.floats(1e-4, 0.5),
    "newton_max_iter": st.integers(1, 100), "newton_tol": unit(0, 1e-3), "extrapolate": st.booleans(),
    "sources": st.sampled_from(["split", "interpolated", "exact"])})


@st.composite
def green_block(draw):
    kind = draw(st.sampled_from(["disk", "ball"]))
    n = 1 if kind == "disk" else 2
    poles = []
    if draw(st.booleans()):
        r_in = draw(st.floats(0.05, 0.3))
        pos = [draw(complexes) for _ in range(n)]
        f = ["z"] if n == 1 else draw(st.sampled_from([["z1", "z2"], ["z1**2", "z2**2"], ["z1", "z2**3"]]))
        poles.append({"position": pos, "epsilon": draw(st.floats(0.01, 0.5)), "f": f,
                      "r_in": r_in, "r_out": r_in * draw(st.floats(1.1, 2.0))})
    return {"domain": {"kind": kind, "radii": [draw(st.floats(1.0, 3.0))],
                       "resolution": draw(st.integers(16, 1024))},
            "background": {"base": draw(st.sampled_from(["zero", "flat", "fubini-study"])),
                           "augmentation": draw(st.floats(0, 10))},
            "singularities": poles, "boundary": draw(st.floats(-5, 5)),
            "backend": draw(st.sampled_from(["envelope", "regularized"])),
            "solver": draw(solver_block),
            "excision_radius": draw(st.none() | st.floats(0.001, 0.02))}


torus_block = st.fixed_dictionaries({
    "n": st.sampled_from([1, 2]), "period": st.floats(0.5, 4.0), "resolution": st.integers(16, 1024),
    "epsilon": st.floats(0.0, 0.99), "sigma_study": st.booleans()},
    optional={"sigma": st.none() | unit(0, 0.5)})

ray_pole = st.fixed_dictionaries({"at": st.sampled_from(["0", "inf"]),
                                  "f": st.sampled_from([["z", "w"], ["z**2", "w"], ["z", "w**2"]]),
                                  "epsilon": st.floats(0.01, 1.0)})


@st.composite
def ray_block(draw):
    poles = draw(st.lists(ray_pole, max_size=2, unique_by=lambda p: p["at"]))
    r_in = draw(st.floats(0.1, 0.6))
    return {"T": draw(st.floats(0.1, 50)), "poles": poles, "r_in": r_in,
            "r_out": draw(st.floats(r_in + 0.05, 0.95)), "resolution": draw(st.integers(16, 2048)),
            "slices": draw(st.integers(3, 1000))}


compact = st.fixed_dictionaries({"zeta_max": st.floats(0.1, 3), "theta_max": st.floats(0.1, 5),
                                 "per_axis": st.integers(3, 257)})


@st.composite
def blowup_block(draw):
    r_in = draw(st.floats(0.1, 1.0))
    s_in = draw(st.floats(0.05, 0.5))
    return {"r_in": r_in, "r_out": r_in * draw(st.floats(1.1, 3.0)), "K": draw(compact),
            "stage2": draw(st.none() | st.just({"r_in": s_in, "r_out": 2 * s_in})), "K2": draw(compact)}


verify_block = st.fixed_dictionaries({"suite": st.sampled_from(["oracles-1d", "oracles-2d", "lemmas", "torus", "ray"]),
                                      "resolution": st.none() | st.integers(16, 1024)})

BLOCKS = {"green": green_block(), "torus": torus_block, "ray": ray_block(), "blowup": blowup_block(),
          "verify": verify_block}


@st.composite
def config_dicts(draw):
    """Valid configuration mappings across every command."""
    cmd = draw(st.sampled_from(sorted(BLOCKS)))
    d = {"version": 1, "command": cmd, "seed": draw(st.integers(0, 2 ** 64 - 1))}
    if draw(st.booleans()):
        d["output"] = draw(st.text("abcxyz_/0123456789", min_size=1, max_size=12))
    if draw(st.integers(0, 4)):
        d[cmd] = draw(BLOCKS[cmd])
    return d


@st.composite
def runnable_dicts(draw):
    """Small configurations that run in well under a second."""
    cmd = draw(st.sampled_from(["green", "torus", "blowup", "ray"]))
    seed = draw(st.integers(0, 2 ** 64 - 1))
    if cmd == "green":
        block = {"domain": {"kind": "disk", "radii": [1.0], "resolution": 16},
                 "boundary": draw(st.floats(-2, 2))}
        if draw(st.booleans()):
            p = draw(cstr(-0.2, 0.2))
            block["singularities"] = [{"position": [p], "epsilon": draw(st.floats(0.05, 0.6)), "f": ["z"],
                                       "r_in": 0.55, "r_out": 0.7}]
            block["excision_radius"] = 0.25
        block["backend"] = draw(st.sampled_from(["envelope", "regularized"]))
    elif cmd == "torus":
        block = {"resolution": draw(st.sampled_from([16, 32])), "epsilon": draw(st.floats(0, 0.9)),
                 "period": draw(st.floats(0.5, 2.0)), "sigma_study": False}
        if draw(st.booleans()):
            block["pole"] = [draw(cstr(0, 0.5))]
    elif cmd == "blowup":
        block = {"K": {"per_axis": draw(st.integers(3, 7))},
                 "stage2": draw(st.none() | st.just({"r_in": 0.1, "r_out": 0.2})),
                 "K2": {"per_axis": draw(st.integers(3, 5))}}
    else:
        block = {"resolution": 16, "T": draw(st.floats(0.5, 2.0)), "slices": 3,
                 "poles": draw(st.lists(ray_pole.map(lambda p: {**p, "epsilon": min(p["epsilon"], 0.3)}),
                                        max_size=1))}
    return {"version": 1, "command": cmd, "seed": seed, cmd: block}


def close(a, b) -> bool:
    return a == b or (isinstance(a, float) and isinstance(b, float) and math.isclose(a, b))
