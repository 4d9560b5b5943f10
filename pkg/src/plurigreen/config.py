"""Run configuration: YAML text validated into strict pydantic models.

Grammar (version 1)::

    version: 1
    command: green | torus | ray | blowup | verify
    seed: 0
    output: results          # optional; --out overrides
    green:  {domain, background, singularities, boundary, backend, solver, excision_radius}
    torus:  {n, period, resolution, epsilon, pole, sigma, sigma_study}
    ray:    {T, poles, r_in, r_out, resolution, slices}
    blowup: {r_in, r_out, K, stage2, K2}
    verify: {suite, resolution}

Only the block named by ``command`` may be present. Complex numbers are
written as YAML numbers or strings such as ``"0.3+0.1j"``. Unknown keys
are rejected everywhere.
"""
from __future__ import annotations

from typing import Annotated, Literal

import numpy as np
import yaml
from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer,
                      ValidationError, field_validator, model_validator)

from .errors import ConfigParseError, ConfigValidationError, InvalidSingularityData

SCHEMA_VERSION = 1


def _to_complex(v):
    if isinstance(v, bool):
        raise ValueError("expected a number")
    if isinstance(v, (int, float, complex)):
        return complex(v)
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j") if "j" not in v else v.replace(" ", ""))
        except ValueError:
            raise ValueError(f"not a complex number: {v!r}") from None
    raise ValueError("expected a number or a string like '0.3+0.1j'")


def _dump_complex(c: complex):
    if c.imag == 0:
        return float(c.real)
    return repr(complex(c)).strip("()")


Complex = Annotated[complex, BeforeValidator(_to_complex), PlainSerializer(_dump_complex)]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# ------------------------------------------------------------------ green
class DomainConfig(Strict):
    kind: Literal["disk", "annulus", "ball", "polydisk"] = "disk"
    radii: list[Annotated[float, Field(gt=0)]] = Field(default_factory=lambda: [1.0])
    resolution: int = Field(64, ge=16, le=1024)

    @model_validator(mode="after")
    def _shape(self):
        want = {"disk": 1, "ball": 1, "annulus": 2, "polydisk": 2}[self.kind]
        if len(self.radii) != want:
            raise ValueError(f"{self.kind} takes {want} radii")
        if self.kind == "annulus" and not self.radii[0] < self.radii[1]:
            raise ValueError("annulus needs inner radius < outer radius")
        return self

    @property
    def n(self) -> int:
        return 1 if self.kind in ("disk", "annulus") else 2


class BackgroundConfig(Strict):
    base: Literal["flat", "zero", "fubini-study"] = "zero"
    augmentation: float = Field(0.0, ge=0)


class PoleConfig(Strict):
    position: list[Complex]
    epsilon: float
    f: list[str] = Field(min_length=1)
    r_in: float = Field(0.1, gt=0)
    r_out: float = Field(0.2, gt=0)

    @field_validator("epsilon")
    @classmethod
    def _eps(cls, v):
        if not np.isfinite(v) or v <= 0:
            raise ValueError("must be > 0")
        return v

    @model_validator(mode="after")
    def _radii(self):
        if not self.r_in < self.r_out:
            raise ValueError("r_in must be < r_out")
        return self


class SolverBlock(Strict):
    directions: int = Field(32, ge=4, le=512)
    samples: int = Field(8, ge=4, le=64)
    max_sweeps: int = Field(100000, ge=1)
    tol: float | None = Field(None, gt=0)
    method: Literal["policy", "jacobi"] = "policy"
    t0: float = Field(1.0, gt=0, le=1)
    ratio: float = Field(0.5, gt=0, lt=1)
    t_min: float = Field(1e-3, ge=1e-4, le=1)
    newton_max_iter: int = Field(30, ge=1)
    newton_tol: float = Field(1e-9, gt=0)
    extrapolate: bool = True
    sources: Literal["split", "interpolated", "exact"] = "split"


class GreenConfig(Strict):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    background: BackgroundConfig = Field(default_factory=BackgroundConfig)
    singularities: list[PoleConfig] = Field(default_factory=list)
    boundary: float = 0.0
    backend: Literal["envelope", "regularized"] = "envelope"
    solver: SolverBlock = Field(default_factory=SolverBlock)
    excision_radius: float | None = Field(None, gt=0)

    @model_validator(mode="after")
    def _poles(self):
        n = self.domain.n
        for m, P in enumerate(self.singularities):
            if len(P.position) != n:
                raise ValueError(f"singularities[{m}].position must have {n} entries")
        for m, P in enumerate(self.singularities):
            for l in range(m):
                Q = self.singularities[l]
                d = np.linalg.norm(np.array(P.position) - np.array(Q.position))
                if d < P.r_out + Q.r_out:
                    raise ValueError(f"poles {l} and {m}: balls B(p, r_out) overlap "
                                     "(pole balls must be pairwise disjoint)")
        return self


# ------------------------------------------------------------- other blocks
class TorusConfig(Strict):
    n: Literal[1, 2] = 1
    period: float = Field(1.0, gt=0)
    resolution: int = Field(128, ge=16, le=1024)
    epsilon: float = Field(0.3, ge=0, lt=1)
    pole: list[Complex] | None = None
    sigma: float | None = Field(None, gt=0)
    sigma_study: bool = True

    @model_validator(mode="after")
    def _pole(self):
        if self.pole is not None and len(self.pole) != self.n:
            raise ValueError(f"pole must have {self.n} entries")
        return self


class RayPoleConfig(Strict):
    at: Literal["0", "inf"] = "0"
    f: list[str] = Field(default_factory=lambda: ["z", "w"], min_length=1)
    epsilon: float = 0.2

    @field_validator("epsilon")
    @classmethod
    def _eps(cls, v):
        if not np.isfinite(v) or v <= 0:
            raise ValueError("must be > 0")
        return v


class RayConfig(Strict):
    T: float = Field(3.0, gt=0, le=50)
    poles: list[RayPoleConfig] = Field(default_factory=list)
    r_in: float = Field(0.5, gt=0, lt=1)
    r_out: float = Field(0.9, gt=0, lt=1)
    resolution: int = Field(64, ge=16, le=2048)
    slices: int = Field(7, ge=3, le=1000)

    @model_validator(mode="after")
    def _checks(self):
        if not self.r_in < self.r_out:
            raise ValueError("r_in must be < r_out")
        if len({p.at for p in self.poles}) != len(self.poles):
            raise ValueError("two poles share a central-fibre point")
        return self


class CompactConfig(Strict):
    zeta_max: float = Field(1.0, gt=0)
    theta_max: float = Field(2.0, gt=0)
    per_axis: int = Field(33, ge=3, le=257)


class StageConfig(Strict):
    r_in: float = Field(0.1, gt=0)
    r_out: float = Field(0.2, gt=0)


class BlowupConfig(Strict):
    r_in: float = Field(0.5, gt=0)
    r_out: float = Field(1.0, gt=0)
    K: CompactConfig = Field(default_factory=CompactConfig)
    stage2: StageConfig | None = Field(default_factory=StageConfig)
    K2: CompactConfig = Field(default_factory=lambda: CompactConfig(zeta_max=0.5, theta_max=2.0, per_axis=17))

    @model_validator(mode="after")
    def _radii(self):
        if not self.r_in < self.r_out:
            raise ValueError("r_in must be < r_out")
        if self.stage2 is not None and not self.stage2.r_in < self.stage2.r_out:
            raise ValueError("stage2: r_in must be < r_out")
        return self


class VerifyConfig(Strict):
    suite: str = "oracles-1d"
    resolution: int | None = Field(None, ge=16, le=1024)


class RunConfig(Strict):
    version: Literal[1] = 1
    command: Literal["green", "torus", "ray", "blowup", "verify"]
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output: str | None = None
    green: GreenConfig | None = None
    torus: TorusConfig | None = None
    ray: RayConfig | None = None
    blowup: BlowupConfig | None = None
    verify: VerifyConfig | None = None

    @model_validator(mode="after")
    def _blocks(self):
        blocks = ("green", "torus", "ray", "blowup", "verify")
        extra = [b for b in blocks if b != self.command and getattr(self, b) is not None]
        if extra:
            raise ValueError(f"blocks {extra} do not belong to command {self.command!r}")
        if getattr(self, self.command) is None:
            default = {"green": GreenConfig, "torus": TorusConfig, "ray": RayConfig,
                       "blowup": BlowupConfig, "verify": VerifyConfig}[self.command]()
            object.__setattr__(self, self.command, default)
        return self

    @property
    def block(self):
        return getattr(self, self.command)


# ------------------------------------------------------------ parse/dump
def _violations(exc: ValidationError):
    out = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "config"
        msg = e["msg"]
        for prefix in ("Value error, ", "Assertion failed, "):
            if msg.startswith(prefix):
                msg = msg[len(prefix):]
        out.append((loc, msg))
    return out


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run configuration.

    Raises
    ------
    ConfigParseError
        Malformed YAML, with line, column and the expected token.
    ConfigValidationError
        Every violated field constraint, as ``(field, message)`` pairs.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigParseError(f"config is not UTF-8: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigParseError(f"YAML error at line {line}, column {col}: {exc.problem}",
                               line=line, column=col, expected=exc.problem) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"YAML error: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigParseError("top level must be a mapping", line=1, column=1, expected="mapping")
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigValidationError(_violations(exc)) from None
    problems = _semantic_checks(cfg)
    if problems:
        raise ConfigValidationError(problems)
    return cfg


def _semantic_checks(cfg: RunConfig):
    """Checks that need the numerical layer (polynomial parsing, containment)."""
    out = []
    if cfg.command == "green":
        from .geometry import DomainSpec
        from .singularity import Pole, SingularityData

        g = cfg.green
        try:
            dom = DomainSpec(g.domain.kind, tuple(g.domain.radii), g.domain.resolution)
            poles = [Pole(np.array(P.position), P.epsilon, P.f, P.r_in, P.r_out) for P in g.singularities]
            SingularityData(poles).validate(dom)
        except InvalidSingularityData as exc:
            out.append(("green.singularities", str(exc)))
        except ValueError as exc:
            out.append(("green", str(exc)))
    if cfg.command == "ray":
        from .ray import RayPole

        for m, P in enumerate(cfg.ray.poles):
            try:
                RayPole(P.at, tuple(P.f), P.epsilon)
            except Exception as exc:  # noqa: BLE001
                out.append((f"ray.poles.{m}", str(exc)))
    return out


def serialize(cfg: RunConfig) -> str:
    """Canonical YAML text; ``parse_config(serialize(c)) == c``."""
    data = cfg.model_dump(mode="json", exclude_none=False)
    for b in ("green", "torus", "ray", "blowup", "verify"):
        if b != cfg.command:
            data.pop(b, None)
    return yaml.safe_dump(data, sort_keys=False, allow_unicode=True)
