"""Shared fixtures: cached solves of the reference problems and the acceptance summary."""
from __future__ import annotations

import numpy as np
import pytest

from plurigreen.verify import ball_case, disk_case

ACCEPTANCE: dict[int, tuple[bool, str]] = {}

TWO_POLES = [(0.45, 0.5), (-0.45j, 0.3)]
TWO_POLE_CUT = (0.15, 0.3)


def record(criterion: int, passed: bool, detail: str):
    """Store one acceptance line; several checks of a criterion are combined with AND."""
    old = ACCEPTANCE.get(criterion)
    if old is not None:
        passed = passed and old[0]
        detail = f"{old[1]}; {detail}"
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def disk256():
    """Criterion 1 problem with both backends: ``{backend: (error, report, problem)}``."""
    return {be: disk_case(256, [(0.3, 0.5)], be) for be in ("envelope", "regularized")}


@pytest.fixture(scope="session")
def disk128_envelope():
    return disk_case(128, [(0.3, 0.5)], "envelope")


@pytest.fixture(scope="session")
def two_pole256():
    return {be: disk_case(256, TWO_POLES, be, r_cut=TWO_POLE_CUT) for be in ("envelope", "regularized")}


@pytest.fixture(scope="session")
def ball32():
    """Radial C^2 case on 32 points per axis with both backends (the regularized solve is slow)."""
    return {be: ball_case(32, backend=be) for be in ("envelope", "regularized")}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
