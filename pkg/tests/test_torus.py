import numpy as np
import pytest

from plurigreen.errors import GaugeFailure, InvalidDomain
from plurigreen.torus import TorusProblem, fourier_series_oracle, solve_torus


def test_rhs_has_unit_mass_and_compatibility():
    P = TorusProblem(resolution=64, epsilon=0.3)
    rho = P.rhs()
    assert np.sum(rho) * P.domain.h ** 2 == pytest.approx(1.0, abs=1e-10)
    assert np.sum(P.mollifier()) * P.domain.h ** 2 == pytest.approx(1.0)


def test_density_must_integrate_to_one():
    P = TorusProblem(resolution=32, density=lambda z: 2.0 * np.ones(len(z)))
    with pytest.raises(GaugeFailure):
        P.rhs()


@pytest.mark.parametrize("kw", [{"epsilon": 1.0}, {"epsilon": -0.1}, {"sigma": 0.6}])
def test_problem_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        TorusProblem(resolution=32, **kw)


def test_pole_dimension_checked():
    with pytest.raises(InvalidDomain):
        TorusProblem(resolution=32, pole=[0.1, 0.2])


def test_displacement_uses_minimum_image():
    P = TorusProblem(resolution=32, pole=[0.9 + 0.9j])
    d = P.displacement(np.array([[0.05 + 0.05j]]))
    assert d[0, 0] == pytest.approx(0.15 + 0.15j)


def test_planar_solve_matches_fourier_oracle_and_mass():
    P = TorusProblem(resolution=64, epsilon=0.3)
    rep, led = solve_torus(P)
    probes = np.random.default_rng(1).integers(0, 64, size=(32, 2))
    ref = fourier_series_oracle(P, probes)
    np.testing.assert_allclose(rep.phi.values.reshape(64, 64)[probes[:, 0], probes[:, 1]], ref, atol=1e-6)
    assert abs(np.mean(rep.phi.values)) < 1e-10
    assert led.total_mass == pytest.approx(1.0, abs=1e-2)
    assert led.discrepancy() < 1e-8


def test_zero_weight_gives_constant_solution():
    rep, led = solve_torus(TorusProblem(resolution=32, epsilon=0.0))
    assert np.max(np.abs(rep.phi.values)) < 1e-10
