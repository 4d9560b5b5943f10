import numpy as np
import pytest

from plurigreen.errors import InfeasibleProblem, SymmetryViolation
from plurigreen.ray import (RayPole, RayProblem, geodesic_residual, midpoint_convexity_violation,
                            ray_nontriviality, solve_ray)


def test_pole_position_restricted_to_fixed_points():
    with pytest.raises(SymmetryViolation):
        RayPole("1")


def test_non_invariant_data_rejected():
    with pytest.raises(SymmetryViolation):
        RayProblem(poles=[RayPole("0", ("z + w", "w"), 0.2)], resolution=16)


def test_two_poles_at_same_point_rejected():
    with pytest.raises(InfeasibleProblem):
        RayProblem(poles=[RayPole("0"), RayPole("0")], resolution=16)


@pytest.mark.parametrize("kw", [{"T": 0.0}, {"r_in": 0.9, "r_out": 0.5}, {"resolution": 8}])
def test_problem_rejects_bad_parameters(kw):
    with pytest.raises(ValueError):
        RayProblem(**kw)


def test_zero_data_ray_is_trivial():
    R = solve_ray(RayProblem(T=2.0, resolution=16))
    assert np.max(np.abs(R.Phi)) < 1e-8


def test_pole_ray_is_nontrivial_and_psh():
    R = solve_ray(RayProblem(T=3.0, poles=[RayPole("0", ("z", "w"), 0.2)], resolution=16))
    assert ray_nontriviality(R.slices) > 1e-2
    assert R.info["fiber_min_uss"] > -1e-6
    assert R.info["convexity_violation"] < 1e-6
    # slice functions depend on |z| only
    phi = R.slice_function(2)
    z = (0.7 + 0.2j) * np.array([1, 1j, -1, -1j])
    assert np.ptp(phi(z)) == 0.0


def test_geodesic_residual_of_affine_in_t_solution():
    s = np.linspace(-3, 3, 61)
    t = np.linspace(-1, 0, 21)
    u = np.logaddexp(0.0, s)[None, :] + 0.0 * t[:, None]
    assert geodesic_residual(s, t, u) < 1e-12
    assert midpoint_convexity_violation(u) <= 1e-12


def test_nontriviality_needs_three_slices():
    with pytest.raises(ValueError):
        ray_nontriviality([np.zeros(3), np.ones(3)])
