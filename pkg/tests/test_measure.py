import numpy as np
import pytest

from plurigreen.errors import InsufficientRadii
from plurigreen.geometry import DomainSpec, grid_from_function
from plurigreen.measure import (MassLedger, dirac_constant, dyadic_ladder, integrate, lelong_number,
                                ma_density, mass_obstruction_check, remainder_oscillation,
                                slice_lelong, sphere_flux)


def test_ma_density_of_norm_squared_is_one():
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, lambda z: np.sum(np.abs(z) ** 2, axis=1))
    d = ma_density(u)
    vals = d.values.ravel()
    assert np.nanmax(np.abs(vals - 1)) < 1e-10
    assert d.meta["negative_nodes"] == 0


def test_ma_density_keeps_negative_determinants_and_counts_them():
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, lambda z: np.abs(z[:, 0]) ** 2 - np.abs(z[:, 1]) ** 2)
    d = ma_density(u)
    assert np.nanmin(d.values) == pytest.approx(-1.0)
    assert d.meta["negative_nodes"] > 0


def test_integrate_constant_density_gives_volume():
    dom = DomainSpec("disk", (1.0,), 128)
    u = grid_from_function(dom, lambda z: np.abs(z[:, 0]) ** 2)
    assert integrate(ma_density(u)) == pytest.approx(np.pi, rel=0.05)


def test_dirac_constants_match_closed_forms():
    assert dirac_constant(1) == pytest.approx(np.pi, rel=1e-3)
    assert dirac_constant(2) == pytest.approx(np.pi ** 2 / 2, rel=1e-2)


def test_flux_of_log_is_dirac_constant():
    dom = DomainSpec("disk", (1.0,), 128)
    u = grid_from_function(dom, lambda z: 0.5 * np.log(np.abs(z[:, 0]) ** 2), cores=[(np.zeros(1), 0.05)])
    assert sphere_flux(u, np.zeros(1), 0.5, m=128) == pytest.approx(0.5 * np.pi, rel=1e-2)


def test_lelong_of_callable_log():
    u = lambda z: 0.7 * np.log(np.sum(np.abs(z) ** 2, axis=1)) + np.sum(np.abs(z) ** 2, axis=1)  # noqa: E731
    est = lelong_number(u, [0, 0], r_in=0.2, r_min=0.001)
    assert est.nu == pytest.approx(0.7, abs=0.01)


def test_lelong_needs_enough_radii():
    with pytest.raises(InsufficientRadii):
        lelong_number(lambda z: np.zeros(len(z)), [0.0], r_in=0.1, r_min=0.05)
    with pytest.raises(InsufficientRadii):
        lelong_number(lambda z: np.zeros(len(z)), [0.0])


def test_dyadic_ladder_halves():
    np.testing.assert_allclose(dyadic_ladder(0.8, 0.1), [0.8, 0.4, 0.2, 0.1])


def test_slice_lelong_sees_per_axis_orders():
    u = lambda z: np.log(np.abs(z[:, 0]) ** 4 + np.abs(z[:, 1]) ** 2)  # noqa: E731
    nu, axes = slice_lelong(u, [0, 0], r_in=0.1, r_min=1e-4)
    np.testing.assert_allclose(axes, [2.0, 1.0], atol=1e-6)
    assert nu == pytest.approx(2.0, abs=1e-6)


def test_remainder_oscillation_zero_for_exact_model():
    S = lambda d: np.abs(d[:, 0]) ** 4 + np.abs(d[:, 1]) ** 4  # noqa: E731
    u = lambda z: 0.3 * np.log(S(z))  # noqa: E731
    assert remainder_oscillation(u, [0, 0], 0.3, S, [0.2, 0.1, 0.05]) < 1e-12


@pytest.mark.parametrize("k,nu,ok", [(1, 0.5, True), (2, 1.0, True), (2, 1.2, False), (3, 1.04, True)])
def test_mass_obstruction_check(k, nu, ok):
    assert mass_obstruction_check(k, nu) is ok


@pytest.mark.parametrize("k,nu", [(0, 0.5), (1.5, 0.5), (1, np.inf)])
def test_mass_obstruction_check_rejects_bad_input(k, nu):
    with pytest.raises(ValueError):
        mass_obstruction_check(k, nu)


def test_mass_ledger_discrepancy():
    led = MassLedger(1.0, [(0, 0.3)], 0.69)
    assert led.discrepancy() == pytest.approx(0.01)
    assert led.balanced(tol=0.02) and not led.balanced(tol=1e-3)
    d = led.to_dict()
    assert d["pole_masses"] == [[0, 0.3]]
