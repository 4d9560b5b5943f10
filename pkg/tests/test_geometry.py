import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plurigreen.errors import InvalidDomain, StencilOutOfDomain
from plurigreen.geometry import (BOUNDARY, EXCISED, INTERIOR, OUTSIDE, DomainSpec, build_mask,
                                 circle_kernel, complex_hessian, complex_hessian_at, default_directions,
                                 direction_laplacians, grid_from_function, interpolate,
                                 min_direction_laplacian)
from plurigreen.linalg import jacobi_eigvalsh


def center_index(dom):
    pts = dom.all_points()
    return int(np.argmin(np.linalg.norm(pts, axis=1)))


@pytest.mark.parametrize("kind,radii", [("disk", (0.0,)), ("disk", (1.0, 2.0)), ("annulus", (2.0, 1.0)),
                                         ("cube", (1.0,)), ("ball", (-1.0,))])
def test_domain_rejects_bad_geometry(kind, radii):
    with pytest.raises(InvalidDomain):
        DomainSpec(kind, radii, 32)


def test_domain_rejects_small_resolution():
    with pytest.raises(InvalidDomain):
        DomainSpec("disk", (1.0,), 8)


def test_mask_tags_center_boundary_and_padding():
    dom = DomainSpec("disk", (1.0,), 32)
    mask = build_mask(dom, cores=[(np.array([0.0]), 0.2)]).ravel()
    pts = dom.all_points()
    dep = dom.depth(pts)
    assert mask[center_index(dom)] == EXCISED
    assert np.all(mask[dep >= dom.h] != BOUNDARY)
    assert np.all(mask[(dep < dom.h) & (dep > 0)] == BOUNDARY)
    assert mask[0] == OUTSIDE
    assert np.any(mask == INTERIOR)


def test_torus_grid_is_periodic_without_padding():
    dom = DomainSpec("torus", (1.0,), 16, dim=1)
    assert dom.pad == 0 and dom.periodic
    assert dom.axis[0] == 0.0 and np.isclose(dom.axis[-1], 1.0 - dom.h)
    idx = np.array([0])
    left = dom.shift(idx, np.array([-1, 0]))
    assert dom.node_real(left)[0, 0] == pytest.approx(1.0 - dom.h)


@pytest.mark.parametrize("func,expected", [
    (lambda z: np.sum(np.abs(z) ** 2, axis=1), np.eye(2)),
    (lambda z: np.abs(z[:, 0]) ** 2 + 2 * np.abs(z[:, 1]) ** 2, np.diag([1.0, 2.0])),
    (lambda z: 2 * np.real(z[:, 0] * np.conj(z[:, 1])), np.array([[0, 1], [1, 0]])),
    (lambda z: np.real(z[:, 0] ** 2 + 3 * z[:, 0] * z[:, 1]), np.zeros((2, 2))),
])
def test_complex_hessian_exact_on_quadratics(func, expected):
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, func)
    H = complex_hessian(u, center_index(dom))
    np.testing.assert_allclose(H, expected, atol=1e-10)
    assert np.allclose(H, H.conj().T)


def test_complex_hessian_of_imaginary_cross_term():
    # 2 Re(i z1 conj(z2)) has (1,2) entry i
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, lambda z: 2 * np.real(1j * z[:, 0] * np.conj(z[:, 1])))
    H = complex_hessian(u, center_index(dom))
    assert H[0, 1] == pytest.approx(1j, abs=1e-10)


def test_hessian_stencil_refuses_excised_nodes():
    dom = DomainSpec("disk", (1.0,), 32)
    u = grid_from_function(dom, lambda z: np.abs(z[:, 0]) ** 2, cores=[(np.array([0.0]), 0.1)])
    near = int(np.flatnonzero(u.mask.ravel() == INTERIOR)[
        np.argmin(np.abs(dom.node_points(np.flatnonzero(u.mask.ravel() == INTERIOR))[:, 0]))])
    with pytest.raises(StencilOutOfDomain):
        complex_hessian_at(u, [near])


@pytest.mark.parametrize("func", [lambda z: np.real(z[:, 0] ** 2 + 2j * z[:, 0] * z[:, 1]),
                                  lambda z: np.imag(z[:, 1] ** 2) + 3 * z[:, 0].real])
def test_direction_laplacian_vanishes_on_pluriharmonic_quadratics(func):
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, func)
    np.testing.assert_allclose(direction_laplacians(u, [center_index(dom)]), 0.0, atol=1e-10)


def test_direction_laplacian_interpolation_bias_in_one_variable():
    dom = DomainSpec("disk", (1.0,), 32)
    u = grid_from_function(dom, lambda z: np.abs(z[:, 0]) ** 2)
    L = direction_laplacians(u, [center_index(dom)], samples=8)
    assert L[0, 0] == pytest.approx(2 * (1 + np.sqrt(2)), rel=1e-10)


@pytest.mark.parametrize("v", [[1.0], [0.6 + 0.8j], [np.sqrt(0.5), np.sqrt(0.5) * 1j], [0.3, 0.954]])
def test_circle_kernel_is_monotone_average(v):
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    offs, w = circle_kernel(v, 8)
    assert np.all(w > 0) and w.sum() == pytest.approx(1.0)
    assert offs.shape[1] == 2 * len(v)


def test_min_direction_laplacian_picks_weak_direction():
    dom = DomainSpec("ball", (1.0,), 16)
    u = grid_from_function(dom, lambda z: np.abs(z[:, 0]) ** 2 + 0.25 * np.abs(z[:, 1]) ** 2)
    p = center_index(dom)
    strong = direction_laplacians(u, [p], directions=np.array([[1.0, 0.0]]))[0, 0]
    weak = direction_laplacians(u, [p], directions=np.array([[0.0, 1.0]]))[0, 0]
    assert weak == pytest.approx(0.25 * strong)
    val = min_direction_laplacian(u, p)
    assert weak - 1e-12 <= val < strong


def test_default_directions_are_unit_vectors():
    d = default_directions(2, 32)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)


def test_interpolation_reproduces_linear_functions():
    dom = DomainSpec("disk", (1.0,), 32)
    u = grid_from_function(dom, lambda z: 2 * z[:, 0].real - 3 * z[:, 0].imag + 1)
    pts = np.array([[0.1 + 0.2j], [-0.33 + 0.05j]])
    np.testing.assert_allclose(interpolate(u, pts), 2 * pts[:, 0].real - 3 * pts[:, 0].imag + 1, atol=1e-12)


def test_interpolation_near_core_is_nan_or_strict_error():
    dom = DomainSpec("disk", (1.0,), 32)
    u = grid_from_function(dom, lambda z: np.ones(len(z)), cores=[(np.array([0.0]), 0.2)])
    assert np.isnan(interpolate(u, np.array([[0.0]])))[0]
    with pytest.raises(StencilOutOfDomain):
        interpolate(u, np.array([[0.0]]), strict=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2 ** 31 - 1))
def test_jacobi_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(6, n, n)) + 1j * rng.normal(size=(6, n, n))
    H = A + np.conj(np.swapaxes(A, -1, -2))
    np.testing.assert_allclose(jacobi_eigvalsh(H), np.linalg.eigvalsh(H), atol=1e-9)
