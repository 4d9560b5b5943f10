import numpy as np
import pytest

from plurigreen.errors import EvaluationAtPole, InfeasibleBackground, InvalidSingularityData
from plurigreen.geometry import DomainSpec
from plurigreen.singularity import (BackgroundSpec, CutoffProfile, Pole, Polynomial, SingularityData,
                                    auto_augmentation, glued_ddbar, glued_potential, max_feasible_epsilon,
                                    omega_delta)


def numeric_ddbar(f, z, h=1e-4):
    """``d^2 f / dz_j dzbar_k`` by centred differences in the real coordinates."""
    z = np.asarray(z, dtype=complex)
    n = len(z)
    H = np.zeros((n, n), dtype=complex)

    def d2(a, b):
        ea, eb = np.zeros(n, dtype=complex), np.zeros(n, dtype=complex)
        ea[a // 2] = 1 if a % 2 == 0 else 1j
        eb[b // 2] = 1 if b % 2 == 0 else 1j
        return (f(z + h * ea + h * eb) - f(z + h * ea - h * eb)
                - f(z - h * ea + h * eb) + f(z - h * ea - h * eb)) / (4 * h * h)

    for j in range(n):
        for k in range(n):
            xx, yy = d2(2 * j, 2 * k), d2(2 * j + 1, 2 * k + 1)
            xy, yx = d2(2 * j, 2 * k + 1), d2(2 * j + 1, 2 * k)
            H[j, k] = 0.25 * (xx + yy + 1j * (xy - yx))
    return H


def test_polynomial_parse_and_evaluate():
    p = Polynomial.parse("z1**2 + 2*I*z2", 2)
    w = np.array([[1 + 1j, 0.5]])
    assert p(w)[0] == pytest.approx((1 + 1j) ** 2 + 1j)
    assert p.degree == 2 and p.order == 1
    q = Polynomial.parse("z**3", 1)
    assert q.is_monomial() and q.order == 3


@pytest.mark.parametrize("text", ["sin(z1)", "z1 + y", "1/z1", "z1 +"])
def test_polynomial_rejects_non_polynomials(text):
    with pytest.raises(InvalidSingularityData):
        Polynomial.parse(text, 2)


def test_cutoff_profile_shape_and_derivatives():
    c = CutoffProfile(0.1, 0.3)
    t = np.linspace(0, 0.4, 401)
    q = c.q(t)
    assert np.all(q[t <= 0.1] == 1) and np.all(q[t >= 0.3] == 0)
    assert np.all(np.diff(q) <= 1e-15)
    h = 1e-6
    tt = np.array([0.15, 0.2, 0.27])
    np.testing.assert_allclose(c.dq(tt), (c.q(tt + h) - c.q(tt - h)) / (2 * h), rtol=1e-6)
    np.testing.assert_allclose(c.d2q(tt), (c.dq(tt + h) - c.dq(tt - h)) / (2 * h), rtol=1e-5, atol=1e-6)
    with pytest.raises(InvalidSingularityData):
        CutoffProfile(0.3, 0.1)


def test_pole_requires_positive_epsilon():
    with pytest.raises(InvalidSingularityData):
        Pole([0.0], 0.0, ["z"])


def test_validate_rejects_overlap_containment_and_bad_f():
    dom = DomainSpec("disk", (1.0,), 32)
    with pytest.raises(InvalidSingularityData, match="disjoint"):
        SingularityData([Pole([0.0], 0.5, ["z"]), Pole([0.1], 0.5, ["z - 0.1"])]).validate(dom)
    with pytest.raises(InvalidSingularityData, match="contained"):
        SingularityData([Pole([0.9], 0.5, ["z - 0.9"])]).validate(dom)
    with pytest.raises(InvalidSingularityData, match="vanish"):
        SingularityData([Pole([0.0], 0.5, ["1 + z"])]).validate(dom)
    ball = DomainSpec("ball", (1.0,), 16)
    with pytest.raises(InvalidSingularityData, match="common zeros"):
        SingularityData([Pole([0, 0], 0.5, ["z1"])]).validate(ball)


def test_glued_potential_regions():
    S = SingularityData([Pole([0.0], 0.5, ["z"], 0.1, 0.2)])
    z_in = np.array([[0.05]])
    z_out = np.array([[0.5]])
    assert glued_potential(S, z_in)[0] == pytest.approx(0.5 * np.log(0.05 ** 2))
    assert glued_potential(S, z_out)[0] == pytest.approx(0.5)
    with pytest.raises(EvaluationAtPole):
        glued_potential(S, np.array([[0.0]]))


@pytest.mark.parametrize("z", [[0.12 + 0.03j, 0.05j], [0.02, 0.15 - 0.04j], [0.09, 0.09]])
def test_glued_ddbar_matches_finite_differences(z):
    S = SingularityData([Pole([0, 0], 0.7, ["z1**2", "z2"], 0.1, 0.2)])
    f = lambda w: glued_potential(S, w)  # noqa: E731
    np.testing.assert_allclose(glued_ddbar(S, np.array([z]))[0], numeric_ddbar(f, z), rtol=1e-4, atol=1e-6)


def test_fubini_study_matrix_at_origin_is_identity():
    B = BackgroundSpec("fubini-study")
    np.testing.assert_allclose(B.matrix(np.zeros((1, 2)))[0], np.eye(2))


def test_feasibility_gate_flat_and_zero_backgrounds():
    S = SingularityData([Pole([0.0], 0.5, ["z"], 0.1, 0.2)])
    eps0 = max_feasible_epsilon(S, BackgroundSpec("flat"))
    assert 0 < eps0 < np.inf
    with pytest.raises(InfeasibleBackground):
        max_feasible_epsilon(S, BackgroundSpec("zero"))
    B = auto_augmentation(S, BackgroundSpec("zero"))
    assert B.augmentation > 0
    z = np.array([[0.15 + 0.0j]])
    assert np.linalg.eigvalsh(omega_delta(S, B, 0.5, z)).min() > 0
