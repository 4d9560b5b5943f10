import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plurigreen.blowup import (BlowupChart, ExceptionalMetric, chart_transition, cr_residual,
                               d_block_on_E, h_E_norm, iterated_metric, lambda_threshold,
                               lambda_threshold_schur, threshold_matrix, log_product_metric,
                               positivity_threshold, transition_jacobian)
from plurigreen.errors import HypothesisViolated, NotASection, NotPositive, PivotDegenerate
from plurigreen.singularity import CutoffProfile
from plurigreen.verify import random_threshold_instance


def test_chart_projection_of_point_blowup():
    ch = BlowupChart(2, 0, 0)
    z = ch.project([[0.5, 2.0]])
    np.testing.assert_allclose(z, [[0.5, 1.0]])


def test_chart_transition_round_trip():
    c0, c1 = BlowupChart(2, 0, 0), BlowupChart(2, 0, 1)
    w1 = chart_transition(c0, c1, [0.5, 2.0])
    np.testing.assert_allclose(w1, [1.0, 0.5])
    np.testing.assert_allclose(chart_transition(c1, c0, w1), [0.5, 2.0])
    np.testing.assert_allclose(c0.project([[0.5, 2.0]]), c1.project([w1]))


def test_chart_transition_on_exceptional_divisor():
    c0, c1 = BlowupChart(2, 0, 0), BlowupChart(2, 0, 1)
    np.testing.assert_allclose(chart_transition(c0, c1, [0.0, 4.0]), [0.0, 0.25])


def test_chart_transition_rejects_point_outside_chart():
    c0, c1 = BlowupChart(2, 0, 0), BlowupChart(2, 0, 1)
    with pytest.raises(PivotDegenerate):
        chart_transition(c0, c1, [0.3, 0.0])


def test_transition_is_holomorphic_with_expected_jacobian():
    c0, c1 = BlowupChart(3, 1, 0), BlowupChart(3, 1, 1)
    w = np.array([0.4 + 0.1j, 0.2, 1.5 - 0.5j])
    F = lambda v: c1.from_fiber(v[:, 0], c0.fiber(v), v[:, 1:2])  # noqa: E731
    assert cr_residual(F, w[None]) < 1e-8
    J = transition_jacobian(c0, c1, w)
    assert abs(np.linalg.det(J)) > 1e-3


def test_cr_residual_detects_antiholomorphic_maps():
    assert cr_residual(lambda v: np.conj(v), np.array([[0.3 + 0.2j]])) == pytest.approx(1.0)


def test_chart_rejects_bad_center():
    with pytest.raises(ValueError):
        BlowupChart(2, 1, 0)
    with pytest.raises(ValueError):
        BlowupChart(2, 0, 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_lambda_threshold_matches_schur_formula(seed):
    rng = np.random.default_rng(seed)
    a, d = rng.integers(1, 5, size=2)
    A, X, D, Y = random_threshold_instance(rng, int(a), int(d))
    lam = lambda_threshold(A, X, D, Y)
    ref = lambda_threshold_schur(A, X, D, Y)
    assert lam == pytest.approx(ref, rel=2e-6, abs=2e-6)
    assert np.linalg.eigvalsh(threshold_matrix(lam + 1, A, X, Y, D)).min() > 0


def test_lambda_threshold_zero_when_already_positive():
    I = np.eye(2)
    assert lambda_threshold(I, I, I, 0.1 * I) == 0.0


def test_lambda_threshold_requires_positive_blocks():
    I = np.eye(2)
    with pytest.raises(HypothesisViolated):
        lambda_threshold(-I, I, I, I)
    with pytest.raises(HypothesisViolated):
        lambda_threshold(I, I, np.diag([1.0, 0.0]), I)


def test_h_E_norm_of_zeta0_section():
    m = ExceptionalMetric()
    ch = m.chart(0)
    # inside the cutoff ball den = |y|^2 = |zeta0|^2 (1 + |theta|^2)
    val = h_E_norm(m, lambda w: w[:, 0], [0.1, 0.5], ch)
    assert val == pytest.approx(1 / 1.25)
    on_E = h_E_norm(m, lambda w: w[:, 0], [0.0, 0.5], ch)
    assert on_E == pytest.approx(1 / 1.25, rel=1e-6)


def test_h_E_norm_rejects_non_sections():
    with pytest.raises(NotASection):
        h_E_norm(ExceptionalMetric(), lambda w: 1 + w[:, 0], [0.1, 0.5])


def test_d_block_equals_fubini_study_on_E():
    m = ExceptionalMetric()
    blk = d_block_on_E(m, m.chart(0))
    np.testing.assert_allclose(blk["D"], blk["fubini_study"], atol=1e-12)
    assert blk["D"][0] == pytest.approx(1.0, abs=1e-8)


def test_positivity_threshold_small_K():
    R = positivity_threshold(K={"zeta_max": 0.8, "theta_max": 1.5, "per_axis": 15})
    assert R.eps_K > 0
    assert R.min_witness > 0
    assert R.eps0_min_eigenvalue >= 0


def test_positivity_threshold_rejects_degenerate_omega():
    zero = lambda z: np.zeros((len(z), 2, 2), dtype=complex)  # noqa: E731
    with pytest.raises(NotPositive):
        positivity_threshold(omega=zero, K={"per_axis": 5})


def test_iterated_metric_without_second_center():
    R = positivity_threshold(K={"per_axis": 11})
    it = iterated_metric(R, None)
    assert it.n2 == 1 and it.min_eigenvalue > 0
    assert 1 / it.n1 < R.eps_K


def test_log_product_identity():
    m1, m2 = ExceptionalMetric(), ExceptionalMetric(cutoff=CutoffProfile(0.1, 0.2))
    w2 = np.array([[0.3, 0.4], [0.05, 1.0], [0.2 - 0.1j, -0.7]])
    direct, summed = log_product_metric(m1, m2, 4, w2)
    np.testing.assert_allclose(direct, summed, atol=1e-12)
