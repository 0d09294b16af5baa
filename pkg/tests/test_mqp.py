import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg

from mbplab import (
    FiniteSupport, InfiniteMoment, NotApplicable, QProcessClass, RateOverflow, Stable,
    build_qprocess, generator_gf, limit_cdf, limit_laplace, pi_coefficients, q_matrix_row,
    qprocess_gf, qprocess_matrix, qprocess_moments, qprocess_transition, ratio_limit_measure,
    stationary_distribution,
)


@pytest.fixture(scope="module")
def quad_spec():
    return build_qprocess(Stable(1.0))


@pytest.fixture(scope="module")
def restrictive_spec():
    return build_qprocess(FiniteSupport(1.0, -3.0, 2.0))


def truncated_q_generator(spec, size):
    """Dense q-matrix on states 1..size with jumps above size dropped."""
    gen = np.zeros((size, size))
    for i in range(1, size + 1):
        for j, v in q_matrix_row(spec, i).entries.items():
            if j <= size:
                gen[i - 1, j - 1] = v
    return gen


def series_moments(spec, t, n=600):
    c = qprocess_transition(spec, t, 1, n).coefficients
    j = np.arange(n + 1)
    mean = float(j @ c)
    return mean, float((j - mean) ** 2 @ c)


# -- classification and q-matrix ---------------------------------------------
def test_classification(quad_spec, restrictive_spec):
    assert quad_spec.kind is QProcessClass.EXPLOSIVE and quad_spec.alpha == 2.0
    assert restrictive_spec.kind is QProcessClass.RESTRICTIVE
    assert restrictive_spec.gamma == pytest.approx(2.0)
    assert build_qprocess(Stable(0.5)).alpha == math.inf


def test_hand_values(quad_spec):
    row = q_matrix_row(quad_spec, 2)
    assert row.entries == {1: 1.0, 2: -4.0, 3: 3.0}
    assert row.row_sum() == 0.0


@pytest.mark.parametrize("which", ["quad_spec", "restrictive_spec"])
def test_row_sums_vanish(which, request):
    spec = request.getfixturevalue(which)
    for i in range(1, 21):
        assert abs(q_matrix_row(spec, i).row_sum()) <= 1e-8


def test_heavy_tail_row_window():
    spec = build_qprocess(Stable(0.5))
    with pytest.raises(RateOverflow):
        q_matrix_row(spec, 1)
    row = q_matrix_row(spec, 3, max_omitted=1e-3)
    assert row.omitted_rate <= 1e-3 * abs(row.diagonal)
    assert abs(row.row_sum() + row.omitted_rate) < 1e-9


def test_first_row_generates_g(restrictive_spec):
    row = q_matrix_row(restrictive_spec, 1)
    for s in (0.1, 0.5, 0.9):
        poly = sum(v * s**j for j, v in row.entries.items())
        assert poly == pytest.approx(generator_gf(restrictive_spec, s), abs=1e-13)
    assert generator_gf(restrictive_spec, 1.0) == 0.0


# -- transition functions -------------------------------------------------------
def test_transition_matches_expm(restrictive_spec):
    size = 200
    exact = linalg.expm(1.0 * truncated_q_generator(restrictive_spec, size))
    for i in (1, 2):
        got = qprocess_transition(restrictive_spec, 1.0, i, 40).coefficients
        assert np.max(np.abs(got[1:] - exact[i - 1, :40])) < 1e-9


def test_transition_matrix_consistent(quad_spec):
    mat = qprocess_matrix(quad_spec, 1.0, 3, 50)
    for i in (1, 2, 3):
        assert np.allclose(mat[i - 1], qprocess_transition(quad_spec, 1.0, i, 50).coefficients, atol=1e-13)


def test_gf_matches_series(quad_spec):
    c = qprocess_transition(quad_spec, 1.0, 2, 400).coefficients
    for s in (0.2, 0.6):
        assert qprocess_gf(quad_spec, 1.0, s, i=2) == pytest.approx(np.polynomial.polynomial.polyval(s, c), abs=1e-10)


# -- moments ---------------------------------------------------------------------
def test_moments_quadratic_exact(quad_spec):
    mean, var = qprocess_moments(quad_spec, 5.0)
    assert (mean, var) == (pytest.approx(11.0), pytest.approx(60.0))
    m_num, v_num = series_moments(quad_spec, 5.0, 1500)
    assert m_num == pytest.approx(11.0, rel=1e-7) and v_num == pytest.approx(60.0, rel=1e-6)


# the series route divides by beta**t, so round-off grows like exp(t); stop at t = 10
@pytest.mark.parametrize("t", [0.5, 3.0, 10.0])
def test_moments_restrictive_against_series(restrictive_spec, t):
    mean, var = qprocess_moments(restrictive_spec, t)
    m_num, v_num = series_moments(restrictive_spec, t)
    assert mean == pytest.approx(m_num, rel=1e-8)
    assert var == pytest.approx(v_num, rel=1e-7)


def test_moments_from_other_start(restrictive_spec):
    c = qprocess_transition(restrictive_spec, 2.0, 3, 400).coefficients
    j = np.arange(401)
    mean, var = qprocess_moments(restrictive_spec, 2.0, i=3)
    assert mean == pytest.approx(j @ c, rel=1e-8)
    assert var == pytest.approx((j - mean) ** 2 @ c, rel=1e-7)


def test_infinite_moment():
    with pytest.raises(InfiniteMoment):
        qprocess_moments(build_qprocess(Stable(0.5)), 1.0)


# -- invariant objects -----------------------------------------------------------
def test_stationary_is_long_time_limit(restrictive_spec):
    u = stationary_distribution(restrictive_spec, 80)
    assert u.total() == pytest.approx(1.0, abs=1e-9)
    q40 = qprocess_transition(restrictive_spec, 40.0, 1, 80).coefficients
    assert np.max(np.abs(u.coefficients - q40)) < 1e-9


def test_stationary_mean_is_one_plus_gamma(restrictive_spec):
    u = stationary_distribution(restrictive_spec, 200)
    assert u.mean() == pytest.approx(1.0 + restrictive_spec.gamma, rel=1e-8)


def test_pi_quadratic_is_linear(quad_spec):
    pi = pi_coefficients(quad_spec, 100).coefficients
    assert np.allclose(pi, np.arange(101), atol=1e-8)


def test_ratio_limit_proportional_to_stationary(restrictive_spec):
    omega = ratio_limit_measure(restrictive_spec, 40).coefficients
    u = stationary_distribution(restrictive_spec, 40).coefficients
    assert omega[1] == pytest.approx(1.0)
    ratios = u[1:30] / omega[1:30]
    assert np.ptp(ratios) < 1e-8 * ratios[0]


def test_wrong_class_raises(quad_spec, restrictive_spec):
    with pytest.raises(NotApplicable):
        stationary_distribution(quad_spec, 10)
    with pytest.raises(NotApplicable):
        pi_coefficients(restrictive_spec, 10)


# -- limit law --------------------------------------------------------------------
def test_limit_cdf_closed_form():
    x = np.linspace(0, 10, 11)
    assert np.allclose(limit_cdf(1.0, x), 1 - np.exp(-x) - x * np.exp(-x), atol=1e-15)
    assert limit_laplace(1.0, 1.0) == pytest.approx(0.25)


@pytest.mark.parametrize("nu", [0.5, 0.8])
def test_limit_cdf_stehfest_against_talbot(nu):
    for x in (0.3, 1.0, 3.0):
        with mpmath.workdps(30):
            ref = float(mpmath.invertlaplace(lambda p: (1 + p**nu) ** (-(1 + 1 / mpmath.mpf(nu))) / p,
                                             x, method="talbot"))
        assert limit_cdf(nu, x) == pytest.approx(ref, abs=2e-4)


# -- properties ---------------------------------------------------------------------
@st.composite
def finite_specs(draw):
    death = draw(st.floats(0.2, 3.0))
    births = draw(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=3))
    return build_qprocess(FiniteSupport(death, -(death + sum(births)), *births))


@given(finite_specs(), st.integers(1, 30))
def test_row_sum_property(spec, i):
    row = q_matrix_row(spec, i)
    scale = max(1.0, abs(row.diagonal))
    assert abs(row.row_sum()) <= 1e-8 * scale
    assert all(v >= 0 for j, v in row.entries.items() if j != i)


@given(finite_specs(), st.floats(0.05, 5.0))
def test_q_rows_are_distributions(spec, t):
    row = qprocess_transition(spec, t, 1, 300)
    assert np.all(row.coefficients >= -1e-10)
    assert row.total() <= 1.0 + 1e-9
