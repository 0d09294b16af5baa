import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from mbplab import ConfigError, Criticality, DomainError, FiniteSupport, InvalidLaw, Stable, law_from_mapping
from oracles import stable_coefficients

nus = st.floats(0.05, 1.0)
scales = st.floats(0.1, 5.0)


@st.composite
def finite_laws(draw):
    """Random conservative finite laws: positive a_0 and a_k, a_1 closes the sum."""
    death = draw(st.floats(0.1, 3.0))
    births = draw(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=4))
    coeffs = [death, -(death + sum(births))] + births
    return FiniteSupport(*coeffs)


# -- oracles --------------------------------------------------------------
@pytest.mark.parametrize("nu", [0.3, 0.5, 0.75, 1.0])
def test_stable_coefficients_match_binomial(nu):
    assert np.allclose(Stable(nu, 1.3).coefficients(60), stable_coefficients(nu, 1.3, 60), rtol=1e-12, atol=1e-15)


def test_quadratic_law_values(quadratic):
    assert quadratic.coefficients(3).tolist() == [1.0, -2.0, 1.0, 0.0]
    assert quadratic.f(0.25) == pytest.approx(0.5625)
    assert quadratic.f_prime(0.25) == pytest.approx(-1.5)
    assert quadratic.f_second(0.5) == pytest.approx(2.0)


def test_stable_tail_mass_matches_direct_sum():
    law = Stable(0.5)
    a = law.coefficients(5000)
    for n in (1, 10, 100, 1000):
        assert law.tail_mass(n) == pytest.approx(-a[: n + 1].sum(), rel=1e-9, abs=1e-15)
        assert law.tail_first_moment(n) == pytest.approx(-(np.arange(n + 1) * a[: n + 1]).sum(), rel=1e-6)


def test_stable_truncation_order_meets_tolerance():
    law = Stable(0.5)
    n = law.truncation_order(1e-10)
    assert law.tail_mass(n) < 1e-10 <= law.tail_mass(n - 1)


def test_criticality_classes(quadratic, supercritical_bd, subcritical_bd):
    assert quadratic.criticality is Criticality.CRITICAL
    assert supercritical_bd.criticality is Criticality.SUPERCRITICAL
    assert subcritical_bd.criticality is Criticality.SUBCRITICAL
    assert supercritical_bd.offspring_mean == pytest.approx(1.0)


def test_validate_report(half_stable):
    rep = half_stable.validate()
    assert rep.criticality is Criticality.CRITICAL
    assert rep.xlogx_finite and not rep.second_moment_finite
    assert rep.stable_params == (0.5, 1.0)


def test_regular_variation_of_critical_finite_law():
    law = FiniteSupport(2.0, -3.0, 0.0, 1.0)
    assert law.criticality is Criticality.CRITICAL
    assert law.regular_variation() == (1.0, pytest.approx(law.f_second(1.0) / 2))


# -- errors ---------------------------------------------------------------
@pytest.mark.parametrize("coeffs", [(1.0, -2.0, 2.0), (-1.0, 0.0, 1.0), (1.0, 1.0, -2.0), (0.0, 0.0)])
def test_invalid_finite_laws(coeffs):
    with pytest.raises(InvalidLaw):
        FiniteSupport(*coeffs)


@pytest.mark.parametrize("nu,c", [(0.0, 1.0), (1.5, 1.0), (0.5, 0.0), (0.5, -1.0)])
def test_invalid_stable_laws(nu, c):
    with pytest.raises(InvalidLaw):
        Stable(nu, c)


def test_domain_checked(quadratic):
    with pytest.raises(DomainError):
        quadratic.f(1.5)
    with pytest.raises(DomainError):
        quadratic.f_prime(-0.1)


def test_law_from_mapping():
    assert law_from_mapping({"kind": "stable", "nu": "0.5"}) == Stable(0.5, 1.0)
    assert law_from_mapping({"kind": "finite", "coefficients": "1, -3, 2"}) == FiniteSupport(1, -3, 2)
    for bad in ({"kind": "other"}, {"kind": "stable"}, {"kind": "finite", "coefficients": "1,x"},
                {"kind": "finite", "coefficients": "1, -1, 1"}):
        with pytest.raises(ConfigError):
            law_from_mapping(bad)


# -- properties -----------------------------------------------------------
@given(nus, scales)
def test_stable_intensities_form_a_law(nu, c):
    law = Stable(nu, c)
    a = law.coefficients(400)
    assert a[0] > 0 and a[1] < 0
    assert np.all(a[2:] >= 0)
    assert a.sum() + law.tail_mass(400) == pytest.approx(0.0, abs=1e-12 * c)


@given(nus, scales, st.floats(0.0, 0.999))
def test_stable_generating_function_matches_series(nu, c, s):
    law = Stable(nu, c)
    n = 4000
    partial = np.polynomial.polynomial.polyval(s, law.coefficients(n))
    # tail of the series at s is bounded by the tail mass times s^n
    assert law.f(s) == pytest.approx(partial, abs=law.tail_mass(n) * s**n + 1e-12)


@given(finite_laws())
def test_finite_law_root_at_one(law):
    assert abs(law.f(1.0)) < 1e-12 * max(1.0, law.total_rate)
    assert law.total_rate == pytest.approx(-law.a1)


@given(finite_laws(), st.floats(0.0, 1.0))
def test_finite_derivative_matches_difference(law, s):
    h = 1e-6
    lo, hi = max(0.0, s - h), min(1.0, s + h)
    fd = (law.f(hi) - law.f(lo)) / (hi - lo)
    assert law.f_prime(s) == pytest.approx(fd, rel=1e-5, abs=1e-6)


@given(nus)
def test_stable_second_derivative_infinite_at_one_only_below_one(nu):
    law = Stable(nu)
    val = law.f_second(1.0)
    assert math.isinf(val) == (nu < 1.0)
    assert special.binom(1 + nu, 2) * 2 == pytest.approx(law.f_second(0.0) / law.c)
