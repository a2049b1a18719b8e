from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from waistlab.surface import (
    RevolutionProfile,
    SurfacePoint,
    area_element,
    curvature_sandwich,
    gaussian_curvature,
    integrated_curvature,
    meridian_length,
    metric_coefficients,
    polynomial_integrand,
    radius,
    sandwich_height,
)

UNIT = RevolutionProfile(1.0, 1.0, 2, 1.0)

heights = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False)


class TestRevolutionProfile:
    def test_power_is_two_plus_k(self):
        assert UNIT.power == 4.0
        assert RevolutionProfile(2.0, 0.5, 0, 1.0).power == 2.0

    def test_waist_length(self):
        assert RevolutionProfile(2.0, 1.0, 2, 1.0).waist_length == pytest.approx(4.0 * math.pi)

    @pytest.mark.parametrize('field, value', [('a', 0.0), ('b', -1.0), ('z_max', 0.0)])
    def test_rejects_nonpositive_parameters(self, field: str, value: float):
        kwargs = {'a': 1.0, 'b': 1.0, 'k': 2, 'z_max': 1.0, field: value}
        with pytest.raises(ValueError, match=field):
            RevolutionProfile(**kwargs)

    def test_rejects_odd_k(self):
        with pytest.raises(ValueError, match='k must be even'):
            RevolutionProfile(1.0, 1.0, 3, 1.0)

    def test_odd_k_allowed_with_flag(self):
        profile = RevolutionProfile(1.0, 1.0, 3, 1.0, allow_odd_k=True)
        assert profile.power == 5.0

    def test_with_b_keeps_everything_else(self):
        other = UNIT.with_b(2.0)
        assert (other.a, other.b, other.k, other.z_max) == (1.0, 2.0, 2, 1.0)


class TestSurfacePoint:
    def test_theta_wraps_lift(self):
        assert SurfacePoint(0.0, 2.0 * math.pi + 0.5).theta == pytest.approx(0.5)


class TestRadius:
    def test_quartic_profile(self):
        assert radius(UNIT, 0.5) == pytest.approx(1.0625)

    def test_quadratic_profile(self):
        assert radius(RevolutionProfile(2.0, 0.5, 0, 1.0), 1.0) == pytest.approx(2.5)

    def test_minimum_at_waist(self):
        assert radius(UNIT, 0.0) == 1.0

    def test_outside_annulus_raises(self):
        with pytest.raises(ValueError, match='z_max'):
            radius(UNIT, 1.5)

    def test_accepts_arrays(self):
        r = radius(UNIT, np.array([-0.5, 0.0, 0.5]))
        assert r == pytest.approx([1.0625, 1.0, 1.0625])

    @given(heights)
    def test_even_in_z(self, z: float):
        assert radius(UNIT, z) == pytest.approx(radius(UNIT, -z), rel=1e-14)


class TestMetric:
    def test_coefficients(self):
        e, g = metric_coefficients(UNIT, 0.5)
        assert e == pytest.approx(1.25)
        assert g == pytest.approx(1.12890625)

    def test_area_element(self):
        assert area_element(UNIT, 0.5) == pytest.approx(1.0625 * math.sqrt(1.25))


class TestGaussianCurvature:
    def test_flat_waist(self):
        assert gaussian_curvature(UNIT, 0.0) == 0.0

    def test_quadratic_profile_is_curved_at_waist(self):
        assert gaussian_curvature(RevolutionProfile(1.0, 1.0, 0, 1.0), 0.0) == pytest.approx(-2.0)

    def test_value_at_half(self):
        assert gaussian_curvature(UNIT, 0.5) == pytest.approx(-3.0 / (1.0625 * 1.25**2))

    @given(heights)
    def test_nonpositive(self, z: float):
        assert gaussian_curvature(UNIT, z) <= 0.0

    def test_integrated_curvature_matches_quadrature(self):
        from scipy import integrate

        def integrand(z: float) -> float:
            return float(gaussian_curvature(UNIT, z) * area_element(UNIT, z))

        expected, _ = integrate.quad(integrand, 0.1, 0.6, epsabs=1e-13)
        assert integrated_curvature(UNIT, 0.1, 0.6, 0.7) == pytest.approx(0.7 * expected, rel=1e-9)


class TestMeridianLength:
    def test_zero_at_waist(self):
        assert meridian_length(UNIT, 0.0) == 0.0

    def test_longer_than_height(self):
        length = meridian_length(UNIT, 0.4)
        assert length == pytest.approx(0.401856, abs=1e-5)
        assert length > 0.4

    def test_even(self):
        assert meridian_length(UNIT, -0.3) == meridian_length(UNIT, 0.3)


class TestSandwich:
    def test_ordering_near_waist(self):
        z = np.linspace(0.0, 0.3, 31)
        assert curvature_sandwich(UNIT.with_b(0.5), UNIT.with_b(2.0), z)

    def test_ordering_is_local(self):
        height = sandwich_height(UNIT.with_b(0.5), UNIT.with_b(2.0))
        assert 0.3 < height < UNIT.z_max

    def test_equal_profiles_hold_everywhere(self):
        assert sandwich_height(UNIT, UNIT) == UNIT.z_max

    def test_mismatched_profiles_raise(self):
        with pytest.raises(ValueError):
            curvature_sandwich(UNIT, RevolutionProfile(2.0, 1.0, 2, 1.0), 0.1)


class TestPolynomialIntegrand:
    def test_vanishes_at_waist(self):
        assert polynomial_integrand(UNIT, 0.0) == 0.0

    def test_is_sine_of_asymptote_angle(self):
        from waistlab.geodesics import asymptote_angle

        assert polynomial_integrand(UNIT, 0.5) == pytest.approx(math.sin(asymptote_angle(UNIT, 0.5)))
