from __future__ import annotations

import math

import numpy as np
import pytest

from waistlab.busemann import (
    BarrierCurve,
    barrier_curve,
    barrier_derivative,
    busemann_limit,
    busemann_sum_limit,
    busemann_sum_quadrature,
    fit_power_law,
    leading_coefficient,
    loglog_fit,
    peierls_barrier_busemann,
)
from waistlab.errors import DegenerateFit
from waistlab.surface import RevolutionProfile, SurfacePoint

UNIT = RevolutionProfile(1.0, 1.0, 2, 1.0)


class TestQuadrature:
    def test_value_at_point_two(self):
        assert busemann_sum_quadrature(UNIT, 0.2) == pytest.approx(7.54e-3, rel=5e-3)

    def test_zero_on_waist(self):
        assert busemann_sum_quadrature(UNIT, 0.0) == 0.0

    def test_even(self):
        assert busemann_sum_quadrature(UNIT, -0.3) == busemann_sum_quadrature(UNIT, 0.3)

    def test_increasing_in_height(self):
        values = [busemann_sum_quadrature(UNIT, z) for z in (0.1, 0.2, 0.3, 0.4)]
        assert values == sorted(values)

    def test_derivative_is_odd(self):
        assert barrier_derivative(UNIT, -0.2) == pytest.approx(-barrier_derivative(UNIT, 0.2))

    @pytest.mark.parametrize('z', [0.1, 0.2, 0.45])
    def test_derivative_matches_central_difference(self, z: float):
        h = 1e-4
        slope = (busemann_sum_quadrature(UNIT, z + h) - busemann_sum_quadrature(UNIT, z - h)) / (2 * h)
        assert barrier_derivative(UNIT, z) == pytest.approx(slope, rel=1e-4)

    def test_outside_annulus_raises(self):
        with pytest.raises(ValueError):
            busemann_sum_quadrature(UNIT, 1.2)

    def test_peierls_barrier_is_busemann_sum(self):
        assert peierls_barrier_busemann(UNIT, 0.25) == busemann_sum_quadrature(UNIT, 0.25)


class TestLeadingCoefficient:
    @pytest.mark.parametrize(
        'profile, coeff, power',
        [
            (UNIT, 2.0 * math.sqrt(2.0) / 3.0, 3.0),
            (RevolutionProfile(1.0, 1.0, 0, 1.0), math.sqrt(2.0), 2.0),
            (RevolutionProfile(2.0, 1.0, 2, 1.0), 2.0 / 3.0, 3.0),
        ],
    )
    def test_closed_form(self, profile: RevolutionProfile, coeff: float, power: float):
        c, p = leading_coefficient(profile)
        assert c == pytest.approx(coeff)
        assert p == power

    def test_quadrature_matches_leading_law_near_waist(self):
        coeff, power = leading_coefficient(UNIT)
        z = 0.05
        assert busemann_sum_quadrature(UNIT, z) == pytest.approx(coeff * z**power, rel=1e-4)


class TestLimit:
    @pytest.mark.slow
    def test_near_waist_matches_quadrature(self):
        assert busemann_sum_limit(UNIT, 0.05, 50.0) == pytest.approx(busemann_sum_quadrature(UNIT, 0.05), abs=1e-3)

    def test_zero_on_waist(self):
        assert busemann_limit(UNIT, SurfacePoint(0.0, 0.0), 25.0) == 0.0

    def test_short_horizon_rejected(self):
        with pytest.raises(ValueError, match='horizon'):
            busemann_limit(UNIT, SurfacePoint(0.1, 0.0), 5.0)

    def test_bad_direction_rejected(self):
        with pytest.raises(ValueError, match='direction'):
            busemann_limit(UNIT, SurfacePoint(0.1, 0.0), 25.0, direction=0)

    def test_directions_agree_by_symmetry(self):
        x = SurfacePoint(0.2, 0.0)
        forward = busemann_limit(UNIT, x, 25.0, 1)
        backward = busemann_limit(UNIT, x, 25.0, -1)
        assert forward == pytest.approx(backward, abs=1e-9)

    @pytest.mark.slow
    def test_converges_to_quadrature(self):
        exact = busemann_sum_quadrature(UNIT, 0.2)
        short = busemann_sum_limit(UNIT, 0.2, 25.0)
        long = busemann_sum_limit(UNIT, 0.2, 50.0)
        assert long == pytest.approx(exact, abs=1e-3)
        assert short >= long - 1e-9


class TestPowerLawFit:
    def test_synthetic_cubic(self):
        x = np.linspace(0.05, 0.5, 20)
        fit = loglog_fit(x, x**3)
        assert fit.power == pytest.approx(3.0)
        assert fit.coeff == pytest.approx(1.0)
        assert fit.r_squared == pytest.approx(1.0)

    def test_noise_is_degenerate(self):
        x = np.linspace(1.0, 2.0, 20)
        y = np.tile([1.0, 2.0], 10)
        with pytest.raises(DegenerateFit):
            loglog_fit(x, y)

    def test_flatter_profile_exponent(self):
        profile = RevolutionProfile(1.0, 1.0, 4, 1.0)
        curve = barrier_curve(profile, np.linspace(0.01, 0.25, 64))
        fit = fit_power_law(curve, 0.02, 0.2)
        assert fit.power == pytest.approx(4.0, abs=0.05)

    def test_cylinder_like_waist_exponent(self):
        profile = RevolutionProfile(1.0, 1.0, 0, 1.0)
        curve = barrier_curve(profile, np.linspace(0.01, 0.25, 64))
        assert fit_power_law(curve, 0.02, 0.2).power == pytest.approx(2.0, abs=0.05)

    def test_too_few_samples(self):
        curve = barrier_curve(UNIT, np.linspace(0.05, 0.15, 5))
        with pytest.raises(ValueError, match='samples'):
            fit_power_law(curve, 0.0, 1.0)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            BarrierCurve(np.zeros(1), np.zeros(1), 'guess')
