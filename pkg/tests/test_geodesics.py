from __future__ import annotations

import math

import numpy as np
import pytest

from waistlab.errors import DomainExit, NoConvergence
from waistlab.geodesics import (
    GeodesicState,
    asymptote_angle,
    clairaut_constant,
    connect,
    distance,
    integrate_geodesic,
)
from waistlab.surface import RevolutionProfile, SurfacePoint, meridian_length, metric_coefficients

UNIT = RevolutionProfile(1.0, 1.0, 2, 1.0)


class TestClairautConstant:
    def test_along_waist(self):
        assert clairaut_constant(UNIT, GeodesicState(SurfacePoint(0.0, 0.0), 0.0)) == pytest.approx(1.0)

    def test_on_meridian(self):
        assert clairaut_constant(UNIT, GeodesicState(SurfacePoint(0.3, 0.0), math.pi / 2)) == pytest.approx(0.0)


class TestAsymptoteAngle:
    def test_unit_profile(self):
        assert asymptote_angle(UNIT, 0.5) == pytest.approx(0.3445, abs=1e-4)

    def test_wider_waist(self):
        assert asymptote_angle(RevolutionProfile(2.0, 1.0, 2, 1.0), 0.5) == pytest.approx(0.2462, abs=1e-4)

    def test_zero_on_waist(self):
        assert asymptote_angle(UNIT, 0.0) == 0.0


class TestIntegrateGeodesic:
    def test_waist_loop_closes(self):
        state = GeodesicState(SurfacePoint(0.0, 0.0), 0.0)
        path = integrate_geodesic(UNIT, state, 2.0 * math.pi, 1e-3)
        end = path.final_state
        assert abs(end.point.z) < 1e-8
        assert end.point.theta_lift == pytest.approx(2.0 * math.pi, abs=1e-8)
        assert abs(end.psi) < 1e-8

    def test_meridian_keeps_theta(self):
        state = GeodesicState(SurfacePoint(0.0, 0.7), math.pi / 2)
        path = integrate_geodesic(UNIT, state, 0.5, 1e-3)
        assert np.all(path.theta_lift == pytest.approx(0.7, abs=1e-12))
        assert path.z[-1] > 0.45

    def test_clairaut_drift_is_small(self):
        state = GeodesicState(SurfacePoint(0.2, 0.0), -0.05)
        path = integrate_geodesic(UNIT, state, 2.0, 1e-3)
        assert path.max_drift < 1e-9
        assert path.s[-1] == pytest.approx(2.0)

    def test_asymptotic_geodesic_approaches_waist(self):
        z0 = 0.3
        state = GeodesicState(SurfacePoint(z0, 0.0), -asymptote_angle(UNIT, z0))
        path = integrate_geodesic(UNIT, state, 100.0, 1e-2)
        assert abs(path.z[-1]) < 1e-2
        assert np.all(np.diff(path.z) <= 1e-12)

    def test_leaving_annulus_raises_with_path(self):
        state = GeodesicState(SurfacePoint(0.5, 0.0), math.pi / 2)
        with pytest.raises(DomainExit) as info:
            integrate_geodesic(UNIT, state, 2.0, 1e-3)
        assert info.value.path is not None
        assert info.value.path.clipped

    def test_clip_returns_truncated_path(self):
        state = GeodesicState(SurfacePoint(0.5, 0.0), math.pi / 2)
        path = integrate_geodesic(UNIT, state, 2.0, 1e-3, clip=True)
        assert path.clipped
        assert path.total_length < 2.0

    def test_reversed_run_returns_to_start(self):
        start = GeodesicState(SurfacePoint(0.2, 0.3), 0.1)
        there = integrate_geodesic(UNIT, start, 2.0, 1e-3)
        back = integrate_geodesic(UNIT, there.final_state.reversed(), 2.0, 1e-3).final_state
        assert back.point.z == pytest.approx(0.2, abs=1e-8)
        assert back.point.theta_lift == pytest.approx(0.3, abs=1e-8)
        assert back.reversed().psi == pytest.approx(0.1, abs=1e-8)

    def test_unit_speed_along_path(self):
        path = integrate_geodesic(UNIT, GeodesicState(SurfacePoint(-0.1, 0.0), 0.4), 1.0, 1e-3)
        dz = np.gradient(path.z, path.s)[1:-1]
        dtheta = np.gradient(path.theta_lift, path.s)[1:-1]
        e, g = metric_coefficients(UNIT, path.z[1:-1])
        assert np.allclose(e * dz**2 + g * dtheta**2, 1.0, atol=1e-5)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            integrate_geodesic(UNIT, GeodesicState(SurfacePoint(0.0, 0.0), 0.0), 1.0, 0.0)

    def test_rows_have_five_columns(self):
        path = integrate_geodesic(UNIT, GeodesicState(SurfacePoint(0.1, 0.0), 0.2), 0.1, 1e-2)
        rows = list(path.rows())
        assert len(rows) == len(path.s)
        assert all(len(row) == 5 for row in rows)


class TestConnect:
    def test_waist_arc(self):
        assert distance(UNIT, SurfacePoint(0.0, 0.0), SurfacePoint(0.0, math.pi)) == pytest.approx(math.pi)

    def test_meridian_arc(self):
        length = distance(UNIT, SurfacePoint(0.0, 0.0), SurfacePoint(0.4, 0.0))
        assert length == pytest.approx(meridian_length(UNIT, 0.4), rel=1e-10)

    def test_zero_distance_to_self(self):
        p = SurfacePoint(0.2, 1.0)
        assert distance(UNIT, p, p) == 0.0

    def test_symmetric(self):
        p, q = SurfacePoint(0.1, 0.0), SurfacePoint(0.3, 0.8)
        assert distance(UNIT, p, q) == pytest.approx(distance(UNIT, q, p), rel=1e-8)

    def test_shorter_than_broken_path(self):
        p, q = SurfacePoint(0.2, 0.0), SurfacePoint(0.2, 1.0)
        corner = SurfacePoint(0.0, 0.0), SurfacePoint(0.0, 1.0)
        broken = distance(UNIT, p, corner[0]) + distance(UNIT, *corner) + distance(UNIT, corner[1], q)
        assert distance(UNIT, p, q) < broken

    def test_hits_endpoint(self):
        p, q = SurfacePoint(0.1, 0.0), SurfacePoint(0.25, 0.6)
        conn = connect(UNIT, p, q, samples=20)
        assert conn.z[0] == pytest.approx(0.1)
        assert conn.z[-1] == pytest.approx(0.25, abs=1e-6)
        assert conn.theta[-1] == pytest.approx(0.6)

    def test_directions_are_unit(self):
        conn = connect(UNIT, SurfacePoint(0.1, 0.0), SurfacePoint(0.2, -0.5))
        for vx, vz in (conn.start_direction, conn.end_direction):
            assert math.hypot(vx, vz) == pytest.approx(1.0)
        assert conn.start_direction[0] < 0

    def test_far_waist_point_from_near_the_waist(self):
        # the fan around the asymptote mixes rays escaping up and down; only a finite bracket is a root
        conn = connect(UNIT, SurfacePoint(0.05, 0.0), SurfacePoint(0.0, 50.0), step=0.02)
        assert 49.99 < conn.length < 50.01
        assert math.hypot(*conn.start_direction) == pytest.approx(1.0)
        assert abs(conn.start_direction[1]) < 0.1

    def test_triangle_inequality_on_random_triples(self):
        rng = np.random.default_rng(17)
        for _ in range(4):
            zs = rng.uniform(-0.3, 0.3, 3)
            thetas = np.sort(rng.uniform(0.0, 1.5, 3))
            p, q, r = (SurfacePoint(float(z), float(t)) for z, t in zip(zs, thetas))
            assert distance(UNIT, p, r) <= distance(UNIT, p, q) + distance(UNIT, q, r) + 1e-8

    def test_unreachable_point_raises(self):
        short = RevolutionProfile(1.0, 1.0, 2, 0.3)
        with pytest.raises(NoConvergence):
            connect(short, SurfacePoint(0.29, 0.0), SurfacePoint(-0.29, 0.01))
