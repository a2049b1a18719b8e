from __future__ import annotations

import numpy as np
import pytest

from waistlab.busemann import busemann_sum_quadrature
from waistlab.errors import EmptyAubrySet
from waistlab.grid import Grid, ScalarField
from waistlab.surface import RevolutionProfile, SurfacePoint
from waistlab.weakkam import (
    LagrangianSpec,
    aubry_rows,
    aubry_set_detect,
    aubry_tolerance,
    barrier_convergence,
    barrier_refinement,
    barrier_relative_error,
    critical_value,
    default_tau,
    edge_action,
    fixed_point_residual,
    geodesic_flow_critical_value,
    lax_oleinik_backward,
    lax_oleinik_forward,
    peierls_barrier_grid,
    richardson_barrier,
    waist_energy,
    weak_kam_pair,
)

UNIT = RevolutionProfile(1.0, 1.0, 2, 1.0)
SMALL = Grid(16, 17)
SPEC = LagrangianSpec.calibrated(UNIT)


@pytest.fixture(scope='module')
def pair():
    grid = Grid(32, 33)
    return weak_kam_pair(UNIT, SPEC, grid, default_tau(SPEC, grid), SPEC.expected_critical_value)


@pytest.fixture(scope='module')
def barrier(pair):
    return peierls_barrier_grid(pair.u_minus, pair.u_plus)


class TestLagrangianSpec:
    def test_calibrated_stable_norm(self):
        assert SPEC.stable_norm == 1.0
        assert SPEC.expected_critical_value == 0.5

    def test_scaled(self):
        spec = LagrangianSpec.calibrated(UNIT, 2.0)
        assert spec.expected_critical_value == pytest.approx(2.0)


class TestEdgeAction:
    def test_waist_step(self):
        tau = default_tau(SPEC, SMALL)
        action = edge_action(UNIT, SPEC, SurfacePoint(0.0, 0.0), SurfacePoint(0.0, tau), tau)
        assert action == pytest.approx(-tau / 2)

    def test_rest_costs_nothing(self):
        p = SurfacePoint(0.3, 1.0)
        assert edge_action(UNIT, SPEC, p, p, 0.1) == 0.0

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError, match='tau'):
            edge_action(UNIT, SPEC, SurfacePoint(0.0, 0.0), SurfacePoint(0.0, 0.1), 0.0)


class TestDefaultTau:
    def test_two_waist_cells(self):
        assert default_tau(SPEC, SMALL) == pytest.approx(2.0 * SMALL.dtheta)

    def test_factor_outside_stencil(self):
        with pytest.raises(ValueError):
            default_tau(SPEC, SMALL, tau_factor=4.0)


class TestWaistEnergy:
    def test_calibrated_step_on_flat_field(self):
        field = ScalarField.constant(UNIT, SMALL)
        assert waist_energy(field, SPEC, default_tau(SPEC, SMALL)) == pytest.approx(0.5)

    def test_step_off_the_cell_lattice(self):
        # tau of 2.2 cells: the best whole-cell move is 2 cells, slower than c / a
        field = ScalarField.constant(UNIT, SMALL)
        energy = waist_energy(field, SPEC, default_tau(SPEC, SMALL, tau_factor=2.2))
        assert energy == pytest.approx(0.5 * (2.0 / 2.2) ** 2)

    def test_untwisted_rest(self):
        spec = LagrangianSpec(UNIT, 0.0)
        field = ScalarField.constant(UNIT, SMALL)
        assert waist_energy(field, spec, default_tau(spec, SMALL)) == 0.0


class TestLaxOleinik:
    def _field(self, seed: int) -> ScalarField:
        rng = np.random.default_rng(seed)
        return ScalarField(UNIT, SMALL, rng.normal(size=(SMALL.n_z, SMALL.n_theta)))

    def test_commutes_with_constants(self):
        f = self._field(1)
        tau = default_tau(SPEC, SMALL)
        shifted = lax_oleinik_backward(f.with_values(f.values + 5.0), SPEC, tau, 0.5)
        plain = lax_oleinik_backward(f, SPEC, tau, 0.5)
        assert np.allclose(shifted.values - plain.values, 5.0, atol=1e-12)

    def test_backward_is_monotone(self):
        f = self._field(2)
        g = f.with_values(f.values + np.abs(self._field(3).values))
        tau = default_tau(SPEC, SMALL)
        assert np.all(lax_oleinik_backward(f, SPEC, tau, 0.5).values <= lax_oleinik_backward(g, SPEC, tau, 0.5).values)

    def test_forward_is_monotone(self):
        f = self._field(4)
        g = f.with_values(f.values + 1.0)
        tau = default_tau(SPEC, SMALL)
        assert np.all(lax_oleinik_forward(f, SPEC, tau, 0.5).values <= lax_oleinik_forward(g, SPEC, tau, 0.5).values)


class TestCriticalValue:
    def test_calibrated(self):
        assert critical_value(UNIT, SPEC, SMALL, iterations=400, tolerance=1e-3) == pytest.approx(0.5, abs=0.02)

    def test_stronger_twist(self):
        spec = LagrangianSpec.calibrated(UNIT, 2.0)
        assert critical_value(UNIT, spec, SMALL, iterations=400, tolerance=1e-3) == pytest.approx(2.0, abs=0.08)

    def test_untwisted_flow(self):
        assert geodesic_flow_critical_value(UNIT, SMALL, iterations=200) == pytest.approx(0.0, abs=1e-3)

    def test_needs_waist_row(self):
        with pytest.raises(ValueError, match='odd'):
            critical_value(UNIT, SPEC, Grid(16, 16))

    def test_profile_mismatch(self):
        with pytest.raises(ValueError, match='profile'):
            critical_value(UNIT.with_b(2.0), SPEC, SMALL)


class TestWeakKamPair:
    def test_normalized_on_waist(self, pair):
        waist = pair.u_minus.grid.waist_row
        assert np.allclose(pair.u_minus.values[waist], 0.0, atol=1e-8)
        assert np.allclose(pair.u_plus.values[waist], 0.0, atol=1e-8)

    def test_converged(self, pair):
        assert pair.residual < 1e-8

    def test_rotation_invariant(self, pair):
        assert pair.u_minus.theta_oscillation() < 1e-9
        assert pair.u_plus.theta_oscillation() < 1e-9

    def test_barrier_nonnegative(self, barrier):
        assert barrier.values.min() >= -1e-9

    def test_barrier_grows_away_from_waist(self, barrier):
        means = barrier.row_means()
        waist = barrier.grid.waist_row
        assert means[waist + 6] > means[waist + 2] > 0

    def test_fixed_point_residual(self, pair):
        grid = pair.u_minus.grid
        assert fixed_point_residual(pair.u_minus, SPEC, default_tau(SPEC, grid), 0.5) < 1e-8

    def test_residual_sees_a_perturbed_field(self, pair):
        grid = pair.u_minus.grid
        bumped = pair.u_minus.values.copy()
        bumped[grid.waist_row + 4] += 0.01
        field = pair.u_minus.with_values(bumped)
        assert fixed_point_residual(field, SPEC, default_tau(SPEC, grid), 0.5) > 1e-4

    def test_waist_energy_from_minimizers(self, pair):
        grid = pair.u_minus.grid
        assert waist_energy(pair.u_minus, SPEC, default_tau(SPEC, grid)) == pytest.approx(0.5, rel=1e-9)

    def test_grids_must_match(self, pair):
        other = ScalarField.constant(UNIT, SMALL)
        with pytest.raises(ValueError):
            peierls_barrier_grid(pair.u_minus, other)


class TestAubrySet:
    def test_concentrates_on_waist(self, barrier):
        rows = aubry_rows(aubry_set_detect(barrier, aubry_tolerance(UNIT, barrier.grid)))
        waist = barrier.grid.waist_row
        assert waist in rows
        assert set(rows) <= {waist - 1, waist, waist + 1}

    def test_tolerance_depends_only_on_the_grid(self):
        coarse, fine = aubry_tolerance(UNIT, Grid(32, 33)), aubry_tolerance(UNIT, Grid(32, 65))
        assert coarse == pytest.approx(busemann_sum_quadrature(UNIT, 1.0 / 32))
        assert fine < coarse

    def test_empty_set_raises(self):
        field = ScalarField.constant(UNIT, SMALL, 1.0)
        with pytest.raises(EmptyAubrySet):
            aubry_set_detect(field, 0.5)


class TestGridHalving:
    def test_coarsened(self):
        assert Grid(64, 65).coarsened() == Grid(32, 33)

    def test_needs_waist_on_both_grids(self):
        with pytest.raises(ValueError, match='halve'):
            Grid(32, 35).coarsened()

    def test_needs_even_columns(self):
        with pytest.raises(ValueError, match='halve'):
            Grid(33, 33).coarsened()


def _reference(z: float) -> float:
    return busemann_sum_quadrature(UNIT, z)


class TestBarrierAccuracy:
    def test_relative_error_needs_rows(self, barrier):
        with pytest.raises(ValueError, match='rows'):
            barrier_relative_error(barrier, _reference, 0.11, 0.12)

    def test_richardson_cancels_first_order_error(self):
        fine_grid, coarse_grid = Grid(8, 17), Grid(4, 9)
        z_fine, z_coarse = fine_grid.z(UNIT), coarse_grid.z(UNIT)
        fine = ScalarField(UNIT, fine_grid, np.repeat((z_fine**3 + 0.1 * np.abs(z_fine))[:, None], 8, axis=1))
        coarse = ScalarField(UNIT, coarse_grid, np.repeat((z_coarse**3 + 0.2 * np.abs(z_coarse))[:, None], 4, axis=1))
        corrected = richardson_barrier(fine, coarse)
        assert corrected.grid == coarse_grid
        assert np.allclose(corrected.row_means(), z_coarse**3)

    def test_richardson_needs_matching_grids(self, barrier):
        with pytest.raises(ValueError, match='halving'):
            richardson_barrier(barrier, barrier)

    @pytest.mark.slow
    def test_error_halves_when_grid_doubles(self):
        report = barrier_convergence(UNIT, SPEC, [Grid(64, 65), Grid(128, 129)], 0.5, _reference, 0.1, 0.4)
        ratio = report[0][1] / report[1][1]
        assert 1.6 <= ratio <= 2.4

    @pytest.mark.slow
    def test_extrapolated_barrier_within_five_percent(self):
        refinement = barrier_refinement(UNIT, SPEC, Grid(128, 129), 0.5, _reference, 0.1, 0.4)
        assert 1.6 <= refinement.halving_ratio <= 2.4
        assert refinement.corrected_error <= 0.05
        assert refinement.corrected_error < refinement.fine_error
