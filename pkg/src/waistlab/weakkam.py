"""Discrete Lax-Oleinik solver for the twisted Lagrangian L(x, v) = |v|^2/2 - omega(v), omega = c dtheta.

One step of the backward operator is

    (T- f)(x) = min over y of  f(y) + d(y, x)^2 / (2 tau) - c (theta_x - theta_y) + c0 tau

where y ranges over foot points up to STENCIL_RADIUS cells away. Theta offsets
are whole cells. z offsets are continuous: f is interpolated linearly between
rows and the minimum over each cell segment is taken in closed form, since the
action is quadratic in the z offset there. Chords use E and G at the segment
midpoint. Rows beyond the boundary are mirror images of interior rows.

With tau = tau_factor * a^2 * dtheta / c the calibrated waist motion at speed
c/a advances exactly tau_factor cells per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

from waistlab.busemann import busemann_sum_quadrature
from waistlab.errors import EmptyAubrySet, NoBracket, NonConvergence
from waistlab.grid import Grid, ScalarField
from waistlab.surface import RevolutionProfile, SurfacePoint, metric_coefficients

log = logging.getLogger(__name__)

STENCIL_RADIUS = 3
DRIFT_ITERATIONS = 2000
DRIFT_WINDOW = 0.25
BISECTION_TOLERANCE = 1e-3
FIXED_POINT_TOLERANCE = 1e-8
MAX_ITERATIONS = 20000


@dataclass(frozen=True, slots=True)
class LagrangianSpec:
    profile: RevolutionProfile
    omega_coefficient: float

    @classmethod
    def calibrated(cls, profile: RevolutionProfile, scale: float = 1.0) -> LagrangianSpec:
        """omega = scale * a * dtheta, so the unit-speed waist has omega(gamma') = scale."""
        return cls(profile, scale * profile.a)

    @property
    def stable_norm(self) -> float:
        return abs(self.omega_coefficient) / self.profile.a

    @property
    def expected_critical_value(self) -> float:
        """Half the squared stable norm."""
        return 0.5 * self.stable_norm**2


def default_tau(spec: LagrangianSpec, grid: Grid, tau_factor: float = 2.0) -> float:
    """tau_factor waist cells of calibrated motion, not tau_factor cell diagonals.

    Tying tau to the waist cell makes the discrete critical value c^2 / (2 a^2)
    exactly; the diagonal rule is kept only for the untwisted case c = 0.
    """
    if not 0 < tau_factor <= STENCIL_RADIUS:
        raise ValueError(f'tau_factor must lie in (0, {STENCIL_RADIUS}], got {tau_factor!r}')
    a = spec.profile.a
    c = abs(spec.omega_coefficient)
    if c == 0.0:
        return tau_factor * math.hypot(a * grid.dtheta, grid.dz(spec.profile))
    return tau_factor * a * a * grid.dtheta / max(c, a)


def _chord_squared(profile: RevolutionProfile, z_mid, dz, dtheta):
    e, g = metric_coefficients(profile, z_mid)
    return e * dz * dz + g * dtheta * dtheta


def edge_action(
    profile: RevolutionProfile, spec: LagrangianSpec, p: SurfacePoint, q: SurfacePoint, tau: float
) -> float:
    """One-step action from p to q in time tau: d(p, q)^2 / (2 tau) - c * (theta_q - theta_p)."""
    if not tau > 0:
        raise ValueError(f'tau must be positive, got {tau!r}')
    dtheta = q.theta_lift - p.theta_lift
    d2 = _chord_squared(profile, 0.5 * (p.z + q.z), q.z - p.z, dtheta)
    return float(d2 / (2.0 * tau) - spec.omega_coefficient * dtheta)


@dataclass(slots=True)
class _Stencil:
    """Precomputed row indices and action terms for one direction of time."""

    rows_a: list[np.ndarray] = field(default_factory=list)
    rows_b: list[np.ndarray] = field(default_factory=list)
    curvature: list[np.ndarray] = field(default_factory=list)  # E dz^2 / tau per row
    constant: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)


_STENCILS: dict[tuple, _Stencil] = {}


def _stencil(spec: LagrangianSpec, grid: Grid, tau: float, c0: float, direction: int) -> _Stencil:
    key = (spec, grid, tau, c0, direction)
    cached = _STENCILS.get(key)
    if cached is not None:
        return cached

    profile = spec.profile
    z = grid.z(profile)
    dz = grid.dz(profile)
    j = np.arange(grid.n_z)
    st = _Stencil()
    sigmas = range(-STENCIL_RADIUS, STENCIL_RADIUS)
    for sigma in sigmas:
        # foot z = z_j - direction * (sigma + t) dz, t in [0, 1]
        st.rows_a.append(grid.reflect_rows(j - direction * sigma))
        st.rows_b.append(grid.reflect_rows(j - direction * (sigma + 1)))
        z_mid = z - direction * 0.5 * (sigma + 0.5) * dz
        e, _ = metric_coefficients(profile, np.clip(z_mid, -profile.z_max, profile.z_max))
        st.curvature.append(e * dz * dz / tau)
        for m in range(-STENCIL_RADIUS, STENCIL_RADIUS + 1):
            shift = m * grid.dtheta
            chord = _chord_squared(profile, np.clip(z_mid, -profile.z_max, profile.z_max), 0.0, shift)
            st.constant[(m, sigma)] = chord / (2.0 * tau) - spec.omega_coefficient * shift + c0 * tau

    if len(_STENCILS) > 64:
        _STENCILS.clear()
    _STENCILS[key] = st
    return st


def _min_plus(values: np.ndarray, spec: LagrangianSpec, grid: Grid, tau: float, c0: float, direction: int):
    st = _stencil(spec, grid, tau, c0, direction)
    best = np.full_like(values, np.inf)
    for m in range(-STENCIL_RADIUS, STENCIL_RADIUS + 1):
        shifted = np.roll(values, direction * m, axis=1)
        for idx, sigma in enumerate(range(-STENCIL_RADIUS, STENCIL_RADIUS)):
            fa = shifted[st.rows_a[idx]]
            diff = shifted[st.rows_b[idx]] - fa
            q = st.curvature[idx][:, None]
            t = np.clip(-diff / q - sigma, 0.0, 1.0)
            candidate = fa + t * diff + 0.5 * q * (sigma + t) ** 2 + st.constant[(m, sigma)][:, None]
            np.minimum(best, candidate, out=best)
    return best


def lax_oleinik_backward(field: ScalarField, spec: LagrangianSpec, tau: float, c0: float) -> ScalarField:
    """(T- f)(x) = min_y f(y) + A(y -> x, tau) + c0 tau."""
    return field.with_values(_min_plus(field.values, spec, field.grid, tau, c0, 1))


def lax_oleinik_forward(field: ScalarField, spec: LagrangianSpec, tau: float, c0: float) -> ScalarField:
    """(T+ f)(x) = max_y f(y) - A(x -> y, tau) - c0 tau."""
    return field.with_values(-_min_plus(-field.values, spec, field.grid, tau, c0, -1))


def _drift_rate(spec: LagrangianSpec, grid: Grid, tau: float, c: float, iterations: int) -> float:
    values = np.zeros((grid.n_z, grid.n_theta))
    tops = np.empty(iterations)
    for n in range(iterations):
        values = _min_plus(values, spec, grid, tau, c, 1)
        tops[n] = values.max()
    start = int(iterations * (1.0 - DRIFT_WINDOW))
    steps = np.arange(start, iterations)
    slope = stats.theilslopes(tops[start:], steps).slope
    return float(slope / tau)


def critical_value(
    profile: RevolutionProfile,
    spec: LagrangianSpec,
    grid: Grid,
    tau: float | None = None,
    iterations: int = DRIFT_ITERATIONS,
    tolerance: float = BISECTION_TOLERANCE,
) -> float:
    """The c at which iterates of T- from f = 0 stop drifting, found by bisection.

    A downward drift means c is below critical, upward means above.
    """
    if spec.profile != profile:
        raise ValueError('Lagrangian spec belongs to a different profile')
    if grid.n_z % 2 == 0:
        raise ValueError(f'n_z must be odd so the waist is a grid row, got {grid.n_z!r}')
    tau = default_tau(spec, grid) if tau is None else tau

    lo, hi = -0.25, spec.expected_critical_value * 2.0 + 0.25
    drift_lo = _drift_rate(spec, grid, tau, lo, iterations)
    drift_hi = _drift_rate(spec, grid, tau, hi, iterations)
    if not (drift_lo < 0 < drift_hi):
        raise NoBracket(f'drift has the same sign at c={lo!r} ({drift_lo:.3e}) and c={hi!r} ({drift_hi:.3e})')

    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        drift = _drift_rate(spec, grid, tau, mid, iterations)
        log.debug('critical value bisection: c=%.6f drift=%.3e', mid, drift)
        if drift == 0.0:
            return mid
        if drift < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def geodesic_flow_critical_value(
    profile: RevolutionProfile, grid: Grid, iterations: int = DRIFT_ITERATIONS, tolerance: float = BISECTION_TOLERANCE
) -> float:
    """Critical value with omega = 0; the untwisted geodesic flow has c0 = 0."""
    return critical_value(profile, LagrangianSpec(profile, 0.0), grid, iterations=iterations, tolerance=tolerance)


class WeakKamPair(NamedTuple):
    u_minus: ScalarField
    u_plus: ScalarField
    iterations: int
    residual: float


def _fixed_point(step, start: np.ndarray, tol: float, max_iter: int, label: str) -> tuple[np.ndarray, int, float]:
    values = start
    oscillation = math.inf
    for n in range(1, max_iter + 1):
        nxt = step(values)
        delta = nxt - values
        oscillation = float(delta.max() - delta.min())
        values = nxt
        if oscillation < tol:
            log.debug('%s converged after %d iterations (oscillation %.2e)', label, n, oscillation)
            return values, n, oscillation
    raise NonConvergence(f'{label} did not settle after {max_iter} iterations (oscillation {oscillation:.3e})')


def weak_kam_pair(
    profile: RevolutionProfile,
    spec: LagrangianSpec,
    grid: Grid,
    tau: float,
    c0: float,
    tol: float = FIXED_POINT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> WeakKamPair:
    """Fixed points modulo constants of T- and T+, both normalized to 0 on the waist row."""
    waist = grid.waist_row
    zero = np.zeros((grid.n_z, grid.n_theta))

    u_minus, it_minus, res_minus = _fixed_point(
        lambda f: _min_plus(f, spec, grid, tau, c0, 1), zero, tol, max_iter, 'backward Lax-Oleinik'
    )
    u_plus, it_plus, res_plus = _fixed_point(
        lambda f: -_min_plus(-f, spec, grid, tau, c0, -1), zero, tol, max_iter, 'forward Lax-Oleinik'
    )
    u_minus = u_minus - u_minus[waist].mean()
    u_plus = u_plus - u_plus[waist].mean()
    return WeakKamPair(
        ScalarField(profile, grid, u_minus),
        ScalarField(profile, grid, u_plus),
        max(it_minus, it_plus),
        max(res_minus, res_plus),
    )


def peierls_barrier_grid(u_minus: ScalarField, u_plus: ScalarField) -> ScalarField:
    """P = u- - u+ pointwise."""
    if u_minus.grid != u_plus.grid:
        raise ValueError('conjugate pair lives on different grids')
    return u_minus.with_values(u_minus.values - u_plus.values)


def aubry_tolerance(profile: RevolutionProfile, grid: Grid) -> float:
    """The exact barrier half a cell off the waist; rows at least one cell away sit well above it."""
    return max(busemann_sum_quadrature(profile, 0.5 * grid.dz(profile)), 1e-12)


def aubry_set_detect(barrier: ScalarField, tol: float) -> set[tuple[int, int]]:
    """Nodes (z_index, theta_index) where the barrier is below tol."""
    rows, cols = np.nonzero(barrier.values < tol)
    nodes = set(zip(rows.tolist(), cols.tolist()))
    if not nodes:
        raise EmptyAubrySet(f'no node has barrier below {tol!r}; tolerance is under the discretization floor')
    return nodes


def aubry_rows(nodes: set[tuple[int, int]]) -> list[int]:
    return sorted({row for row, _ in nodes})


def fixed_point_residual(u_minus: ScalarField, spec: LagrangianSpec, tau: float, c0: float) -> float:
    """max |T- u - u - k| with k the mean shift; zero for an exact fixed point modulo constants."""
    delta = _min_plus(u_minus.values, spec, u_minus.grid, tau, c0, 1) - u_minus.values
    return float(np.max(np.abs(delta - delta.mean())))


def waist_energy(u_minus: ScalarField, spec: LagrangianSpec, tau: float) -> float:
    """Energy |v|^2/2 of the one-step minimizers of T- u- that end on the waist row.

    v is the displacement from the minimizing foot point divided by tau,
    averaged over the waist columns.
    """
    grid = u_minus.grid
    profile = spec.profile
    waist = grid.waist_row
    dz = grid.dz(profile)
    st = _stencil(spec, grid, tau, 0.0, 1)

    best = np.full(grid.n_theta, np.inf)
    step_theta = np.zeros(grid.n_theta)
    step_z = np.zeros(grid.n_theta)
    for m in range(-STENCIL_RADIUS, STENCIL_RADIUS + 1):
        shifted = np.roll(u_minus.values, m, axis=1)
        for idx, sigma in enumerate(range(-STENCIL_RADIUS, STENCIL_RADIUS)):
            fa = shifted[st.rows_a[idx][waist]]
            diff = shifted[st.rows_b[idx][waist]] - fa
            q = st.curvature[idx][waist]
            t = np.clip(-diff / q - sigma, 0.0, 1.0)
            candidate = fa + t * diff + 0.5 * q * (sigma + t) ** 2 + st.constant[(m, sigma)][waist]
            better = candidate < best - 1e-14
            best = np.where(better, candidate, best)
            step_theta = np.where(better, m * grid.dtheta, step_theta)
            step_z = np.where(better, (sigma + t) * dz, step_z)

    z_mid = grid.z(profile)[waist] - 0.5 * step_z
    d2 = _chord_squared(profile, z_mid, step_z, step_theta)
    return float(np.mean(d2) / (2.0 * tau * tau))


def barrier_relative_error(barrier: ScalarField, reference, z_lo: float, z_hi: float) -> float:
    """Largest relative error of the row-mean barrier against reference(z) over rows in [z_lo, z_hi]."""
    z = barrier.z
    means = barrier.row_means()
    mask = (z >= z_lo) & (z <= z_hi)
    if not np.any(mask):
        raise ValueError(f'no grid rows inside [{z_lo!r}, {z_hi!r}]')
    expected = np.array([reference(float(v)) for v in z[mask]])
    return float(np.max(np.abs(means[mask] - expected) / expected))


def richardson_barrier(fine: ScalarField, coarse: ScalarField) -> ScalarField:
    """2 P_h - P_2h on the coarse nodes, cancelling the first-order grid error."""
    if fine.grid.coarsened() != coarse.grid:
        raise ValueError(f'{coarse.grid!r} is not the halving of {fine.grid!r}')
    return coarse.with_values(2.0 * fine.values[::2, ::2] - coarse.values)


class BarrierRefinement(NamedTuple):
    coarse_error: float
    fine_error: float
    corrected_error: float

    @property
    def halving_ratio(self) -> float:
        return self.coarse_error / self.fine_error if self.fine_error > 0 else math.inf


def barrier_refinement(
    profile: RevolutionProfile,
    spec: LagrangianSpec,
    grid: Grid,
    c0: float,
    reference,
    z_lo: float,
    z_hi: float,
    tau_factor: float = 2.0,
    tol: float = FIXED_POINT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
    fine: WeakKamPair | None = None,
) -> BarrierRefinement:
    """Barrier errors on grid and its halving, plus the error after Richardson extrapolation.

    Pass an already solved *fine* pair to skip recomputing it.
    """
    coarse_grid = grid.coarsened()
    if fine is None:
        fine = weak_kam_pair(profile, spec, grid, default_tau(spec, grid, tau_factor), c0, tol, max_iter)
    coarse = weak_kam_pair(
        profile, spec, coarse_grid, default_tau(spec, coarse_grid, tau_factor), c0, tol, max_iter
    )
    p_fine = peierls_barrier_grid(fine.u_minus, fine.u_plus)
    p_coarse = peierls_barrier_grid(coarse.u_minus, coarse.u_plus)
    result = BarrierRefinement(
        coarse_error=barrier_relative_error(p_coarse, reference, z_lo, z_hi),
        fine_error=barrier_relative_error(p_fine, reference, z_lo, z_hi),
        corrected_error=barrier_relative_error(richardson_barrier(p_fine, p_coarse), reference, z_lo, z_hi),
    )
    log.info(
        'barrier error %.4f (%dx%d) -> %.4f (%dx%d), extrapolated %.4f',
        result.coarse_error,
        coarse_grid.n_theta,
        coarse_grid.n_z,
        result.fine_error,
        grid.n_theta,
        grid.n_z,
        result.corrected_error,
    )
    return result


def barrier_convergence(
    profile: RevolutionProfile,
    spec: LagrangianSpec,
    grids: list[Grid],
    c0: float,
    reference,
    z_lo: float,
    z_hi: float,
) -> list[tuple[Grid, float]]:
    """Relative barrier error for each grid, coarse to fine, at critical value c0."""
    report = []
    for grid in grids:
        tau = default_tau(spec, grid)
        pair = weak_kam_pair(profile, spec, grid, tau, c0)
        err = barrier_relative_error(peierls_barrier_grid(pair.u_minus, pair.u_plus), reference, z_lo, z_hi)
        log.info('grid %dx%d: barrier relative error %.4f', grid.n_theta, grid.n_z, err)
        report.append((grid, err))
    return report
