"""Twisted Laplacian on the annulus, its principal eigenpair, and the stationary measure.

The operator is

    L f = (1/sqrt g) d_z(sqrt g g^zz d_z f) + (1/r^2) d_theta^2 f + 2 lam (c/r^2) d_theta f + lam^2 (c^2/r^2) f

with sqrt g = r sqrt(1 + r'^2) and g^zz = 1/(1 + r'^2). The z part is a finite
volume stencil with zero flux through z = +-z_max, so it is symmetric in the
inner product weighted by the cell areas and annihilates constants on every row.

The stationary measure of the lam-twisted motion is read as the invariant
law of the ground-state (Doob) transform h^-1 (L - Lambda) h. Its density
against area is h_(+lam) * h_(-lam), because the weighted adjoint of L_lam is L_(-lam).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from waistlab.errors import EigenvalueMismatch, NonPositiveEigenvector, NotConverged
from waistlab.grid import Grid, ScalarField
from waistlab.surface import RevolutionProfile, area_element, derivatives

log = logging.getLogger(__name__)

MIN_GRID = 32
SHIFT_MARGIN = 1.0
RESIDUAL_TOLERANCE = 1e-8
MAX_POWER_ITERATIONS = 2000
MISMATCH_TOLERANCE = 1e-6


@dataclass(slots=True)
class TwistedOperator:
    profile: RevolutionProfile
    grid: Grid
    lam: float
    c: float
    matrix: sparse.csc_matrix

    @property
    def spectral_bound(self) -> float:
        """Upper bound lam^2 c^2 / a^2 on the real parts of the spectrum."""
        return (self.lam * self.c / self.profile.a) ** 2

    def coefficient_table(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


@dataclass(slots=True)
class EigenPair:
    lam: float
    eigenvalue: float
    eigenfunction: ScalarField
    residual: float
    iterations: int


@dataclass(slots=True)
class StationaryMeasure:
    """Probability mass per grid node."""

    density: ScalarField
    lam: float

    @property
    def total_mass(self) -> float:
        return float(self.density.values.sum())


def _z_part(profile: RevolutionProfile, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Lower, diagonal and upper coefficients of the z stencil, plus the node volumes."""
    z = grid.z(profile)
    dz = grid.dz(profile)
    z_half = 0.5 * (z[:-1] + z[1:])
    r_half, dr_half, _ = derivatives(profile, z_half)
    flux = r_half / np.sqrt(1.0 + dr_half * dr_half) / dz  # sqrt(g) g^zz / dz at the faces

    volume = area_element(profile, z) * dz
    volume[0] *= 0.5
    volume[-1] *= 0.5

    lower = np.zeros(grid.n_z)
    upper = np.zeros(grid.n_z)
    lower[1:] = flux / volume[1:]
    upper[:-1] = flux / volume[:-1]
    diag = -(lower + upper)
    return lower, diag, upper, volume


def assemble_twisted_laplacian(profile: RevolutionProfile, grid: Grid, lam: float, c: float) -> TwistedOperator:
    if grid.n_theta < MIN_GRID or grid.n_z < MIN_GRID:
        raise ValueError(f'grid must be at least {MIN_GRID} in each direction, got {grid.n_theta}x{grid.n_z}')

    n_t, n_z = grid.n_theta, grid.n_z
    lower, diag, upper, _ = _z_part(profile, grid)
    r = derivatives(profile, grid.z(profile))[0]
    inv_r2 = 1.0 / (r * r)
    dth = grid.dtheta

    node = np.arange(n_z * n_t).reshape(n_z, n_t)
    right = np.roll(node, -1, axis=1)
    left = np.roll(node, 1, axis=1)

    ring = inv_r2 / (dth * dth)
    drift = lam * c * inv_r2 / dth
    center = diag - 2.0 * ring + lam * lam * c * c * inv_r2

    rows, cols, vals = [], [], []

    def add(src: np.ndarray, dst: np.ndarray, weight_per_row: np.ndarray) -> None:
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.repeat(weight_per_row, n_t))

    add(node, node, center)
    add(node, right, ring + drift)
    add(node, left, ring - drift)
    add(node[1:], node[:-1], lower[1:])
    add(node[:-1], node[1:], upper[:-1])

    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_z * n_t, n_z * n_t)
    ).tocsc()
    return TwistedOperator(profile, grid, float(lam), float(c), matrix)


def _inverse_iteration(
    matrix: sparse.csc_matrix, shift: float, start: np.ndarray, max_iter: int
) -> tuple[float, np.ndarray, float, int]:
    n = matrix.shape[0]
    solver = sparse_linalg.splu((shift * sparse.identity(n, format='csc') - matrix).tocsc())
    h = start / np.max(np.abs(start))
    for it in range(1, max_iter + 1):
        nxt = solver.solve(h)
        nxt /= nxt[np.argmax(np.abs(nxt))]
        mh = matrix @ nxt
        eigenvalue = float(nxt @ mh / (nxt @ nxt))
        residual = float(np.max(np.abs(mh - eigenvalue * nxt)))
        h = nxt
        if residual <= RESIDUAL_TOLERANCE:
            return eigenvalue, h, residual, it
    raise NotConverged(f'inverse iteration stalled with residual {residual:.3e} after {max_iter} steps')


def principal_eigenpair(op: TwistedOperator, max_iter: int = MAX_POWER_ITERATIONS) -> EigenPair:
    """Largest-real eigenvalue and its positive eigenvector by shifted inverse iteration from h = 1."""
    shift = op.spectral_bound + SHIFT_MARGIN
    start = np.ones(op.matrix.shape[0])
    eigenvalue, h, residual, iterations = _inverse_iteration(op.matrix, shift, start, max_iter)
    if np.any(h <= 0.0):
        raise NonPositiveEigenvector(
            f'principal eigenvector has {int(np.count_nonzero(h <= 0))} nonpositive entries at lam={op.lam!r}; '
            'refine the grid'
        )
    log.debug('lam=%g: Lambda=%.12g after %d iterations (residual %.2e)', op.lam, eigenvalue, iterations, residual)
    values = h.reshape(op.grid.n_z, op.grid.n_theta)
    return EigenPair(op.lam, eigenvalue, ScalarField(op.profile, op.grid, values), residual, iterations)


def stationary_measure(pair_plus: EigenPair, pair_minus: EigenPair, profile: RevolutionProfile) -> StationaryMeasure:
    """Mass proportional to h_(+lam) h_(-lam) times the cell area, normalized to 1."""
    if pair_plus.eigenfunction.grid != pair_minus.eigenfunction.grid:
        raise ValueError('eigenpairs come from different grids')
    gap = abs(pair_plus.eigenvalue - pair_minus.eigenvalue)
    if gap > MISMATCH_TOLERANCE:
        raise EigenvalueMismatch(f'|Lambda+ - Lambda-| = {gap:.3e} exceeds {MISMATCH_TOLERANCE}')
    grid = pair_plus.eigenfunction.grid
    mass = pair_plus.eigenfunction.values * pair_minus.eigenfunction.values * grid.cell_weights(profile)
    mass = mass / math.fsum(mass.ravel())
    return StationaryMeasure(ScalarField(profile, grid, mass), lam=abs(pair_plus.lam))


def solve_measure(
    profile: RevolutionProfile, grid: Grid, lam: float, c: float
) -> tuple[StationaryMeasure, EigenPair, EigenPair]:
    """Eigenpairs at +lam and -lam and the resulting stationary measure."""
    plus = principal_eigenpair(assemble_twisted_laplacian(profile, grid, lam, c))
    minus = principal_eigenpair(assemble_twisted_laplacian(profile, grid, -lam, c))
    return stationary_measure(plus, minus, profile), plus, minus


def band_mask(grid: Grid, profile: RevolutionProfile, z_lo: float, z_hi: float, symmetric: bool = True) -> np.ndarray:
    z = grid.z(profile)
    rows = (z >= z_lo) & (z <= z_hi)
    if symmetric:
        rows |= (z >= -z_hi) & (z <= -z_lo)
    return np.repeat(rows[:, None], grid.n_theta, axis=1)


def measure_of_set(mu: StationaryMeasure, z_lo: float, z_hi: float, symmetric: bool = True) -> float:
    """Mass of the band z_lo <= z <= z_hi, plus its mirror image when symmetric."""
    profile = mu.density.profile
    if not 0.0 <= z_lo < z_hi <= profile.z_max:
        raise ValueError(f'band must satisfy 0 <= z_lo < z_hi <= z_max, got [{z_lo!r}, {z_hi!r}]')
    mask = band_mask(mu.density.grid, profile, z_lo, z_hi, symmetric)
    return min(1.0, math.fsum(mu.density.values[mask]))


def doob_generator(op: TwistedOperator, pair: EigenPair) -> sparse.csr_matrix:
    """h^-1 (L - Lambda) h; a Markov generator whose rows sum to zero."""
    h = pair.eigenfunction.values.ravel()
    n = h.size
    conj = sparse.diags(1.0 / h) @ (op.matrix - pair.eigenvalue * sparse.identity(n)) @ sparse.diags(h)
    return conj.tocsr()


def half_width_cells(mu: StationaryMeasure) -> int:
    """Rows on which the theta-averaged density is at least half its peak."""
    rows = mu.density.row_means()
    return int(np.count_nonzero(rows >= 0.5 * rows.max()))


def reduced_operator(profile: RevolutionProfile, n_z: int, lam: float, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized theta-averaged 1D operator as (diagonal, off-diagonal) of a tridiagonal matrix.

    On theta-independent functions the drift and the ring terms vanish, leaving
    the z stencil plus lam^2 c^2 / r^2; scaling by sqrt(volume) makes it symmetric.
    """
    grid = Grid(4, n_z)
    lower, diag, upper, volume = _z_part(profile, grid)
    r = derivatives(profile, grid.z(profile))[0]
    main = diag + (lam * c / r) ** 2
    off = upper[:-1] * np.sqrt(volume[:-1] / volume[1:])
    return main, off


def reduced_eigenvalue(profile: RevolutionProfile, n_z: int, lam: float, c: float) -> float:
    main, off = reduced_operator(profile, n_z, lam, c)
    top = main.size - 1
    values = linalg.eigh_tridiagonal(main, off, select='i', select_range=(top, top), eigvals_only=True)
    return float(values[0])
