"""The (theta, z) grid on the annulus and fields living on it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from waistlab.surface import RevolutionProfile, area_element


@dataclass(frozen=True, slots=True)
class Grid:
    """n_theta periodic columns by n_z rows spanning [-z_max, z_max] (boundary rows included)."""

    n_theta: int
    n_z: int

    def __post_init__(self) -> None:
        if self.n_theta < 4 or self.n_z < 3:
            raise ValueError(f'grid too small: {self.n_theta!r} x {self.n_z!r}')

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def theta(self) -> np.ndarray:
        return self.dtheta * np.arange(self.n_theta)

    @property
    def waist_row(self) -> int:
        if self.n_z % 2 == 0:
            raise ValueError(f'n_z must be odd so that z = 0 is a grid row, got {self.n_z!r}')
        return self.n_z // 2

    def dz(self, profile: RevolutionProfile) -> float:
        return 2.0 * profile.z_max / (self.n_z - 1)

    def z(self, profile: RevolutionProfile) -> np.ndarray:
        return np.linspace(-profile.z_max, profile.z_max, self.n_z)

    def cell_weights(self, profile: RevolutionProfile) -> np.ndarray:
        """Area of the cell around each node, shape (n_z, n_theta); boundary rows get half cells."""
        row = area_element(profile, self.z(profile)) * self.dz(profile) * self.dtheta
        row[0] *= 0.5
        row[-1] *= 0.5
        return np.repeat(row[:, None], self.n_theta, axis=1)

    def coarsened(self) -> Grid:
        """Every other node in both directions, so coarse nodes are fine nodes [::2, ::2]."""
        if self.n_theta % 2 or (self.n_z - 1) % 4:
            raise ValueError(
                f'cannot halve {self.n_theta!r} x {self.n_z!r}: need even n_theta and n_z = 4m + 1 '
                'so the coarse grid keeps a waist row'
            )
        return Grid(self.n_theta // 2, (self.n_z + 1) // 2)

    def reflect_rows(self, rows: np.ndarray) -> np.ndarray:
        """Map ghost row indices back inside by mirroring about the boundary rows."""
        last = self.n_z - 1
        rows = np.where(rows < 0, -rows, rows)
        return np.where(rows > last, 2 * last - rows, rows)


@dataclass(slots=True)
class ScalarField:
    """Values at grid nodes, indexed [z_index, theta_index]."""

    profile: RevolutionProfile
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        expected = (self.grid.n_z, self.grid.n_theta)
        if self.values.shape != expected:
            raise ValueError(f'field shape {self.values.shape!r} does not match grid {expected!r}')
        if not np.all(np.isfinite(self.values)):
            raise ValueError('field values must be finite')

    @classmethod
    def constant(cls, profile: RevolutionProfile, grid: Grid, value: float = 0.0) -> ScalarField:
        return cls(profile, grid, np.full((grid.n_z, grid.n_theta), float(value)))

    def with_values(self, values: np.ndarray) -> ScalarField:
        return ScalarField(self.profile, self.grid, values)

    @property
    def z(self) -> np.ndarray:
        return self.grid.z(self.profile)

    def row_means(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def theta_oscillation(self) -> float:
        """Largest spread across theta within any single row."""
        return float(np.max(self.values.max(axis=1) - self.values.min(axis=1)))

    def at_height(self, z: float) -> float:
        """Row-mean value linearly interpolated at height z."""
        return float(np.interp(z, self.z, self.row_means()))
