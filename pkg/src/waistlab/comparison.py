"""Angle comparison between curvature-ordered profiles, and Gauss-Bonnet checks on geodesic polygons.

Trial triangles have vertices at a waist point c(0), a point sigma(s) on its
meridian and a second waist point c(t). Two profiles with a shared waist radius
and flatness order have the same waist and meridians as geodesics, so the same
(theta, z) vertices make a triangle on each of them.

Total curvature is evaluated on the boundary. K depends on z alone and
K r sqrt(1 + r'^2) = -S'(z) with S = r' / sqrt(1 + r'^2), so by Green's theorem

    integral of K dA over the region = loop integral of S(z) dtheta

around the positively oriented boundary in the (theta, z) chart. Meridian sides
and the waist contribute nothing. The loop integral is a trapezoid sum over the
sampled sides, so the residual is second order in the side spacing.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from waistlab.errors import ComparisonViolation, MeshFailure
from waistlab.geodesics import Connection, connect
from waistlab.surface import RevolutionProfile, SurfacePoint, derivatives, sandwich_height

log = logging.getLogger(__name__)

DEFAULT_MESH = 257  # samples per side
ANGLE_MARGIN = 1e-6
CONTAINMENT_SAMPLES = 50
CONTAINMENT_TOLERANCE = 1e-8
DEGENERATE_ANGLE = 1e-9
MIN_HEIGHT = 0.05
T_SCALE = 8.0  # trial waist offsets t are drawn from [-T_SCALE * z_max, -0.1 * z_max]

_LCG_MULTIPLIER = 6364136223846793005
_LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1


class Lcg:
    """64-bit linear congruential generator; uniforms come from the top 53 bits of each state."""

    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (_LCG_MULTIPLIER * self.state + _LCG_INCREMENT) & _MASK64
        return self.state

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u


@dataclass(slots=True)
class GeodesicPolygon:
    profile: RevolutionProfile
    vertices: tuple[SurfacePoint, ...]
    sides: list[Connection] = field(repr=False)
    angles: list[float]
    mesh: int

    @property
    def angle_sum(self) -> float:
        return math.fsum(self.angles)

    @property
    def flat_angle_sum(self) -> float:
        """(n - 2) pi, the angle sum of a flat polygon with n vertices."""
        return (len(self.vertices) - 2) * math.pi

    def boundary(self) -> np.ndarray:
        """Closed boundary as (theta, z) rows, each shared vertex listed once."""
        parts = [np.column_stack([side.theta[:-1], side.z[:-1]]) for side in self.sides]
        return np.vstack(parts)


@dataclass(slots=True)
class GeodesicTriangle(GeodesicPolygon):
    def __post_init__(self) -> None:
        if len(self.vertices) != 3:
            raise ValueError(f'a triangle needs 3 vertices, got {len(self.vertices)}')


@dataclass(slots=True)
class GeodesicQuadrilateral(GeodesicPolygon):
    def __post_init__(self) -> None:
        if len(self.vertices) != 4:
            raise ValueError(f'a quadrilateral needs 4 vertices, got {len(self.vertices)}')


@dataclass(slots=True)
class TrialRecord:
    trial: int
    s: float
    t: float
    alpha1: float
    alpha2: float
    containment_gap: float  # smallest (z1 - z2) along the compared sides
    gb_residual1: float
    gb_residual2: float

    @property
    def margin(self) -> float:
        return self.alpha1 - self.alpha2

    @property
    def passed(self) -> bool:
        return self.margin >= -ANGLE_MARGIN and self.containment_gap >= -CONTAINMENT_TOLERANCE


@dataclass(slots=True)
class MeshLevel:
    mesh: int
    residual: float
    ratio: float | None  # residual at the previous level over this one


def _inner_angle(incoming: tuple[float, float], outgoing: tuple[float, float]) -> float:
    """Angle at a vertex between the reversed incoming tangent and the outgoing tangent."""
    dot = -(incoming[0] * outgoing[0] + incoming[1] * outgoing[1])
    return math.acos(max(-1.0, min(1.0, dot)))


def _polygon(profile: RevolutionProfile, vertices: Sequence[SurfacePoint], mesh: int) -> tuple[list, list[float]]:
    if mesh < 3:
        raise ValueError(f'mesh must have at least 3 samples per side, got {mesh!r}')
    n = len(vertices)
    for i in range(n):
        for j in range(i + 1, n):
            if vertices[i] == vertices[j]:
                raise ValueError(f'vertices must be pairwise distinct, {vertices[i]!r} repeats')

    sides = [connect(profile, vertices[i], vertices[(i + 1) % n], samples=mesh) for i in range(n)]
    angles = [_inner_angle(sides[i - 1].end_direction, sides[i].start_direction) for i in range(n)]
    for vertex, angle in zip(vertices, angles):
        if angle < DEGENERATE_ANGLE or angle > math.pi - DEGENERATE_ANGLE:
            raise ValueError(f'degenerate polygon: angle {angle!r} at {vertex!r} (collinear vertices)')
    return sides, angles


def build_triangle(
    profile: RevolutionProfile, v1: SurfacePoint, v2: SurfacePoint, v3: SurfacePoint, mesh: int = DEFAULT_MESH
) -> GeodesicTriangle:
    """Geodesic triangle with sides solved by shooting; angles from the unit tangents at each vertex."""
    vertices = (v1, v2, v3)
    sides, angles = _polygon(profile, vertices, mesh)
    return GeodesicTriangle(profile, vertices, sides, angles, mesh)


def build_quadrilateral(
    profile: RevolutionProfile, theta0: float, theta1: float, s0: float, s1: float, mesh: int = DEFAULT_MESH
) -> GeodesicQuadrilateral:
    """Box with a waist side from theta0 to theta1, meridian sides of heights s0, s1 and a geodesic top."""
    if theta0 == theta1:
        raise ValueError('box needs distinct meridians')
    if s0 <= 0 or s1 <= 0:
        raise ValueError(f'box heights must be positive, got {s0!r}, {s1!r}')
    lo, hi = sorted((theta0, theta1))
    s_lo, s_hi = (s0, s1) if theta0 <= theta1 else (s1, s0)
    vertices = (SurfacePoint(0.0, lo), SurfacePoint(0.0, hi), SurfacePoint(s_hi, hi), SurfacePoint(s_lo, lo))
    sides, angles = _polygon(profile, vertices, mesh)
    return GeodesicQuadrilateral(profile, vertices, sides, angles, mesh)


def _orientation(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _check_simple(points: np.ndarray) -> None:
    """Raise MeshFailure if two non-adjacent boundary segments cross."""
    p = points
    q = np.roll(points, -1, axis=0)
    n = len(points)
    pi, qi = p[:, None, :], q[:, None, :]
    pj, qj = p[None, :, :], q[None, :, :]
    d1 = _orientation(pi, qi, pj)
    d2 = _orientation(pi, qi, qj)
    d3 = _orientation(pj, qj, pi)
    d4 = _orientation(pj, qj, qi)
    crossing = (d1 * d2 < 0) & (d3 * d4 < 0)

    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    crossing &= (gap > 1) & (gap < n - 1)
    if np.any(crossing):
        i, j = np.argwhere(crossing)[0]
        raise MeshFailure(f'boundary segments {int(i)} and {int(j)} intersect')


def total_curvature(polygon: GeodesicPolygon) -> float:
    """Integral of K dA over the enclosed region, as a loop integral of S(z) dtheta."""
    points = polygon.boundary()
    _check_simple(points)
    theta, z = points[:, 0], points[:, 1]
    signed_area = 0.5 * float(np.sum(theta * np.roll(z, -1) - np.roll(theta, -1) * z))
    if signed_area == 0.0:
        raise MeshFailure('enclosed region has zero area')

    loop = 0.0
    for side in polygon.sides:
        _, dr, _ = derivatives(polygon.profile, side.z)
        s = dr / np.sqrt(1.0 + dr * dr)
        loop += float(integrate.trapezoid(s, side.theta))
    return loop if signed_area > 0 else -loop


def gauss_bonnet_residual(profile: RevolutionProfile, tri: GeodesicTriangle) -> float:
    """|sum of angles - pi - integral of K dA|."""
    if tri.profile != profile:
        raise ValueError('triangle was built on a different profile')
    return abs(tri.angle_sum - tri.flat_angle_sum - total_curvature(tri))


def gauss_bonnet_quadrilateral_residual(profile: RevolutionProfile, box: GeodesicQuadrilateral) -> float:
    """|sum of angles - 2 pi - integral of K dA|."""
    if box.profile != profile:
        raise ValueError('quadrilateral was built on a different profile')
    return abs(box.angle_sum - box.flat_angle_sum - total_curvature(box))


def mesh_refinement(
    profile: RevolutionProfile, vertices: Sequence[SurfacePoint], meshes: Sequence[int] = (65, 129, 257)
) -> list[MeshLevel]:
    """Gauss-Bonnet residual of one triangle under successive doubling of the side sampling."""
    levels: list[MeshLevel] = []
    for mesh in meshes:
        tri = build_triangle(profile, *vertices, mesh=mesh)
        residual = gauss_bonnet_residual(profile, tri)
        prev = levels[-1].residual if levels else None
        ratio = prev / residual if prev is not None and residual > 0 else None
        levels.append(MeshLevel(mesh, residual, ratio))
        log.debug('mesh %d: Gauss-Bonnet residual %.3e', mesh, residual)
    return levels


def cat_vertices(profile: RevolutionProfile, s: float, t: float) -> tuple[SurfacePoint, SurfacePoint, SurfacePoint]:
    """c(0), sigma(s), c(t) with t measured as unit-speed length along the waist."""
    return SurfacePoint(0.0, 0.0), SurfacePoint(s, 0.0), SurfacePoint(0.0, t / profile.a)


def comparison_angle(profile: RevolutionProfile, s: float, t: float, mesh: int = CONTAINMENT_SAMPLES) -> float:
    """Inner angle at sigma(s) between the meridian down to c(0) and the geodesic to c(t)."""
    triangle = build_triangle(profile, *cat_vertices(profile, s, t), mesh=mesh)
    return triangle.angles[1]


def _check_pair(p1: RevolutionProfile, p2: RevolutionProfile) -> float:
    if p1.a != p2.a or p1.k != p2.k:
        raise ValueError('compared profiles must share the waist radius a and flatness order k')
    if p1.b > p2.b:
        raise ValueError(f'profile2 must be the more curved one (b2 >= b1), got b1={p1.b!r}, b2={p2.b!r}')
    if p1.b == p2.b:
        return min(p1.z_max, p2.z_max)
    return sandwich_height(p1, p2)


def _run_trial(
    p1: RevolutionProfile, p2: RevolutionProfile, trial: int, s: float, t: float, mesh: int
) -> TrialRecord:
    vertices = cat_vertices(p1, s, t)
    tri1 = build_triangle(p1, *vertices, mesh=mesh)
    tri2 = build_triangle(p2, *vertices, mesh=mesh)

    # sides[1] runs from sigma(s) to c(t); both use the same theta marks
    gap = float(np.min(tri1.sides[1].z - tri2.sides[1].z))
    low = float(np.min(tri2.sides[1].z))
    gap = min(gap, low)

    record = TrialRecord(
        trial=trial,
        s=s,
        t=t,
        alpha1=tri1.angles[1],
        alpha2=tri2.angles[1],
        containment_gap=gap,
        gb_residual1=gauss_bonnet_residual(p1, tri1),
        gb_residual2=gauss_bonnet_residual(p2, tri2),
    )
    log.debug('trial %d (s=%.4f, t=%.4f): alpha1=%.9f alpha2=%.9f', trial, s, t, record.alpha1, record.alpha2)
    return record


def angle_comparison_trial(
    profile1: RevolutionProfile,
    profile2: RevolutionProfile,
    trials: int,
    seed: int,
    mesh: int = DEFAULT_MESH,
    t_scale: float = T_SCALE,
    jobs: int = 1,
    strict: bool = True,
) -> list[TrialRecord]:
    """Seeded trials of the angle comparison on triangles c(0), sigma(s), c(t).

    Heights s are drawn below the height where the curvature ordering
    K2 <= K1 <= 0 stops holding. With strict=True the first failing trial
    raises ComparisonViolation; otherwise failures are only marked in the table.
    """
    if trials < 1:
        raise ValueError(f'trials must be positive, got {trials!r}')
    ceiling = 0.9 * _check_pair(profile1, profile2)
    if ceiling <= MIN_HEIGHT:
        raise ValueError(f'curvature ordering holds only below z={ceiling / 0.9:.4f}; no room for trials')

    rng = Lcg(seed)
    z_max = min(profile1.z_max, profile2.z_max)
    draws = []
    for trial in range(trials):
        s = rng.uniform(MIN_HEIGHT, ceiling)
        t = rng.uniform(-t_scale * z_max, -0.1 * z_max)
        draws.append((trial, s, t))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        records = list(pool.map(lambda d: _run_trial(profile1, profile2, d[0], d[1], d[2], mesh), draws))

    failed = [r for r in records if not r.passed]
    log.info('angle comparison: %d of %d trials passed', len(records) - len(failed), len(records))
    if failed and strict:
        bad = failed[0]
        raise ComparisonViolation(
            f'trial {bad.trial}: alpha2 - alpha1 = {-bad.margin:.3e}, containment gap {bad.containment_gap:.3e}',
            triple=cat_vertices(profile1, bad.s, bad.t),
        )
    return records
