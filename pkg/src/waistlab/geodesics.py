"""Geodesics on the revolution surface: Clairaut invariant, RK4 integration, shooting distance.

The state is (z, theta_lift, psi), where psi is the angle between the velocity
and the parallel circle. Along a unit-speed geodesic

    dz/ds     = sin(psi) / sqrt(1 + r'^2)
    dtheta/ds = cos(psi) / r
    dpsi/ds   = r' cos(psi) / (r sqrt(1 + r'^2))

The last equation is the derivative of r cos(psi) = c, so psi is evolved
through the Clairaut relation. It is regular at turning points (sin psi = 0).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from waistlab.errors import DomainExit, NoConvergence, StepTooLarge
from waistlab.surface import RevolutionProfile, SurfacePoint, derivatives, radius

log = logging.getLogger(__name__)

SCAN_POINTS = 64
ANGLE_TOLERANCE = 1e-12
SHOOTING_STEP = 2.5e-3  # arc length per RK4 step when shooting
MIN_SHOOTING_STEPS = 200
MAX_REFINEMENTS = 40


@dataclass(frozen=True, slots=True)
class GeodesicState:
    """A unit-speed point-with-direction."""

    point: SurfacePoint
    psi: float

    def reversed(self) -> GeodesicState:
        psi = self.psi + math.pi
        if psi > math.pi:
            psi -= 2.0 * math.pi
        return GeodesicState(self.point, psi)


@dataclass(slots=True)
class GeodesicPath:
    s: np.ndarray
    z: np.ndarray
    theta_lift: np.ndarray
    psi: np.ndarray
    clairaut_drift: np.ndarray
    clipped: bool = False

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.clairaut_drift)))

    @property
    def final_state(self) -> GeodesicState:
        return GeodesicState(SurfacePoint(float(self.z[-1]), float(self.theta_lift[-1])), float(self.psi[-1]))

    def rows(self) -> Iterator[tuple[float, float, float, float, float]]:
        for row in zip(self.s, self.z, self.theta_lift, self.psi, self.clairaut_drift):
            yield tuple(float(v) for v in row)


@dataclass(slots=True)
class Connection:
    """The geodesic joining two points, with unit tangents in the orthonormal (e_theta, e_z) frame."""

    length: float
    start_direction: tuple[float, float]
    end_direction: tuple[float, float]
    theta: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)


def clairaut_constant(profile: RevolutionProfile, state: GeodesicState) -> float:
    return float(radius(profile, state.point.z) * math.cos(state.psi))


def asymptote_angle(profile: RevolutionProfile, z: float) -> float:
    """Angle with the parallel of the geodesic through height z that is asymptotic to the waist."""
    return float(math.acos(min(1.0, profile.a / float(radius(profile, z)))))


def _flow(profile: RevolutionProfile, x: np.ndarray) -> np.ndarray:
    z, _, psi = x
    r, dr, _ = derivatives(profile, z, check=False)
    root = math.sqrt(1.0 + dr * dr)
    return np.array([math.sin(psi) / root, math.cos(psi) / r, dr * math.cos(psi) / (r * root)])


def _rk4_step(x: np.ndarray, dt: float, flow) -> np.ndarray:
    k1 = dt * flow(x)
    k2 = dt * flow(x + k1 / 2)
    k3 = dt * flow(x + k2 / 2)
    k4 = dt * flow(x + k3)
    return x + (k1 + 2 * k2 + 2 * k3 + k4) / 6


def integrate_geodesic(
    profile: RevolutionProfile,
    state: GeodesicState,
    horizon: float,
    step: float,
    clip: bool = False,
) -> GeodesicPath:
    """Integrate the unit-speed geodesic from *state* for arc length *horizon*.

    The step is adjusted down so that horizon is a whole number of steps.
    Reaching |z| = z_max raises DomainExit carrying the truncated path, or with
    clip=True returns that path flagged as clipped.
    """
    if not step > 0 or not horizon > 0:
        raise ValueError(f'step and horizon must be positive, got step={step!r}, horizon={horizon!r}')

    n = max(1, round(horizon / step))
    dt = horizon / n
    c0 = clairaut_constant(profile, state)

    def flow(x: np.ndarray) -> np.ndarray:
        return _flow(profile, x)

    out = np.empty((n + 1, 3))
    out[0] = (state.point.z, state.point.theta_lift, state.psi)
    count = n + 1
    clipped = False
    for i in range(n):
        nxt = _rk4_step(out[i], dt, flow)
        if abs(nxt[0]) >= profile.z_max:
            count = i + 1
            clipped = True
            break
        out[i + 1] = nxt

    out = out[:count]
    r = derivatives(profile, out[:, 0])[0]
    drift = r * np.cos(out[:, 2]) - c0
    path = GeodesicPath(
        s=dt * np.arange(count),
        z=out[:, 0].copy(),
        theta_lift=out[:, 1].copy(),
        psi=out[:, 2].copy(),
        clairaut_drift=drift,
        clipped=clipped,
    )

    if path.max_drift > 1e-6 * horizon:
        raise StepTooLarge(f'Clairaut drift {path.max_drift:.3e} exceeds 1e-6 * horizon at step {dt!r}')
    if clipped:
        if not clip:
            raise DomainExit(f'geodesic reached |z| = z_max after s = {path.total_length:.6g}', path=path)
        log.warning('Geodesic clipped at |z| = z_max after s = %.6g', path.total_length)
    return path


def _shoot(
    profile: RevolutionProfile, z0: float, dtheta: float, psi: np.ndarray, n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate a fan of geodesics over theta in [0, dtheta], dtheta > 0.

    With theta as the parameter and |psi| < pi/2 the system is
    dz/dtheta = r tan(psi) / sqrt(1 + r'^2), dpsi/dtheta = r' / sqrt(1 + r'^2), ds/dtheta = r / cos(psi).
    Rays that leave the annulus are frozen and reported with z = +-inf, the sign
    taken from the last direction of travel (the sign of psi).
    """
    h = dtheta / n
    z = np.full_like(psi, z0)
    p = psi.copy()
    s = np.zeros_like(psi)
    alive = np.ones(psi.shape, dtype=bool)

    def flow(zz: np.ndarray, pp: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        r, dr, _ = derivatives(profile, zz, check=False)
        root = np.sqrt(1.0 + dr * dr)
        cos = np.cos(pp)
        return r * np.sin(pp) / (cos * root), dr / root, r / cos

    with np.errstate(all='ignore'):
        for _ in range(n):
            a1, b1, c1 = flow(z, p)
            a2, b2, c2 = flow(z + h * a1 / 2, p + h * b1 / 2)
            a3, b3, c3 = flow(z + h * a2 / 2, p + h * b2 / 2)
            a4, b4, c4 = flow(z + h * a3, p + h * b3)
            z_new = z + h * (a1 + 2 * a2 + 2 * a3 + a4) / 6
            p_new = p + h * (b1 + 2 * b2 + 2 * b3 + b4) / 6
            s_new = s + h * (c1 + 2 * c2 + 2 * c3 + c4) / 6
            escaping = alive & ~(np.abs(z_new) < profile.z_max) | alive & ~(np.abs(p_new) < math.pi / 2)
            alive &= ~escaping
            z = np.where(alive, z_new, np.where(escaping, np.copysign(np.inf, p), z))
            p = np.where(alive, p_new, p)
            s = np.where(alive, s_new, s)
    return z, p, s


def _bracket(residual: np.ndarray) -> int | None:
    """Index i with a sign change between residual[i] and residual[i + 1].

    A change between two finite residuals is a genuine root. A change involving
    an escaped ray (+-inf) only says the root, if any, lies inside; it is kept as
    a fallback so the interval can be subdivided further.
    """
    valid = ~np.isnan(residual)
    change = np.sign(residual[:-1]) != np.sign(residual[1:])
    change &= valid[:-1] & valid[1:]
    finite = np.isfinite(residual)
    both = np.nonzero(change & finite[:-1] & finite[1:])[0]
    if both.size:
        return int(both[0])
    partial = np.nonzero(change & (finite[:-1] | finite[1:]))[0]
    if partial.size:
        return int(partial[0])
    escapes = np.nonzero(change)[0]
    return int(escapes[0]) if escapes.size else None


def _meridian_arc(profile: RevolutionProfile, z1: float, z2: float) -> float:
    def integrand(t: float) -> float:
        _, dr, _ = derivatives(profile, t)
        return math.sqrt(1.0 + dr * dr)

    value, _ = integrate.quad(integrand, min(z1, z2), max(z1, z2), epsabs=1e-13, epsrel=1e-13)
    return value


def connect(
    profile: RevolutionProfile,
    p: SurfacePoint,
    q: SurfacePoint,
    samples: int = 0,
    step: float = SHOOTING_STEP,
) -> Connection:
    """Solve the two-point problem from p to q on the universal cover by shooting over psi.

    Meridian arcs and arcs of the waist are returned directly.

    The initial angle is scanned on a 64-point grid of (-pi/2, pi/2), then the
    bracketing interval is subdivided until it is narrower than 1e-12.
    Passing samples > 1 also returns that many points along the connecting geodesic.
    """
    dtheta = q.theta_lift - p.theta_lift
    if dtheta == 0.0:
        up = 1.0 if q.z >= p.z else -1.0
        zs = np.linspace(p.z, q.z, max(samples, 2))
        return Connection(
            length=_meridian_arc(profile, p.z, q.z) if q.z != p.z else 0.0,
            start_direction=(0.0, up),
            end_direction=(0.0, up),
            theta=np.full(zs.shape, p.theta_lift),
            z=zs,
        )

    sign = 1.0 if dtheta > 0 else -1.0
    span = abs(dtheta)
    if p.z == 0.0 and q.z == 0.0:
        thetas = np.linspace(p.theta_lift, q.theta_lift, max(samples, 2))
        return Connection(
            length=profile.a * span,
            start_direction=(sign, 0.0),
            end_direction=(sign, 0.0),
            theta=thetas,
            z=np.zeros_like(thetas),
        )

    r_top = float(radius(profile, max(abs(p.z), abs(q.z))))
    n = max(MIN_SHOOTING_STEPS, math.ceil(span * r_top / step))

    half = math.pi / 2
    lo, hi = -half, half
    psi = lo + (np.arange(SCAN_POINTS) + 0.5) * (hi - lo) / SCAN_POINTS
    for refinement in range(MAX_REFINEMENTS):
        z_end, _, _ = _shoot(profile, p.z, span, psi, n)
        residual = z_end - q.z
        exact = np.nonzero(residual == 0.0)[0]
        if exact.size:
            lo = hi = float(psi[exact[0]])
            break
        index = _bracket(residual)
        if index is None:
            raise NoConvergence(
                f'shooting residual not bracketed between {p!r} and {q!r}; z_max={profile.z_max!r} may be too small'
            )
        lo, hi = float(psi[index]), float(psi[index + 1])
        log.debug('Shooting refinement %d: bracket width %.3e', refinement, hi - lo)
        if hi - lo < ANGLE_TOLERANCE:
            if not (np.isfinite(residual[index]) and np.isfinite(residual[index + 1])):
                raise NoConvergence(
                    f'shooting from {p!r} to {q!r} only separates rays that leave the annulus; no geodesic found'
                )
            break
        psi = np.linspace(lo, hi, 33)
    else:
        raise NoConvergence(f'shooting bracket did not shrink below {ANGLE_TOLERANCE!r}')

    psi0 = 0.5 * (lo + hi)
    z_hit, psi_end, length = _shoot(profile, p.z, span, np.array([psi0]), n)
    if not np.isfinite(z_hit[0]):
        raise NoConvergence(f'the shot from {p!r} toward {q!r} leaves the annulus')

    if samples > 1:
        theta_rel, z_path = _sample_connection(profile, p.z, span, psi0, n, samples)
    else:
        theta_rel, z_path = np.array([0.0, span]), np.array([p.z, q.z])

    return Connection(
        length=float(length[0]),
        start_direction=(sign * math.cos(psi0), math.sin(psi0)),
        end_direction=(sign * math.cos(float(psi_end[0])), math.sin(float(psi_end[0]))),
        theta=p.theta_lift + sign * theta_rel,
        z=z_path,
    )


def _sample_connection(
    profile: RevolutionProfile, z0: float, span: float, psi0: float, n: int, samples: int
) -> tuple[np.ndarray, np.ndarray]:
    """Points along a shot at equally spaced theta."""
    marks = np.linspace(0.0, span, samples)
    zs = np.empty(samples)
    zs[0] = z0
    z, p = np.array([z0]), np.array([psi0])
    for i in range(1, samples):
        seg = marks[i] - marks[i - 1]
        m = max(1, math.ceil(n * seg / span))
        z_next, p_next, _ = _shoot(profile, float(z[0]), seg, p, m)
        z, p = z_next, p_next
        zs[i] = float(z[0])
    return marks, zs


def distance(profile: RevolutionProfile, p: SurfacePoint, q: SurfacePoint, step: float = SHOOTING_STEP) -> float:
    """Geodesic distance on the universal cover (theta lifts are taken literally)."""
    if p == q:
        return 0.0
    return connect(profile, p, q, step=step).length
