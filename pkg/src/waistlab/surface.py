"""Model surfaces of revolution: r(z) = a + b|z|^(2+k) with a flat waist at z = 0.

All derivatives of the profile are closed form. Every function accepts a float
or a numpy array of heights and evaluates elementwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

log = logging.getLogger(__name__)

type Height = float | np.ndarray


@dataclass(frozen=True, slots=True)
class RevolutionProfile:
    a: float  # waist radius
    b: float  # profile coefficient
    k: float  # flatness order
    z_max: float  # half-height of the annulus
    allow_odd_k: bool = False

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError(f'a must be positive, got {self.a!r}')
        if not self.b > 0:
            raise ValueError(f'b must be positive, got {self.b!r}')
        if not self.z_max > 0:
            raise ValueError(f'z_max must be positive, got {self.z_max!r}')
        if self.k < 0:
            raise ValueError(f'k must be nonnegative, got {self.k!r}')
        even = float(self.k).is_integer() and int(self.k) % 2 == 0
        if not even:
            if not self.allow_odd_k:
                raise ValueError(f'k must be even, got {self.k!r}')
            log.warning('Profile uses non-even k=%r; the surface is only C^%d at the waist', self.k, int(self.k) + 1)

    @property
    def power(self) -> float:
        """Exponent of the profile, 2 + k."""
        return 2.0 + self.k

    @property
    def waist_length(self) -> float:
        return 2.0 * math.pi * self.a

    def with_b(self, b: float) -> RevolutionProfile:
        return RevolutionProfile(self.a, b, self.k, self.z_max, self.allow_odd_k)


@dataclass(frozen=True, slots=True)
class SurfacePoint:
    """A point in the (z, theta) chart; theta_lift is the unrolled angle on the universal cover."""

    z: float
    theta_lift: float

    @property
    def theta(self) -> float:
        return self.theta_lift % (2.0 * math.pi)


def _check_domain(profile: RevolutionProfile, z: Height) -> None:
    if np.any(np.abs(z) > profile.z_max * (1.0 + 1e-12)):
        raise ValueError(f'z outside [-z_max, z_max] with z_max={profile.z_max!r}: {z!r}')


def derivatives(profile: RevolutionProfile, z: Height, *, check: bool = True) -> tuple[Height, Height, Height]:
    """Return (r, r', r'') at height z. Integrators pass check=False for trial stages past z_max."""
    if check:
        _check_domain(profile, z)
    p = profile.power
    az = np.abs(z)
    r = profile.a + profile.b * np.power(az, p)
    dr = profile.b * p * np.power(az, p - 1.0) * np.sign(z)
    d2r = profile.b * p * (p - 1.0) * np.power(az, p - 2.0)
    return r, dr, d2r


def radius(profile: RevolutionProfile, z: Height) -> Height:
    return derivatives(profile, z)[0]


def metric_coefficients(profile: RevolutionProfile, z: Height) -> tuple[Height, Height]:
    """First fundamental form ds^2 = E dz^2 + G dtheta^2, returned as (E, G)."""
    r, dr, _ = derivatives(profile, z)
    return 1.0 + dr * dr, r * r


def gaussian_curvature(profile: RevolutionProfile, z: Height) -> Height:
    r, dr, d2r = derivatives(profile, z)
    return -d2r / (r * (1.0 + dr * dr) ** 2)


def area_element(profile: RevolutionProfile, z: Height) -> Height:
    r, dr, _ = derivatives(profile, z)
    return r * np.sqrt(1.0 + dr * dr)


def meridian_length(profile: RevolutionProfile, z: float) -> float:
    """Arc length along the meridian from the waist to height z, i.e. the distance d(x, waist)."""
    _check_domain(profile, z)
    z = abs(z)
    if z == 0.0:
        return 0.0

    def integrand(t: float) -> float:
        _, dr, _ = derivatives(profile, t)
        return math.sqrt(1.0 + dr * dr)

    value, _ = integrate.quad(integrand, 0.0, z, epsabs=1e-12, epsrel=1e-12)
    return value


def integrated_curvature(profile: RevolutionProfile, z_lo: float, z_hi: float, dtheta: float) -> float:
    """Total curvature over the coordinate rectangle [z_lo, z_hi] x [0, dtheta].

    Uses the antiderivative of K * r * sqrt(1 + r'^2), which is -r' / sqrt(1 + r'^2).
    """
    _, d_lo, _ = derivatives(profile, z_lo)
    _, d_hi, _ = derivatives(profile, z_hi)
    return dtheta * (d_lo / math.sqrt(1.0 + d_lo * d_lo) - d_hi / math.sqrt(1.0 + d_hi * d_hi))


def curvature_sandwich(lower: RevolutionProfile, upper: RevolutionProfile, z: Height) -> bool:
    """True when K_upper(z) <= K_lower(z) <= 0 for profiles with b_lower < b_upper."""
    if lower.a != upper.a or lower.k != upper.k:
        raise ValueError('curvature ordering needs a shared waist radius and flatness order')
    k_lo = gaussian_curvature(lower, z)
    k_hi = gaussian_curvature(upper, z)
    return bool(np.all(k_hi <= k_lo + 1e-15) and np.all(k_lo <= 1e-15))


def polynomial_integrand(profile: RevolutionProfile, t: Height) -> Height:
    """sin(psi) of the waist asymptote written as t^(1+k/2) sqrt(b(2a + b t^(2+k))) / (a + b t^(2+k))."""
    _check_domain(profile, t)
    at = np.abs(t)
    tp = np.power(at, profile.power)
    return np.power(at, 1.0 + profile.k / 2.0) * np.sqrt(profile.b * (2.0 * profile.a + profile.b * tp)) / (
        profile.a + profile.b * tp
    )


def sandwich_height(lower: RevolutionProfile, upper: RevolutionProfile, samples: int = 4001) -> float:
    """Largest z such that the curvature ordering of curvature_sandwich holds on all of [0, z].

    Away from the waist the steeper profile flattens out again, so the ordering is local.
    """
    z = np.linspace(0.0, min(lower.z_max, upper.z_max), samples)
    k_lo = gaussian_curvature(lower, z)
    k_hi = gaussian_curvature(upper, z)
    bad = np.nonzero(k_hi > k_lo + 1e-15)[0]
    if bad.size == 0:
        return float(z[-1])
    return float(z[bad[0] - 1])
