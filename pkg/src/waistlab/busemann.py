"""Busemann functions of the waist and the Peierls barrier they produce.

Two independent routes to the barrier B(z) = b^+(x) + b^-(x):
 - quadrature of 2 sin(psi) sqrt(1 + r'^2) along the meridian, with psi the
   angle of the waist asymptote through height t
 - the limit d(x, gamma(T)) - T in both directions along the waist, solved by shooting
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from waistlab.errors import DegenerateFit
from waistlab.geodesics import connect
from waistlab.surface import RevolutionProfile, SurfacePoint, derivatives, polynomial_integrand

log = logging.getLogger(__name__)

QUADRATURE_TOLERANCE = 1e-10
MIN_HORIZON = 20.0
LIMIT_STEP = 0.02
MIN_FIT_SAMPLES = 8
MIN_R_SQUARED = 0.99
METHODS = ('quadrature', 'limit', 'weakkam')


@dataclass(slots=True)
class BarrierCurve:
    z: np.ndarray
    value: np.ndarray
    method: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f'Unknown barrier method {self.method!r}')


@dataclass(frozen=True, slots=True)
class PowerLawFit:
    power: float
    coeff: float
    r_squared: float


def barrier_derivative(profile: RevolutionProfile, z: float) -> float:
    """dB/dz = 2 sin(psi(z)) sqrt(1 + r'(z)^2)."""
    _, dr, _ = derivatives(profile, z)
    return float(2.0 * polynomial_integrand(profile, z) * math.sqrt(1.0 + dr * dr)) * (1.0 if z >= 0 else -1.0)


def busemann_sum_quadrature(profile: RevolutionProfile, z: float) -> float:
    """B(z) = 2 * integral_0^|z| sin(psi(t)) sqrt(1 + r'(t)^2) dt.

    sin(psi) is evaluated in its polynomial form, which avoids the cancellation
    in 1 - (a/r)^2 near the waist.
    """
    if abs(z) > profile.z_max:
        raise ValueError(f'z outside [-z_max, z_max]: {z!r}')
    z = abs(z)
    if z == 0.0:
        return 0.0

    def integrand(t: float) -> float:
        return barrier_derivative(profile, t)

    value, err = integrate.quad(integrand, 0.0, z, epsabs=QUADRATURE_TOLERANCE, epsrel=0.0, limit=200)
    log.debug('Busemann quadrature at z=%.6g: %.12g (error estimate %.1e)', z, value, err)
    return value


def busemann_limit(profile: RevolutionProfile, x: SurfacePoint, horizon: float, direction: int = 1) -> float:
    """d(x, gamma(horizon)) - horizon, with gamma the unit-speed waist through the foot of x's meridian.

    direction=+1 follows increasing theta, -1 decreasing theta.
    """
    if horizon < MIN_HORIZON:
        raise ValueError(f'horizon must be at least {MIN_HORIZON!r}, got {horizon!r}')
    if direction not in (1, -1):
        raise ValueError(f'direction must be +1 or -1, got {direction!r}')
    if x.z == 0.0:
        return 0.0
    target = SurfacePoint(0.0, x.theta_lift + direction * horizon / profile.a)
    return connect(profile, x, target, step=LIMIT_STEP).length - horizon


def busemann_sum_limit(profile: RevolutionProfile, z: float, horizon: float) -> float:
    """Forward plus backward Busemann limits at height z; converges to busemann_sum_quadrature."""
    x = SurfacePoint(z, 0.0)
    return busemann_limit(profile, x, horizon, 1) + busemann_limit(profile, x, horizon, -1)


def peierls_barrier_busemann(profile: RevolutionProfile, z: float) -> float:
    """h(x, x) = P(x, x) at height z; independent of theta."""
    return busemann_sum_quadrature(profile, z)


def leading_coefficient(profile: RevolutionProfile) -> tuple[float, float]:
    """(C, power) of the leading law B(z) ~ C z^(2 + k/2)."""
    power = 2.0 + profile.k / 2.0
    return 2.0 * math.sqrt(2.0 * profile.b / profile.a) / power, power


def barrier_curve(profile: RevolutionProfile, zs, method: str = 'quadrature', horizon: float = 50.0) -> BarrierCurve:
    zs = np.asarray(zs, dtype=float)
    if method == 'quadrature':
        values = [busemann_sum_quadrature(profile, z) for z in zs]
    elif method == 'limit':
        values = [busemann_sum_limit(profile, z, horizon) for z in zs]
    else:
        raise ValueError(f'barrier_curve cannot compute method {method!r}')
    return BarrierCurve(z=zs, value=np.array(values), method=method)


def fit_power_law(curve: BarrierCurve, z_lo: float, z_hi: float) -> PowerLawFit:
    """Least squares line through (ln z, ln value) for samples strictly inside (z_lo, z_hi)."""
    z = np.abs(curve.z)
    mask = (z > z_lo) & (z < z_hi)
    if np.count_nonzero(mask) < MIN_FIT_SAMPLES:
        raise ValueError(f'need at least {MIN_FIT_SAMPLES} samples inside ({z_lo!r}, {z_hi!r})')
    values = curve.value[mask]
    if np.any(values <= 0):
        raise ValueError('power-law fit needs strictly positive values')
    return loglog_fit(z[mask], values)


def loglog_fit(x: np.ndarray, y: np.ndarray) -> PowerLawFit:
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    total = np.sum((ly - ly.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual**2) / total) if total > 0 else 1.0
    if r_squared < MIN_R_SQUARED:
        raise DegenerateFit(f'log-log fit has r^2 = {r_squared:.4f} < {MIN_R_SQUARED}')
    return PowerLawFit(power=float(slope), coeff=float(math.exp(intercept)), r_squared=r_squared)
