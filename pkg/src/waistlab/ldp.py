"""Large-deviation rates of the stationary measures as lambda grows.

For each band A the rate is -lim (1/lam) ln mu_lam(A). It is estimated by fitting
ln mu = const + alpha ln lam - rate * lam over the upper half of the sweep, then
compared with the barrier inf_A P and with the power law
d(A, waist)^(2 + k/2).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from waistlab.busemann import PowerLawFit, loglog_fit, peierls_barrier_busemann
from waistlab.diffusion import half_width_cells, measure_of_set, solve_measure
from waistlab.errors import InsufficientDecay, SweepError, ValidationError, WaistLabError
from waistlab.grid import Grid
from waistlab.report import write_dat
from waistlab.surface import RevolutionProfile, meridian_length

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0)
MIN_LAMBDAS = 4
FIT_POINTS = 3
MONOTONE_SLACK = 0.05
MIN_BANDS = 5
MIN_HALF_WIDTH_CELLS = 8
DISTANCE_WINDOW = (0.12, 0.45)


@dataclass(frozen=True, slots=True)
class Band:
    z_lo: float
    z_hi: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.z_lo < self.z_hi:
            raise ValueError(f'band needs 0 <= z_lo < z_hi, got [{self.z_lo!r}, {self.z_hi!r}]')

    @property
    def touches_waist(self) -> bool:
        return self.z_lo == 0.0


@dataclass(slots=True)
class SweepTable:
    lambdas: list[float]
    bands: list[Band]
    measures: np.ndarray  # [lambda index, band index]
    eigenvalues: list[float] = field(default_factory=list)

    def column(self, band: Band) -> np.ndarray:
        return self.measures[:, self.bands.index(band)]


@dataclass(slots=True)
class RateEstimate:
    band: Band
    rate: float
    sequence: list[float]  # -(1/lam) ln mu per lambda


@dataclass(slots=True)
class BandRecord:
    band: Band
    inf_distance: float
    measures: list[float]
    rate: float
    sequence: list[float]
    barrier: float
    relative_error: float
    decaying: bool = True
    monotone: bool = True


@dataclass(slots=True)
class DeviationReport:
    lambdas: list[float]
    records: list[BandRecord]
    waist_rates: list[RateEstimate]
    fit: PowerLawFit
    expected_power: float
    power_tolerance: float
    sandwich_d: float

    @property
    def fitted_records(self) -> list[BandRecord]:
        return [r for r in self.records if r.decaying]

    @property
    def power_ok(self) -> bool:
        return abs(self.fit.power - self.expected_power) <= self.power_tolerance


def _measures_at(profile: RevolutionProfile, grid: Grid, c: float, lam: float, bands: Sequence[Band]):
    try:
        mu, plus, _ = solve_measure(profile, grid, lam, c)
    except WaistLabError as exc:
        raise SweepError(lam, exc) from exc
    values = [measure_of_set(mu, b.z_lo, b.z_hi) for b in bands]
    log.info('lambda=%g: Lambda=%.8g, %d bands measured', lam, plus.eigenvalue, len(bands))
    return values, plus.eigenvalue, mu


def lambda_sweep(
    profile: RevolutionProfile,
    c: float,
    lambdas: Sequence[float],
    bands: Sequence[Band],
    grid: Grid,
    jobs: int = 1,
) -> SweepTable:
    """Stationary-measure mass of each band for each lambda."""
    lambdas = [float(v) for v in lambdas]
    if not lambdas or any(v < 0 for v in lambdas) or lambdas != sorted(lambdas):
        raise ValueError(f'lambdas must be a nonempty ascending list of nonnegative values, got {lambdas!r}')
    for b in bands:
        if b.z_hi > profile.z_max / 2:
            raise ValueError(f'band {b!r} reaches past z_max/2 = {profile.z_max / 2!r}')

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda lam: _measures_at(profile, grid, c, lam, bands), lambdas))

    top_mu = results[-1][2]
    if lambdas[-1] > 0 and half_width_cells(top_mu) < MIN_HALF_WIDTH_CELLS:
        raise ValidationError(
            f'grid too coarse for lambda={lambdas[-1]!r}: ground state spans {half_width_cells(top_mu)} rows, '
            f'need {MIN_HALF_WIDTH_CELLS}'
        )

    return SweepTable(
        lambdas=lambdas,
        bands=list(bands),
        measures=np.array([r[0] for r in results]),
        eigenvalues=[r[1] for r in results],
    )


def rate_from_series(lambdas: Sequence[float], measures: Sequence[float], band: Band) -> RateEstimate:
    """Fit ln mu = const + alpha ln lam - rate * lam over the upper half of the sweep.

    The ln lam term absorbs the polynomial prefactor of the measure. When the fit
    window reaches lam = 0 the prefactor term is left out.
    """
    lam = np.asarray(lambdas, dtype=float)
    mu = np.asarray(measures, dtype=float)
    if lam.size < MIN_LAMBDAS:
        raise ValueError(f'need at least {MIN_LAMBDAS} lambda values, got {lam.size}')
    if np.any(mu <= 0):
        raise ValueError(f'measures must be positive for band {band!r}')

    log_mu = np.log(mu)
    n_fit = max(FIT_POINTS, math.ceil(lam.size / 2))
    x, y = lam[-n_fit:], log_mu[-n_fit:]
    columns = [np.ones_like(x), -x]
    if np.all(x > 0):
        columns.append(np.log(x))
    coeffs, *_ = np.linalg.lstsq(np.column_stack(columns), y, rcond=None)
    rate = float(coeffs[1])
    sequence = [float(-v / x_) if x_ > 0 else math.nan for v, x_ in zip(log_mu, lam)]

    if band.touches_waist:
        return RateEstimate(band, max(0.0, rate), sequence)
    if not rate > 0:
        raise InsufficientDecay(f'fitted rate {rate:.3e} is not positive for band {band!r}')
    return RateEstimate(band, rate, sequence)


def rate_estimate(table: SweepTable, band: Band) -> RateEstimate:
    """Rate of one band from its column of the sweep.

    Bands that meet the waist have rate 0 in the limit; their rate is clipped at 0
    instead of being rejected.
    """
    return rate_from_series(table.lambdas, table.column(band), band)


def monotone_diagnostic(sequence: Sequence[float], slack: float = MONOTONE_SLACK) -> bool:
    """True when -(1/lam) ln mu never grows by more than *slack* from one lambda to the next."""
    values = [v for v in sequence if math.isfinite(v)]
    return all(nxt <= (1.0 + slack) * prev for prev, nxt in zip(values, values[1:]))


def compare_to_theorem1(table: SweepTable, profile: RevolutionProfile) -> DeviationReport:
    """Fit rate against distance to the waist on log-log axes and check the exponent 2 + k/2.

    A band whose mass does not decay is kept in the report with a NaN rate and
    left out of the fit.
    """
    records: list[BandRecord] = []
    waist_rates: list[RateEstimate] = []
    for band in table.bands:
        measures = [float(v) for v in table.column(band)]
        barrier = 0.0 if band.touches_waist else peierls_barrier_busemann(profile, band.z_lo)
        try:
            est = rate_estimate(table, band)
        except InsufficientDecay as exc:
            log.warning('%s', exc)
            sequence = [float(-math.log(m) / lam) if lam > 0 else math.nan for m, lam in zip(measures, table.lambdas)]
            records.append(
                BandRecord(
                    band=band,
                    inf_distance=meridian_length(profile, band.z_lo),
                    measures=measures,
                    rate=math.nan,
                    sequence=sequence,
                    barrier=barrier,
                    relative_error=math.nan,
                    decaying=False,
                    monotone=monotone_diagnostic(sequence),
                )
            )
            continue
        if band.touches_waist:
            waist_rates.append(est)
            continue
        records.append(
            BandRecord(
                band=band,
                inf_distance=meridian_length(profile, band.z_lo),
                measures=measures,
                rate=est.rate,
                sequence=est.sequence,
                barrier=barrier,
                relative_error=abs(est.rate - barrier) / barrier,
                monotone=monotone_diagnostic(est.sequence),
            )
        )

    lo, hi = DISTANCE_WINDOW
    usable = [r for r in records if r.decaying and lo <= r.inf_distance <= hi]
    distances = sorted({round(r.inf_distance, 12) for r in usable})
    if len(distances) < MIN_BANDS:
        raise ValueError(
            f'need at least {MIN_BANDS} decaying bands at distinct distances in [{lo}, {hi}], got {len(distances)}'
        )

    d = np.array([r.inf_distance for r in usable])
    rates = np.array([r.rate for r in usable])
    fit = loglog_fit(d, rates)
    expected = 2.0 + profile.k / 2.0
    model = d**expected
    ratio = rates / model
    sandwich = float(max(ratio.max(), 1.0 / ratio.min()))
    log.info('rate ~ %.4g d^%.4f (expected power %.2f), D = %.3f', fit.coeff, fit.power, expected, sandwich)
    return DeviationReport(
        lambdas=list(table.lambdas),
        records=records,
        waist_rates=waist_rates,
        fit=fit,
        expected_power=expected,
        power_tolerance=0.05 * expected,
        sandwich_d=sandwich,
    )


def default_bands(z_max: float) -> list[Band]:
    """Eight bands of width 0.1; the first touches the waist. Bands past z_max/2 are dropped."""
    starts = (0.0, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4)
    limit = z_max / 2
    return [Band(s, round(s + 0.1, 10)) for s in starts if s + 0.1 <= limit + 1e-12]


def rate_vs_distance_dat(report: DeviationReport, path: Path) -> None:
    """inf_dist, rate, barrier and the fitted power law per band, one row each."""
    rows = [
        (r.inf_distance, r.rate, r.barrier, report.fit.coeff * r.inf_distance**report.fit.power)
        for r in sorted(report.fitted_records, key=lambda r: r.inf_distance)
    ]
    comment = f'rate ~ {report.fit.coeff:.6g} * d^{report.fit.power:.6g}, expected power {report.expected_power:g}'
    write_dat(path, ('inf_dist', 'rate', 'barrier', 'fit'), rows, comment)
