"""Experiment stages and the end-to-end run.

Each stage reads the validated config, writes its artifacts into the output
directory and returns the acceptance checks it performed.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from waistlab import __version__
from waistlab.busemann import (
    barrier_curve,
    busemann_sum_limit,
    busemann_sum_quadrature,
    fit_power_law,
    leading_coefficient,
    peierls_barrier_busemann,
)
from waistlab.comparison import (
    ANGLE_MARGIN,
    CONTAINMENT_TOLERANCE,
    angle_comparison_trial,
    build_quadrilateral,
    gauss_bonnet_quadrilateral_residual,
    mesh_refinement,
)
from waistlab.config import ExperimentConfig, save_config
from waistlab.diffusion import reduced_eigenvalue, solve_measure
from waistlab.display import summary_text
from waistlab.errors import WaistLabError
from waistlab.geodesics import GeodesicState, asymptote_angle, integrate_geodesic
from waistlab.ldp import compare_to_theorem1, lambda_sweep, rate_vs_distance_dat
from waistlab.report import (
    BUSEMANN_HEADER,
    CAT_HEADER,
    DIFFUSION_HEADER,
    GEODESIC_HEADER,
    LDP_HEADER,
    PROFILE_HEADER,
    WEAKKAM_HEADER,
    CheckRecord,
    checks_as_dicts,
    write_csv,
    write_json,
)
from waistlab.surface import (
    RevolutionProfile,
    SurfacePoint,
    gaussian_curvature,
    meridian_length,
    metric_coefficients,
    radius,
)
from waistlab.weakkam import (
    LagrangianSpec,
    aubry_rows,
    aubry_set_detect,
    aubry_tolerance,
    barrier_refinement,
    critical_value,
    default_tau,
    fixed_point_residual,
    peierls_barrier_grid,
    waist_energy,
    weak_kam_pair,
)

log = logging.getLogger(__name__)

STAGES = ('surface', 'geodesics', 'busemann', 'weakkam', 'diffusion', 'ldp', 'comparison')
BARRIER_WINDOW = (0.1, 0.4)
HALVING_RANGE = (1.6, 2.4)
RATE_WINDOW = (0.15, 0.35)


@dataclass
class RunContext:
    config: ExperimentConfig
    output_dir: Path
    jobs: int = 1
    options: dict[str, float] = field(default_factory=dict)
    results: dict[str, Any] = field(default_factory=dict)

    @property
    def profile(self) -> RevolutionProfile:
        return self.config.profile.build()

    def path(self, name: str) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir / name


@dataclass
class RunResult:
    checks: list[CheckRecord]
    error: dict[str, str] | None = None

    @property
    def status(self) -> int:
        if self.error is not None or not all(c.passed for c in self.checks):
            return 1
        return 0


def _check(module: str, check: str, value: float | None, target: str, passed: bool) -> CheckRecord:
    value = None if value is None or not math.isfinite(value) else float(value)
    return CheckRecord(module, check, value, target, bool(passed and value is not None))


def stage_surface(ctx: RunContext) -> list[CheckRecord]:
    profile = ctx.profile
    samples = int(ctx.options.get('samples', 201))
    z = np.linspace(-profile.z_max, profile.z_max, samples)
    e, g = metric_coefficients(profile, z)
    k = gaussian_curvature(profile, z)
    write_csv(ctx.path('profile.csv'), PROFILE_HEADER, zip(z, radius(profile, z), e, g, k))

    asymmetry = float(np.max(np.abs(radius(profile, z) - radius(profile, -z))))
    return [
        _check('surface', 'curvature_nonpositive', float(k.max()), '<= 0', k.max() <= 0),
        _check('surface', 'profile_even', asymmetry, '== 0', asymmetry == 0.0),
    ]


def stage_geodesics(ctx: RunContext) -> list[CheckRecord]:
    """Integrate from (z0, 0) at angle psi; by default the asymptote to the waist from z0 = 0.3."""
    profile = ctx.profile
    settings = ctx.config.geodesic
    z0 = ctx.options.get('z0', min(0.3, profile.z_max / 2))
    psi = ctx.options.get('psi', -asymptote_angle(profile, z0))

    path = integrate_geodesic(profile, GeodesicState(SurfacePoint(z0, 0.0), psi), settings.horizon, settings.step)
    write_csv(ctx.path('geodesic.csv'), GEODESIC_HEADER, path.rows())
    per_length = path.max_drift / max(path.total_length, settings.step)
    return [_check('geodesics', 'clairaut_drift_per_length', per_length, '<= 1e-8', per_length <= 1e-8)]


def stage_busemann(ctx: RunContext) -> list[CheckRecord]:
    """Quadrature power-law fit and/or the quadrature vs limit cross-check, per busemann.method."""
    profile = ctx.profile
    settings = ctx.config.busemann
    checks = []

    if settings.method in ('quad', 'both'):
        zs = np.linspace(settings.z_lo, settings.z_hi, settings.n_samples + 2)[1:-1]
        fit = fit_power_law(barrier_curve(profile, zs), settings.z_lo, settings.z_hi)
        coeff, power = leading_coefficient(profile)
        write_json(
            ctx.path('busemann_fit.json'),
            {
                'power': fit.power,
                'coeff': fit.coeff,
                'r_squared': fit.r_squared,
                'expected_power': power,
                'expected_coeff': coeff,
            },
        )
        coeff_error = abs(fit.coeff - coeff) / coeff
        checks += [
            _check('busemann', 'power_law_exponent', fit.power, f'{power:g} +- 0.05', abs(fit.power - power) <= 0.05),
            _check('busemann', 'power_law_coefficient', fit.coeff, f'{coeff:.6g} +- 5%', coeff_error <= 0.05),
        ]

    z_cross = np.linspace(0.05, min(0.5, profile.z_max / 2), settings.limit_samples)
    quads = [busemann_sum_quadrature(profile, float(z)) for z in z_cross]
    if settings.method == 'quad':
        rows = ((z, q, math.nan, math.nan) for z, q in zip(z_cross, quads))
        write_csv(ctx.path('busemann.csv'), BUSEMANN_HEADER, rows)
        return checks

    with ThreadPoolExecutor(max_workers=max(1, ctx.jobs)) as pool:
        limits = list(pool.map(lambda z: busemann_sum_limit(profile, float(z), settings.horizon), z_cross))
    diffs = [abs(q - lim) for q, lim in zip(quads, limits)]
    write_csv(ctx.path('busemann.csv'), BUSEMANN_HEADER, zip(z_cross, quads, limits, diffs))
    checks.append(_check('busemann', 'quadrature_vs_limit', max(diffs), '<= 1e-3', max(diffs) <= 1e-3))
    return checks


def stage_weakkam(ctx: RunContext) -> list[CheckRecord]:
    profile = ctx.profile
    cfg = ctx.config
    settings = cfg.weakkam
    spec = LagrangianSpec(profile, cfg.omega_coefficient)

    c0 = critical_value(profile, spec, settings.critical_grid(), iterations=settings.drift_iterations)
    expected = spec.expected_critical_value
    c0_tolerance = 0.04 * expected if expected > 0 else 0.02

    grid = cfg.grid.build()
    tau = default_tau(spec, grid, settings.tau_factor)
    pair = weak_kam_pair(profile, spec, grid, tau, c0, settings.tol, settings.max_iter)
    barrier = peierls_barrier_grid(pair.u_minus, pair.u_plus)

    rows = (
        (i, j, pair.u_minus.values[j, i], pair.u_plus.values[j, i], barrier.values[j, i])
        for j in range(grid.n_z)
        for i in range(grid.n_theta)
    )
    write_csv(ctx.path('weakkam.csv'), WEAKKAM_HEADER, rows)

    refinement = barrier_refinement(
        profile,
        spec,
        grid,
        c0,
        lambda z: peierls_barrier_busemann(profile, z),
        BARRIER_WINDOW[0],
        min(BARRIER_WINDOW[1], profile.z_max),
        tau_factor=settings.tau_factor,
        tol=settings.tol,
        max_iter=settings.max_iter,
        fine=pair,
    )
    ratio = refinement.halving_ratio
    residual = fixed_point_residual(pair.u_minus, spec, tau, c0)
    energy = waist_energy(pair.u_minus, spec, tau)
    detected = aubry_rows(aubry_set_detect(barrier, aubry_tolerance(profile, grid)))
    waist = grid.waist_row
    aubry_ok = waist in detected and set(detected) <= {waist - 1, waist, waist + 1}
    write_json(
        ctx.path('weakkam.json'),
        {
            'c0': c0,
            'expected_c0': expected,
            'tau': tau,
            'iterations': pair.iterations,
            'residual': pair.residual,
            'fixed_point_residual': residual,
            'waist_energy': energy,
            'aubry_rows': detected,
            'barrier_relative_error': refinement.corrected_error,
            'barrier_raw_error': refinement.fine_error,
            'barrier_coarse_error': refinement.coarse_error,
            'barrier_halving_ratio': ratio,
        },
    )
    c0_target = f'{expected:g} +- {c0_tolerance:g}'
    lo, hi = HALVING_RANGE
    return [
        _check('weakkam', 'critical_value', c0, c0_target, abs(c0 - expected) <= c0_tolerance),
        _check('weakkam', 'waist_energy', energy, f'c0 +- {c0_tolerance:g}', abs(energy - c0) <= c0_tolerance),
        _check(
            'weakkam', 'fixed_point_residual', residual, f'<= {settings.tol:g}', residual <= settings.tol
        ),
        _check(
            'weakkam',
            'barrier_relative_error',
            refinement.corrected_error,
            '<= 0.05',
            refinement.corrected_error <= 0.05,
        ),
        _check('weakkam', 'barrier_error_halving', ratio, f'in [{lo:g}, {hi:g}]', lo <= ratio <= hi),
        _check('weakkam', 'aubry_rows', float(len(detected)), 'waist row +- 1', aubry_ok),
    ]


def stage_diffusion(ctx: RunContext) -> list[CheckRecord]:
    profile = ctx.profile
    cfg = ctx.config
    grid = cfg.grid.build()
    lam = ctx.options.get('lambda', max(cfg.diffusion.lambdas))
    c = cfg.omega_coefficient

    mu, plus, minus = solve_measure(profile, grid, lam, c)
    reduced = reduced_eigenvalue(profile, grid.n_z, lam, c)
    rows = ((j, i, mu.density.values[j, i]) for j in range(grid.n_z) for i in range(grid.n_theta))
    write_csv(ctx.path('diffusion.csv'), DIFFUSION_HEADER, rows)
    write_json(
        ctx.path('diffusion.json'),
        {
            'lambda': lam,
            'Lambda_plus': plus.eigenvalue,
            'Lambda_minus': minus.eigenvalue,
            'residual_plus': plus.residual,
            'residual_minus': minus.residual,
            'reduced_eigenvalue': reduced,
            'iterations': max(plus.iterations, minus.iterations),
        },
    )

    residual = max(plus.residual, minus.residual)
    mass_error = abs(mu.total_mass - 1.0)
    gap = abs(plus.eigenvalue - minus.eigenvalue)
    reduction = abs(plus.eigenvalue - reduced)
    return [
        _check('diffusion', 'eigen_residual', residual, '<= 1e-8', residual <= 1e-8),
        _check('diffusion', 'mass_normalization', mass_error, '<= 1e-12', mass_error <= 1e-12),
        _check('diffusion', 'lambda_symmetry', gap, '<= 1e-8', gap <= 1e-8),
        _check('diffusion', 'reduction_1d', reduction, '<= 1e-6', reduction <= 1e-6),
    ]


def stage_ldp(ctx: RunContext) -> list[CheckRecord]:
    profile = ctx.profile
    cfg = ctx.config
    table = lambda_sweep(
        profile, cfg.omega_coefficient, cfg.diffusion.lambdas, cfg.bands, cfg.grid.build(), jobs=ctx.jobs
    )
    report = compare_to_theorem1(table, profile)
    ctx.results['ldp'] = report

    sequences = {r.band: r.sequence for r in report.records}
    sequences.update({w.band: w.sequence for w in report.waist_rates})
    rows = []
    for k, band in enumerate(table.bands):
        dist = meridian_length(profile, band.z_lo)
        for n, lam in enumerate(table.lambdas):
            rows.append((band.z_lo, band.z_hi, dist, lam, float(table.measures[n, k]), sequences[band][n]))
    write_csv(ctx.path('ldp.csv'), LDP_HEADER, rows)
    rate_vs_distance_dat(report, ctx.path('ldp.dat'))
    write_json(
        ctx.path('ldp.json'),
        {
            'lambdas': report.lambdas,
            'power': report.fit.power,
            'coeff': report.fit.coeff,
            'r_squared': report.fit.r_squared,
            'expected_power': report.expected_power,
            'sandwich_d': report.sandwich_d,
            'eigenvalues': table.eigenvalues,
            'bands': [
                {
                    'z_lo': r.band.z_lo,
                    'z_hi': r.band.z_hi,
                    'inf_dist': r.inf_distance,
                    'rate': r.rate,
                    'barrier': r.barrier,
                    'relative_error': r.relative_error,
                    'decaying': r.decaying,
                    'monotone': r.monotone,
                }
                for r in report.records
            ],
        },
    )

    lo, hi = RATE_WINDOW
    inner = [r.relative_error for r in report.records if lo <= r.inf_distance <= hi]
    worst = max(inner) if inner and all(math.isfinite(v) for v in inner) else None
    erratic = sum(not r.monotone for r in report.records if r.decaying)
    waist_rate = max((w.rate for w in report.waist_rates), default=None)
    power_target = f'{report.expected_power:g} +- {report.power_tolerance:g}'
    return [
        _check('ldp', 'rate_vs_barrier', worst, '<= 0.2', worst is not None and worst <= 0.2),
        _check('ldp', 'theorem1_exponent', report.fit.power, power_target, report.power_ok),
        _check('ldp', 'waist_band_rate', waist_rate, '<= 1e-3', waist_rate is not None and waist_rate <= 1e-3),
        _check('ldp', 'sandwich_constant', report.sandwich_d, '<= 3', report.sandwich_d <= 3.0),
        _check('ldp', 'rate_sequence_monotone', float(erratic), '0 bands off by > 5%', erratic == 0),
    ]


def stage_comparison(ctx: RunContext) -> list[CheckRecord]:
    profile = ctx.profile
    cfg = ctx.config
    settings = cfg.comparison
    p1, p2 = profile.with_b(settings.b1), profile.with_b(settings.b2)

    records = angle_comparison_trial(
        p1, p2, settings.trials, cfg.seed, mesh=settings.mesh, jobs=ctx.jobs, strict=False
    )
    rows = ((r.trial, r.alpha1, r.alpha2, r.margin, r.gb_residual1, r.gb_residual2, r.passed) for r in records)
    write_csv(ctx.path('cat.csv'), CAT_HEADER, rows)

    zc = min(0.3, profile.z_max / 2)
    small = (SurfacePoint(zc - 0.05, 0.0), SurfacePoint(zc + 0.05, 0.05), SurfacePoint(zc, 0.15))
    levels = mesh_refinement(profile, small)
    ratios = [lv.ratio for lv in levels if lv.ratio is not None]
    box = build_quadrilateral(profile, 0.0, 0.5, 0.2, 0.3, mesh=settings.mesh)
    box_residual = gauss_bonnet_quadrilateral_residual(profile, box)
    write_json(
        ctx.path('cat_mesh.json'),
        {'levels': [{'mesh': lv.mesh, 'residual': lv.residual, 'ratio': lv.ratio} for lv in levels]},
    )

    margin = min(r.margin for r in records)
    gap = min(r.containment_gap for r in records)
    residual = max(max(r.gb_residual1, r.gb_residual2) for r in records)
    refinement = min(ratios, default=None)
    return [
        _check('comparison', 'angle_margin', margin, f'>= -{ANGLE_MARGIN:g}', margin >= -ANGLE_MARGIN),
        _check('comparison', 'containment', gap, f'>= -{CONTAINMENT_TOLERANCE:g}', gap >= -CONTAINMENT_TOLERANCE),
        _check('comparison', 'gauss_bonnet_residual', residual, '<= 1e-4', residual <= 1e-4),
        _check('comparison', 'mesh_refinement_ratio', refinement, '>= 3.5', (refinement or 0.0) >= 3.5),
        _check('comparison', 'quadrilateral_residual', box_residual, '<= 1e-4', box_residual <= 1e-4),
    ]


STAGE_FUNCTIONS: dict[str, Callable[[RunContext], list[CheckRecord]]] = {
    'surface': stage_surface,
    'geodesics': stage_geodesics,
    'busemann': stage_busemann,
    'weakkam': stage_weakkam,
    'diffusion': stage_diffusion,
    'ldp': stage_ldp,
    'comparison': stage_comparison,
}


def run_stages(ctx: RunContext, names: Sequence[str]) -> RunResult:
    """Run stages in pipeline order, stopping at the first solver error."""
    unknown = [n for n in names if n not in STAGE_FUNCTIONS]
    if unknown:
        raise ValueError(f'unknown stage(s): {", ".join(unknown)}; choose from {", ".join(STAGES)}')

    result = RunResult(checks=[])
    for name in STAGES:
        if name not in names:
            continue
        log.info('Running %s', name)
        try:
            result.checks.extend(STAGE_FUNCTIONS[name](ctx))
        except (WaistLabError, ValueError) as exc:
            log.error('%s failed: %s', name, exc)
            result.error = {'module': name, 'type': type(exc).__name__, 'message': str(exc)}
            break
    return result


def run_pipeline(
    config: ExperimentConfig,
    output_dir: Path | None = None,
    only: Sequence[str] | None = None,
    jobs: int = 1,
    options: dict[str, float] | None = None,
) -> tuple[RunResult, RunContext]:
    """Run the selected stages and write config.json and summary.json next to their artifacts."""
    ctx = RunContext(config, output_dir or config.output_dir, jobs=jobs, options=dict(options or {}))
    result = run_stages(ctx, list(only) if only else list(STAGES))
    save_config(config, ctx.path('config.json'))
    write_json(
        ctx.path('summary.json'),
        {
            'version': __version__,
            'stages': [n for n in STAGES if not only or n in only],
            'checks': checks_as_dicts(result.checks),
            'error': result.error,
            'passed': result.status == 0,
        },
    )
    title = ', '.join(n for n in STAGES if not only or n in only)
    ctx.path('summary.txt').write_text(summary_text(result.checks, title, result.error), encoding='utf-8')
    return result, ctx
