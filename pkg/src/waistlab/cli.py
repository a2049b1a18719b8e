"""Command-line interface for waistlab."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from waistlab import __version__
from waistlab.config import BUSEMANN_METHODS, ExperimentConfig, load_config, validate_config
from waistlab.display import display_summary
from waistlab.errors import WaistLabError
from waistlab.pipeline import STAGES, run_pipeline

COMMAND_STAGES = {
    'profile-info': 'surface',
    'geodesic': 'geodesics',
    'busemann': 'busemann',
    'weakkam': 'weakkam',
    'diffusion': 'diffusion',
    'ldp': 'ldp',
    'cat-check': 'comparison',
}


def _add_image_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--image',
        action='store_true',
        help='Write a PNG card of rate against distance to the output directory',
    )
    parser.add_argument(
        '--image-light',
        action='store_true',
        help='Same as --image with a light theme',
    )


def _stage_list(text: str) -> list[str]:
    names = [n.strip() for n in text.split(',') if n.strip()]
    unknown = [n for n in names if n not in STAGES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f'choose stages from {", ".join(STAGES)}; got {text!r}')
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='waistlab',
        description='Numerical checks of large deviations on surfaces of revolution with a flat waist.',
    )
    parser.add_argument('--config', type=Path, default=None, help='JSON or TOML experiment config (default: built-in)')
    parser.add_argument('--output-dir', type=Path, default=None, help='Directory for artifacts (overrides config)')
    parser.add_argument('--jobs', type=int, default=1, help='Worker threads for sweeps and trials (default: 1)')
    parser.add_argument('--no-color', action='store_true', help='Disable colored output')
    parser.add_argument('-v', '--verbose', action='store_true', help='Log solver progress at debug level')
    parser.add_argument(
        '--only',
        type=_stage_list,
        default=None,
        help=f'Comma-separated stages to run in place of the command default: {", ".join(STAGES)}',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    sub = parser.add_subparsers(dest='command', required=True)

    info = sub.add_parser('profile-info', help='Tabulate r, E, G and K along the meridian')
    info.add_argument('--samples', type=int, default=201, help='Number of heights (default: 201)')

    geo = sub.add_parser('geodesic', help='Integrate one geodesic and report Clairaut drift')
    geo.add_argument('--z0', type=float, default=None, help='Starting height (default: 0.3)')
    geo.add_argument('--psi', type=float, default=None, help='Angle with the parallel (default: waist asymptote)')
    geo.add_argument('--horizon', type=float, default=None, help='Arc length to integrate')
    geo.add_argument('--step', type=float, default=None, help='RK4 step in arc length')

    bus = sub.add_parser('busemann', help='Busemann barrier by quadrature and by the limit, with power-law fit')
    bus.add_argument(
        '--method', choices=BUSEMANN_METHODS, default=None, help='quad, limit or both (default: configured)'
    )
    bus.add_argument('--horizon', type=float, default=None, help='Waist arc length for the Busemann limit')
    bus.add_argument('--n-samples', type=int, default=None, help='Quadrature heights for the power-law fit')
    bus.add_argument('--z-lo', type=float, default=None, help='Lower end of the fit window')
    bus.add_argument('--z-hi', type=float, default=None, help='Upper end of the fit window')
    bus.add_argument('--limit-samples', type=int, default=None, help='Heights for the quadrature vs limit check')

    sub.add_parser('weakkam', help='Critical value, conjugate weak KAM pair, barrier and Aubry set')

    diff = sub.add_parser('diffusion', help='Principal eigenpair and stationary measure at one lambda')
    diff.add_argument(
        '--lambda', dest='lam', type=float, default=None, help='Twist strength (default: largest configured)'
    )

    ldp = sub.add_parser('ldp', help='Lambda sweep, rates per band and the power-law fit')
    _add_image_flags(ldp)

    cat = sub.add_parser('cat-check', help='Seeded angle comparison trials between two profiles')
    cat.add_argument('--b1', type=float, default=None, help='Coefficient of the less curved profile')
    cat.add_argument('--b2', type=float, default=None, help='Coefficient of the more curved profile')
    cat.add_argument('--trials', type=int, default=None, help='Number of trials')
    cat.add_argument('--seed', type=int, default=None, help='Generator seed')

    run = sub.add_parser('run', help='Full pipeline with summary.json')
    _add_image_flags(run)
    return parser


def _configure_logging(verbose: bool, no_color: bool) -> None:
    logger = logging.getLogger('waistlab')
    logger.handlers.clear()
    handler = RichHandler(console=Console(stderr=True, no_color=no_color), show_time=False, show_path=False)
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Fold subcommand flags into the config and validate the result again."""
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    if args.command == 'geodesic':
        cfg.geodesic = dataclasses.replace(
            cfg.geodesic,
            horizon=cfg.geodesic.horizon if args.horizon is None else args.horizon,
            step=cfg.geodesic.step if args.step is None else args.step,
        )
    if args.command == 'busemann':
        names = ('method', 'horizon', 'n_samples', 'z_lo', 'z_hi', 'limit_samples')
        changes = {k: getattr(args, k) for k in names if getattr(args, k) is not None}
        cfg.busemann = dataclasses.replace(cfg.busemann, **changes)
    if args.command == 'cat-check':
        changes = {k: getattr(args, k) for k in ('b1', 'b2', 'trials') if getattr(args, k) is not None}
        cfg.comparison = dataclasses.replace(cfg.comparison, **changes)
        if args.seed is not None:
            cfg.seed = args.seed
    validate_config(cfg)
    return cfg


def _options(args: argparse.Namespace) -> dict[str, float]:
    names = {
        'profile-info': {'samples': 'samples'},
        'geodesic': {'z0': 'z0', 'psi': 'psi'},
        'diffusion': {'lam': 'lambda'},
    }
    keys = names.get(args.command, {})
    return {key: getattr(args, dest) for dest, key in keys.items() if getattr(args, dest) is not None}


def _write_image(ctx, light: bool) -> None:
    from waistlab.image import DARK_THEME, LIGHT_THEME, generate_image, resolve_image_path

    report = ctx.results.get('ldp')
    if report is None:
        print('No ldp results; skipping the image.', file=sys.stderr)
        return
    output_path = resolve_image_path(ctx.output_dir)
    profile = ctx.profile
    title = f'Rate vs distance  a={profile.a:g} b={profile.b:g} k={profile.k:g}'
    generate_image(report, title, output_path, LIGHT_THEME if light else DARK_THEME)
    print(f'Image saved to {output_path}')


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    no_color = args.no_color or os.environ.get('NO_COLOR') is not None
    _configure_logging(args.verbose, no_color)

    if args.jobs < 1:
        print(f'Error: --jobs must be at least 1, got {args.jobs}', file=sys.stderr)
        sys.exit(1)

    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except WaistLabError as exc:
        print(f'Error: {exc}', file=sys.stderr)
        sys.exit(1)

    if args.only is not None:
        only = args.only
        title = ', '.join(only)
    elif args.command == 'run':
        only = None
        title = 'full pipeline'
    else:
        only = [COMMAND_STAGES[args.command]]
        title = args.command

    try:
        result, ctx = run_pipeline(cfg, only=only, jobs=args.jobs, options=_options(args))
    except ValueError as exc:
        print(f'Error: {exc}', file=sys.stderr)
        sys.exit(1)

    display_summary(result.checks, title, result.error, no_color=no_color)

    if result.error is not None:
        print(f"Error: {result.error['message']}", file=sys.stderr)
    elif getattr(args, 'image', False) or getattr(args, 'image_light', False):
        _write_image(ctx, light=args.image_light)

    sys.exit(result.status)
