"""Experiment configuration: JSON (or TOML) files merged over one table of defaults."""

from __future__ import annotations

import copy
import dataclasses
import json
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from waistlab.errors import ParseError, ValidationError
from waistlab.grid import Grid
from waistlab.ldp import DEFAULT_LAMBDAS, Band, default_bands
from waistlab.surface import RevolutionProfile

BUSEMANN_METHODS = ('quad', 'limit', 'both')

DEFAULTS: dict[str, Any] = {
    'profile': {'a': 1.0, 'b': 1.0, 'k': 2, 'z_max': 1.0, 'allow_odd_k': False},
    'grid': {'n_theta': 192, 'n_z': 193},
    'omega_scale': 1.0,  # omega = omega_scale * a * dtheta
    'geodesic': {'step': 1e-3, 'horizon': 10.0},
    'busemann': {
        'method': 'both',  # quad, limit or both
        'horizon': 50.0,
        'n_samples': 64,
        'z_lo': 0.02,
        'z_hi': 0.2,
        'limit_samples': 10,
    },
    'weakkam': {
        'tau_factor': 2.0,
        'tol': 1e-8,
        'max_iter': 20000,
        'drift_iterations': 2000,
        'critical_n_theta': 32,
        'critical_n_z': 33,
    },
    'diffusion': {'lambdas': list(DEFAULT_LAMBDAS), 'boundary': 'reflecting'},
    'bands': None,  # None means the eight default bands, capped at z_max / 2
    'comparison': {'b1': 0.5, 'b2': 2.0, 'trials': 20, 'mesh': 257},
    'output_dir': 'waistlab-out',
    'seed': 20240601,
}


@dataclass
class ProfileSettings:
    a: float
    b: float
    k: float
    z_max: float
    allow_odd_k: bool

    def build(self) -> RevolutionProfile:
        return RevolutionProfile(self.a, self.b, self.k, self.z_max, self.allow_odd_k)


@dataclass
class GridSettings:
    n_theta: int
    n_z: int

    def build(self) -> Grid:
        return Grid(self.n_theta, self.n_z)


@dataclass
class GeodesicSettings:
    step: float
    horizon: float


@dataclass
class BusemannSettings:
    method: str
    horizon: float
    n_samples: int
    z_lo: float
    z_hi: float
    limit_samples: int


@dataclass
class WeakKamSettings:
    tau_factor: float
    tol: float
    max_iter: int
    drift_iterations: int
    critical_n_theta: int
    critical_n_z: int

    def critical_grid(self) -> Grid:
        return Grid(self.critical_n_theta, self.critical_n_z)


@dataclass
class DiffusionSettings:
    lambdas: list[float]
    boundary: str


@dataclass
class ComparisonSettings:
    b1: float
    b2: float
    trials: int
    mesh: int


@dataclass
class ExperimentConfig:
    profile: ProfileSettings
    grid: GridSettings
    omega_scale: float
    geodesic: GeodesicSettings
    busemann: BusemannSettings
    weakkam: WeakKamSettings
    diffusion: DiffusionSettings
    bands: list[Band]
    comparison: ComparisonSettings
    output_dir: Path
    seed: int
    source: Path | None = field(default=None, compare=False)

    @property
    def omega_coefficient(self) -> float:
        """c in omega = c dtheta."""
        return self.omega_scale * self.profile.a

    def as_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data.pop('source')
        data['output_dir'] = str(self.output_dir)
        return data


_SECTIONS = {
    'profile': ProfileSettings,
    'grid': GridSettings,
    'geodesic': GeodesicSettings,
    'busemann': BusemannSettings,
    'weakkam': WeakKamSettings,
    'diffusion': DiffusionSettings,
    'comparison': ComparisonSettings,
}


def _read(path: Path) -> dict[str, Any]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParseError(f'{path}: {exc.strerror or exc}') from exc

    if path.suffix == '.toml':
        try:
            data = tomllib.loads(raw.decode('utf-8'))
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f'{path}: {exc}') from exc
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f'{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}') from exc
    if not isinstance(data, dict):
        raise ParseError(f'{path}: top level must be an object')
    return data


def _merge(defaults: dict[str, Any], data: dict[str, Any], prefix: str = '') -> dict[str, Any]:
    merged = copy.deepcopy(defaults)
    for key, value in data.items():
        name = f'{prefix}{key}'
        if key not in defaults:
            raise ValidationError(f'unknown key {name!r}')
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ValidationError(f'{name!r} must be an object')
            merged[key] = _merge(defaults[key], value, f'{name}.')
        else:
            merged[key] = value
    return merged


def _number(name: str, value: Any, *, integer: bool = False) -> None:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise ValidationError(f'{name!r} must be a number, got {value!r}')
    if integer and not float(value).is_integer():
        raise ValidationError(f'{name!r} must be an integer, got {value!r}')


def _check_types(section: str, values: dict[str, Any]) -> None:
    cls = _SECTIONS[section]
    for f in dataclasses.fields(cls):
        value = values[f.name]
        name = f'{section}.{f.name}'
        if f.type == 'float':
            _number(name, value)
        elif f.type == 'int':
            _number(name, value, integer=True)
            values[f.name] = int(value)
        elif f.type == 'bool' and not isinstance(value, bool):
            raise ValidationError(f'{name!r} must be true or false, got {value!r}')


def _bands(raw: Any, profile: RevolutionProfile) -> list[Band]:
    if raw is None:
        return default_bands(profile.z_max)
    if not isinstance(raw, list) or not raw:
        raise ValidationError("'bands' must be a nonempty list of {z_lo, z_hi} objects")
    bands = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or set(item) != {'z_lo', 'z_hi'}:
            raise ValidationError(f'bands[{i}] must have exactly the keys z_lo and z_hi')
        _number(f'bands[{i}].z_lo', item['z_lo'])
        _number(f'bands[{i}].z_hi', item['z_hi'])
        try:
            band = Band(float(item['z_lo']), float(item['z_hi']))
        except ValueError as exc:
            raise ValidationError(f'bands[{i}]: {exc}') from exc
        if band.z_hi > profile.z_max / 2:
            raise ValidationError(f'bands[{i}]: z_hi={band.z_hi!r} exceeds z_max/2 = {profile.z_max / 2!r}')
        bands.append(band)
    return bands


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise ValidationError for the first setting that breaks a module precondition."""
    g = cfg.grid
    if g.n_theta < 32 or g.n_z < 32 or g.n_z % 2 == 0:
        raise ValidationError(f'grid must be at least 32 x 33 with odd n_z, got {g.n_theta} x {g.n_z}')
    w = cfg.weakkam
    if not 0 < w.tau_factor <= 3:
        raise ValidationError(f'weakkam.tau_factor must lie in (0, 3], got {w.tau_factor!r}')
    if w.tol <= 0 or w.max_iter < 1 or w.drift_iterations < 8:
        raise ValidationError('weakkam.tol must be positive, max_iter >= 1 and drift_iterations >= 8')
    if w.critical_n_theta < 4 or w.critical_n_z < 3 or w.critical_n_z % 2 == 0:
        raise ValidationError('weakkam critical grid needs n_theta >= 4 and odd n_z >= 3')

    d = cfg.diffusion
    if d.boundary != 'reflecting':
        raise ValidationError(f"diffusion.boundary must be 'reflecting', got {d.boundary!r}")
    if not d.lambdas or any(v < 0 for v in d.lambdas) or d.lambdas != sorted(d.lambdas):
        raise ValidationError(f'diffusion.lambdas must be nonempty, ascending and nonnegative, got {d.lambdas!r}')

    if cfg.geodesic.step <= 0 or cfg.geodesic.horizon <= 0:
        raise ValidationError('geodesic.step and geodesic.horizon must be positive')
    bu = cfg.busemann
    if bu.method not in BUSEMANN_METHODS:
        raise ValidationError(f'busemann.method must be one of {", ".join(BUSEMANN_METHODS)}, got {bu.method!r}')
    if bu.horizon < 20:
        raise ValidationError(f'busemann.horizon must be at least 20, got {bu.horizon!r}')
    if not 0 < bu.z_lo < bu.z_hi <= cfg.profile.z_max or bu.n_samples < 8 or bu.limit_samples < 1:
        raise ValidationError('busemann needs 0 < z_lo < z_hi <= z_max, n_samples >= 8 and limit_samples >= 1')

    c = cfg.comparison
    if not 0 < c.b1 <= c.b2:
        raise ValidationError(f'comparison needs 0 < b1 <= b2, got b1={c.b1!r}, b2={c.b2!r}')
    if c.trials < 1 or c.mesh < 3:
        raise ValidationError('comparison.trials must be positive and comparison.mesh at least 3')


def build_config(data: dict[str, Any], source: Path | None = None) -> ExperimentConfig:
    """Merge *data* over DEFAULTS and validate every setting before anything runs."""
    merged = _merge(DEFAULTS, data)
    for section in _SECTIONS:
        _check_types(section, merged[section])
    _number('omega_scale', merged['omega_scale'])
    _number('seed', merged['seed'], integer=True)
    lambdas = merged['diffusion']['lambdas']
    if not isinstance(lambdas, list):
        raise ValidationError(f"'diffusion.lambdas' must be a list, got {lambdas!r}")
    for i, value in enumerate(lambdas):
        _number(f'diffusion.lambdas[{i}]', value)
    merged['diffusion']['lambdas'] = [float(v) for v in merged['diffusion']['lambdas']]

    settings = {name: cls(**merged[name]) for name, cls in _SECTIONS.items()}
    try:
        profile = settings['profile'].build()
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    cfg = ExperimentConfig(
        omega_scale=float(merged['omega_scale']),
        bands=_bands(merged['bands'], profile),
        output_dir=Path(merged['output_dir']),
        seed=int(merged['seed']),
        source=source,
        **settings,
    )
    validate_config(cfg)
    return cfg


def load_config(path: Path | None) -> ExperimentConfig:
    """Load and validate a config file. None gives the defaults."""
    if path is None:
        return build_config({})
    return build_config(_read(path), source=path)


def save_config(cfg: ExperimentConfig, path: Path) -> None:
    """Write the resolved configuration as JSON with sorted keys."""
    text = json.dumps(cfg.as_dict(), indent=2, sort_keys=True)
    path.write_text(text + '\n', encoding='utf-8')
