"""Artifact writers: CSV with 17 significant digits, sorted-key JSON, and gnuplot-style .dat files."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

PROFILE_HEADER = ('z', 'r', 'E', 'G', 'K')
GEODESIC_HEADER = ('s', 'z', 'theta_lift', 'psi', 'clairaut_drift')
BUSEMANN_HEADER = ('z', 'value_quad', 'value_limit', 'abs_diff')
WEAKKAM_HEADER = ('theta_index', 'z_index', 'u_minus', 'u_plus', 'barrier')
DIFFUSION_HEADER = ('z_index', 'theta_index', 'density')
LDP_HEADER = ('band_zlo', 'band_zhi', 'inf_dist', 'lambda', 'measure', 'rate_seq')
CAT_HEADER = ('trial', 'alpha1', 'alpha2', 'margin', 'gb_residual1', 'gb_residual2', 'pass')


@dataclass(slots=True)
class CheckRecord:
    """One acceptance check; every number in the summary carries its module and check name."""

    module: str
    check: str
    value: float | None
    target: str
    passed: bool


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return 'nan'
        return f'{value:.17g}'
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write *rows* under *header* with '\\n' line endings; returns the number of data rows."""
    count = 0
    with path.open('w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f'row has {len(row)} fields, header has {len(header)}')
            writer.writerow([format_value(v) for v in row])
            count += 1
    return count


def _plain(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_plain(v) for v in value]
    return value


def write_json(path: Path, data: Any) -> None:
    """Deterministic JSON: sorted keys, two-space indent, non-finite floats as null."""
    text = json.dumps(_plain(data), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + '\n', encoding='utf-8')


def write_dat(path: Path, columns: Sequence[str], rows: Iterable[Sequence[float]], comment: str = '') -> None:
    """Whitespace-separated columns with a '#' header, ready for gnuplot."""
    lines = []
    if comment:
        lines.append(f'# {comment}')
    lines.append('# ' + ' '.join(columns))
    for row in rows:
        lines.append(' '.join(format_value(float(v)) for v in row))
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')


def checks_as_dicts(checks: Iterable[CheckRecord]) -> list[dict[str, Any]]:
    return [asdict(c) for c in checks]
