"""Rich-based terminal output for waistlab checks."""

from __future__ import annotations

import io
import sys
from collections.abc import Sequence

from rich.console import Console
from rich.table import Table

from waistlab import __version__
from waistlab.report import CheckRecord


def _can_encode_unicode() -> bool:
    """Check whether stdout can handle Unicode box-drawing characters."""
    encoding = getattr(sys.stdout, 'encoding', None) or 'ascii'
    try:
        '─✓✗'.encode(encoding)
        return True
    except UnicodeEncodeError, LookupError:
        return False


_USE_UNICODE = _can_encode_unicode()
HORIZONTAL_RULE = '─' if _USE_UNICODE else '-'
PASS_MARK = '✓' if _USE_UNICODE else 'ok'
FAIL_MARK = '✗' if _USE_UNICODE else 'FAIL'

SECTION_WIDTH = 72


def _format(value: float | None) -> str:
    if value is None:
        return '-'
    return f'{value:.6g}'


def checks_table(checks: Sequence[CheckRecord]) -> Table:
    table = Table(show_edge=False, header_style='bold')
    table.add_column('module')
    table.add_column('check')
    table.add_column('value', justify='right')
    table.add_column('target')
    table.add_column('', justify='center')
    for c in checks:
        mark = f'[green]{PASS_MARK}[/green]' if c.passed else f'[red]{FAIL_MARK}[/red]'
        table.add_row(c.module, c.check, _format(c.value), c.target, mark)
    return table


def render_summary(
    console: Console, checks: Sequence[CheckRecord], title: str, error: dict[str, str] | None = None
) -> None:
    console.print(f'[dim]{HORIZONTAL_RULE * SECTION_WIDTH}[/dim]')
    console.print(f'[bold]waistlab [dim]v{__version__}[/dim][/bold]  {title}')
    console.print('')
    if checks:
        console.print(checks_table(checks))
    else:
        console.print('[dim]No checks were run.[/dim]')

    failed = sum(1 for c in checks if not c.passed)
    console.print(f'[dim]{HORIZONTAL_RULE * SECTION_WIDTH}[/dim]')
    if error is not None:
        console.print(f"[red]{error['module']} stopped with {error['type']}: {error['message']}[/red]")
    elif failed:
        console.print(f'[red]{failed} of {len(checks)} checks failed[/red]')
    else:
        console.print(f'[green]all {len(checks)} checks passed[/green]')


def display_summary(
    checks: Sequence[CheckRecord], title: str, error: dict[str, str] | None = None, no_color: bool = False
) -> None:
    """Print the checks table to the terminal."""
    console = Console(no_color=no_color, highlight=False)
    render_summary(console, checks, title, error)


def summary_text(checks: Sequence[CheckRecord], title: str, error: dict[str, str] | None = None) -> str:
    """The same summary as plain text, for summary.txt."""
    console = Console(file=io.StringIO(), record=True, no_color=True, highlight=False, width=100)
    render_summary(console, checks, title, error)
    return console.export_text()
