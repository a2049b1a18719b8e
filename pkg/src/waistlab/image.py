"""PNG report card: large-deviation rate against distance to the waist, on log-log axes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from waistlab import __version__
from waistlab.ldp import DeviationReport

IMAGE_WIDTH = 1200
IMAGE_HEIGHT = 860
PADDING = 60
TITLE_FONT_SIZE = 34
BODY_FONT_SIZE = 20
SMALL_FONT_SIZE = 14
PLOT_TOP = 170
PLOT_BOTTOM = IMAGE_HEIGHT - 130
MARKER_RADIUS = 7
TICKS = 5

SYSTEM_FONTS = (
    '/System/Library/Fonts/Monaco.ttf',
    '/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf',
    '/usr/share/fonts/TTF/DejaVuSansMono.ttf',
    'C:\\Windows\\Fonts\\consola.ttf',
)


@dataclass(slots=True)
class ImageTheme:
    """Colors for image rendering (hex strings)."""

    background: str
    text: str
    text_dimmed: str
    grid: str
    rate: str
    barrier: str
    fit: str


def _hex_to_rgb(hex_str: str) -> tuple[int, int, int]:
    """Convert '#rrggbb' to (r, g, b)."""
    hex_str = hex_str.lstrip('#')
    return (int(hex_str[0:2], 16), int(hex_str[2:4], 16), int(hex_str[4:6], 16))


DARK_THEME = ImageTheme(
    background='#1e1e2e',
    text='#cdd6f4',
    text_dimmed='#a6adc8',
    grid='#313244',
    rate='#f38ba8',
    barrier='#89b4fa',
    fit='#a6e3a1',
)

LIGHT_THEME = ImageTheme(
    background='#ffffff',
    text='#4c4f69',
    text_dimmed='#6c7086',
    grid='#e6e9ef',
    rate='#d20f39',
    barrier='#1e66f5',
    fit='#40a02b',
)


def _load_font(size: int):
    """Monospace system font if one is installed, else Pillow's default."""
    from PIL import ImageFont

    for font_path in SYSTEM_FONTS:
        if Path(font_path).exists():
            return ImageFont.truetype(font_path, size)
    return ImageFont.load_default(size)


class _LogAxes:
    """Maps (d, rate) on log-log scales into the plot rectangle."""

    def __init__(self, xs: list[float], ys: list[float]) -> None:
        self.x0, self.x1 = math.log10(min(xs)), math.log10(max(xs))
        self.y0, self.y1 = math.log10(min(ys)), math.log10(max(ys))
        pad_x = 0.08 * max(self.x1 - self.x0, 0.1)
        pad_y = 0.08 * max(self.y1 - self.y0, 0.1)
        self.x0, self.x1 = self.x0 - pad_x, self.x1 + pad_x
        self.y0, self.y1 = self.y0 - pad_y, self.y1 + pad_y
        self.left, self.right = PADDING + 90, IMAGE_WIDTH - PADDING
        self.top, self.bottom = PLOT_TOP, PLOT_BOTTOM

    def point(self, x: float, y: float) -> tuple[float, float]:
        u = (math.log10(x) - self.x0) / (self.x1 - self.x0)
        v = (math.log10(y) - self.y0) / (self.y1 - self.y0)
        return self.left + u * (self.right - self.left), self.bottom - v * (self.bottom - self.top)


def generate_image(report: DeviationReport, title: str, output_path: Path, theme: ImageTheme) -> None:
    """Render the rate-vs-distance card to a PNG file. Pillow imported lazily on first use."""
    from PIL import Image, ImageDraw

    if not report.records:
        raise ValueError('report has no bands away from the waist to plot')

    text_rgb = _hex_to_rgb(theme.text)
    dim_rgb = _hex_to_rgb(theme.text_dimmed)
    grid_rgb = _hex_to_rgb(theme.grid)
    font_title = _load_font(TITLE_FONT_SIZE)
    font_body = _load_font(BODY_FONT_SIZE)
    font_small = _load_font(SMALL_FONT_SIZE)

    img = Image.new('RGB', (IMAGE_WIDTH, IMAGE_HEIGHT), _hex_to_rgb(theme.background))
    draw = ImageDraw.Draw(img)

    draw.text((PADDING, PADDING), title, font=font_title, fill=text_rgb)
    fit = report.fit
    subtitle = (
        f'rate ~ {fit.coeff:.4g} d^{fit.power:.3f}   expected power {report.expected_power:g}   '
        f'D = {report.sandwich_d:.3f}'
    )
    draw.text((PADDING, PADDING + 50), subtitle, font=font_body, fill=dim_rgb)

    ds = [r.inf_distance for r in report.records]
    rates = [r.rate for r in report.records if r.rate > 0]
    barriers = [r.barrier for r in report.records]
    axes = _LogAxes(ds, rates + barriers)

    for i in range(TICKS + 1):
        gx = axes.left + i * (axes.right - axes.left) / TICKS
        gy = axes.top + i * (axes.bottom - axes.top) / TICKS
        draw.line((gx, axes.top, gx, axes.bottom), fill=grid_rgb, width=1)
        draw.line((axes.left, gy, axes.right, gy), fill=grid_rgb, width=1)
        x_label = f'{10 ** (axes.x0 + i * (axes.x1 - axes.x0) / TICKS):.3g}'
        y_label = f'{10 ** (axes.y1 - i * (axes.y1 - axes.y0) / TICKS):.2e}'
        draw.text((gx - 18, axes.bottom + 10), x_label, font=font_small, fill=dim_rgb)
        draw.text((PADDING, gy - 8), y_label, font=font_small, fill=dim_rgb)

    lo, hi = 10**axes.x0, 10**axes.x1
    draw.line(
        (*axes.point(lo, fit.coeff * lo**fit.power), *axes.point(hi, fit.coeff * hi**fit.power)),
        fill=_hex_to_rgb(theme.fit),
        width=3,
    )
    for record in report.records:
        bx, by = axes.point(record.inf_distance, record.barrier)
        draw.rectangle(
            (bx - MARKER_RADIUS, by - MARKER_RADIUS, bx + MARKER_RADIUS, by + MARKER_RADIUS),
            outline=_hex_to_rgb(theme.barrier),
            width=2,
        )
        if record.rate > 0:
            rx, ry = axes.point(record.inf_distance, record.rate)
            draw.ellipse(
                (rx - MARKER_RADIUS, ry - MARKER_RADIUS, rx + MARKER_RADIUS, ry + MARKER_RADIUS),
                fill=_hex_to_rgb(theme.rate),
            )

    legend_y = IMAGE_HEIGHT - 80
    draw.text((PADDING, legend_y), 'o measured rate', font=font_body, fill=_hex_to_rgb(theme.rate))
    draw.text((PADDING + 260, legend_y), '[] barrier at band edge', font=font_body, fill=_hex_to_rgb(theme.barrier))
    draw.text((PADDING + 620, legend_y), '-- power-law fit', font=font_body, fill=_hex_to_rgb(theme.fit))
    draw.text((PADDING, legend_y + 32), 'distance to the waist (log)', font=font_small, fill=dim_rgb)

    attribution = f'waistlab v{__version__}'
    bbox = font_small.getbbox(attribution)
    draw.text((IMAGE_WIDTH - PADDING - (bbox[2] - bbox[0]), legend_y + 32), attribution, font=font_small, fill=dim_rgb)

    img.save(output_path, 'PNG')


def resolve_image_path(output_dir: Path, stem: str = 'ldp-card') -> Path:
    """output_dir/stem.png, or the first stem-N.png that does not exist yet."""
    output_dir.mkdir(parents=True, exist_ok=True)
    candidate = output_dir / f'{stem}.png'
    n = 1
    while candidate.exists():
        candidate = output_dir / f'{stem}-{n}.png'
        n += 1
    return candidate
