import math
from typing import (
    Dict,
    List,
    Sequence,
    Tuple,
)


class Colors:
    PRIMARY = "#3273dc"
    SECONDARY = "#f14668"
    TERTIARY = "#48c774"
    QUATERNARY = "#ffdd57"
    AXIS = "#555"


PALETTE = (Colors.PRIMARY, Colors.SECONDARY, Colors.TERTIARY, Colors.QUATERNARY)

WIDTH = 480
HEIGHT = 320
PAD = 48


def _transform(values: Sequence[float], log: bool) -> List[float]:
    if log:
        return [math.log10(v) for v in values]
    return list(values)


def _scale(lo: float, hi: float, size: float, flip: bool):
    span = hi - lo or 1.0

    def apply(value: float) -> float:
        fraction = (value - lo) / span
        return PAD + (1 - fraction if flip else fraction) * size

    return apply


def line_plot(
    series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
    title: str,
    x_label: str = "r",
    y_label: str = "",
    log_x: bool = False,
    log_y: bool = False,
) -> str:
    """Polyline SVG of one or more (x, y) series. Log axes drop nonpositive points."""
    cleaned = {}
    for name, (xs, ys) in series.items():
        pairs = [
            (x, y)
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and (not log_x or x > 0) and (not log_y or y > 0)
        ]
        if pairs:
            px, py = zip(*pairs)
            cleaned[name] = (_transform(px, log_x), _transform(py, log_y))
    if not cleaned:
        raise ValueError(f"Nothing to plot for {title}")

    all_x = [x for xs, _ in cleaned.values() for x in xs]
    all_y = [y for _, ys in cleaned.values() for y in ys]
    sx = _scale(min(all_x), max(all_x), WIDTH - 2 * PAD, flip=False)
    sy = _scale(min(all_y), max(all_y), HEIGHT - 2 * PAD, flip=True)

    lines = []
    legend = []
    for index, (name, (xs, ys)) in enumerate(cleaned.items()):
        color = PALETTE[index % len(PALETTE)]
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        lines.append(f'  <polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}" />')
        legend.append(
            f'  <text x="{WIDTH - PAD}" y="{PAD + 14 * index}" fill="{color}" '
            f'text-anchor="end">{name}</text>'
        )
    x_caption = f"log10 {x_label}" if log_x else x_label
    y_caption = f"log10 {y_label}" if log_y else y_label
    body = "\n".join(lines + legend)

    return f"""<svg
  xmlns="http://www.w3.org/2000/svg"
  width="{WIDTH}"
  height="{HEIGHT}"
  role="img"
  aria-label="{title}"
  font-family="Verdana,Geneva,DejaVu Sans,sans-serif"
  font-size="11"
>
  <title>{title}</title>
  <rect width="{WIDTH}" height="{HEIGHT}" fill="#fff" />
  <line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="{Colors.AXIS}" />
  <line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="{Colors.AXIS}" />
  <text x="{WIDTH / 2}" y="{PAD / 2}" text-anchor="middle">{title}</text>
  <text x="{WIDTH / 2}" y="{HEIGHT - PAD / 4}" text-anchor="middle">{x_caption}</text>
  <text x="{PAD / 4}" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 {PAD / 4} {HEIGHT / 2})">{y_caption}</text>
  <text x="{PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle">{min(all_x):.3g}</text>
  <text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 14}" text-anchor="middle">{max(all_x):.3g}</text>
  <text x="{PAD - 4}" y="{HEIGHT - PAD}" text-anchor="end">{min(all_y):.3g}</text>
  <text x="{PAD - 4}" y="{PAD}" text-anchor="end">{max(all_y):.3g}</text>
{body}
</svg>
"""
