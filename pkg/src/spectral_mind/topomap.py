"""Scalp topography of per-channel scores rendered as a standalone SVG."""
from __future__ import annotations

import re

import numpy as np

# Channel order of the 22-electrode montage (frontal block first, then parieto-occipital).
MONTAGE_CHANNELS = (
    "F7", "AFF5h", "F3", "AFp1", "AFp2", "AFF6h", "F4", "F8", "AFF1h", "AFF2h",
    "Cz", "Pz", "T7", "C3", "P7", "P3", "POO1", "POO2", "P4", "P8", "C4", "T8",
)

# Approximate azimuthal projection of 10-05 positions onto the unit head disk
# (nose at +y, left hemisphere at -x, T7/T8 on the rim at radius 0.9).
# Display metadata only; not surveyed coordinates.
CHANNEL_POSITIONS: dict[str, tuple[float, float]] = {
    "F7": (-0.73, 0.53), "F8": (0.73, 0.53),
    "F3": (-0.36, 0.45), "F4": (0.36, 0.45),
    "AFF5h": (-0.45, 0.62), "AFF6h": (0.45, 0.62),
    "AFF1h": (-0.12, 0.60), "AFF2h": (0.12, 0.60),
    "AFp1": (-0.20, 0.80), "AFp2": (0.20, 0.80),
    "Cz": (0.0, 0.0), "C3": (-0.45, 0.0), "C4": (0.45, 0.0),
    "T7": (-0.90, 0.0), "T8": (0.90, 0.0),
    "Pz": (0.0, -0.45), "P3": (-0.36, -0.45), "P4": (0.36, -0.45),
    "P7": (-0.73, -0.53), "P8": (0.73, -0.53),
    "POO1": (-0.12, -0.80), "POO2": (0.12, -0.80),
}

# low -> mid -> high; red minus blue increases strictly along the ramp
_RAMP = ((49, 54, 149), (255, 255, 191), (215, 48, 39))


def colormap(t: float) -> tuple[int, int, int]:
    t = min(max(float(t), 0.0), 1.0)
    seg = 0 if t <= 0.5 else 1
    u = t * 2.0 - seg
    a, b = _RAMP[seg], _RAMP[seg + 1]
    return tuple(int(round(a[i] + (b[i] - a[i]) * u)) for i in range(3))


def _hex(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def idw(points: np.ndarray, values: np.ndarray, query: np.ndarray, power: float = 2.0) -> np.ndarray:
    """Inverse-distance-weighted interpolation; exact at the data points."""
    d2 = ((query[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    out = np.empty(len(query))
    hit = d2 < 1e-18
    exact = hit.any(axis=1)
    out[exact] = values[hit[exact].argmax(axis=1)]
    w = 1.0 / d2[~exact] ** (power / 2.0)
    out[~exact] = (w * values).sum(axis=1) / w.sum(axis=1)
    return out


def render_topomap(per_channel: dict[str, float], coords: dict[str, tuple[float, float]] | None = None,
                   title: str = "", grid: int = 48) -> str:
    coords = CHANNEL_POSITIONS if coords is None else coords
    if not per_channel:
        raise ValueError("no channel values to plot")
    names = list(per_channel)
    missing = [n for n in names if n not in coords]
    if missing:
        raise ValueError(f"missing coordinate for channel(s): {', '.join(missing)}")
    vals = np.array([float(per_channel[n]) for n in names])
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("channel values must lie in [0, 1]")
    pts = np.array([coords[n] for n in names], dtype=np.float64)
    vmin, vmax = float(vals.min()), float(vals.max())

    def norm(v):
        return 0.5 if vmax == vmin else (v - vmin) / (vmax - vmin)

    size, cx, cy, r = 400, 200.0, 210.0, 160.0
    cell = 2 * r / grid
    centers = (np.arange(grid) + 0.5) / grid * 2 - 1
    gx, gy = np.meshgrid(centers, -centers)
    q = np.column_stack([gx.ravel(), gy.ravel()])
    inside = (q ** 2).sum(axis=1) <= (1 + 1.0 / grid) ** 2
    field = np.full(len(q), np.nan)
    field[inside] = idw(pts, vals, q[inside])

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size + 70}" '
        f'viewBox="0 0 {size} {size + 70}">',
    ]
    if title:
        out.append(f'<text x="{cx:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{title}</text>')
    out.append(f'<defs><clipPath id="head"><circle cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}"/></clipPath></defs>')
    out.append('<g clip-path="url(#head)" shape-rendering="crispEdges">')
    for k in np.flatnonzero(inside):
        i, j = divmod(int(k), grid)
        x = cx - r + j * cell
        y = cy - r + i * cell
        out.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{cell + 0.05:.2f}" height="{cell + 0.05:.2f}" '
                   f'fill="{_hex(colormap(norm(field[k])))}"/>')
    out.append("</g>")
    out.append(f'<circle class="head" cx="{cx:.1f}" cy="{cy:.1f}" r="{r:.1f}" fill="none" '
               'stroke="black" stroke-width="2"/>')
    out.append(f'<polyline points="{cx - 14:.1f},{cy - r + 2:.1f} {cx:.1f},{cy - r - 18:.1f} '
               f'{cx + 14:.1f},{cy - r + 2:.1f}" fill="none" stroke="black" stroke-width="2"/>')
    for side in (-1, 1):
        ex = cx + side * (r + 6)
        out.append(f'<ellipse cx="{ex:.1f}" cy="{cy:.1f}" rx="6" ry="22" fill="none" '
                   'stroke="black" stroke-width="2"/>')
    for name, (px, py), v in zip(names, pts, vals):
        x, y = cx + px * r, cy - py * r
        out.append(f'<circle class="electrode" data-channel="{name}" data-value="{v:.6f}" '
                   f'cx="{x:.2f}" cy="{y:.2f}" r="4.5" fill="{_hex(colormap(norm(v)))}" '
                   'stroke="black" stroke-width="1"/>')
        out.append(f'<text class="label" x="{x:.2f}" y="{y - 7:.2f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="9">{name}</text>')
    # colour bar
    bx, by, bw, bh = 80.0, size + 25.0, 240.0, 12.0
    steps = 60
    for s in range(steps):
        out.append(f'<rect x="{bx + s * bw / steps:.2f}" y="{by:.1f}" width="{bw / steps + 0.05:.2f}" '
                   f'height="{bh:.1f}" fill="{_hex(colormap((s + 0.5) / steps))}"/>')
    for frac, v in ((0.0, vmin), (1.0, vmax)):
        out.append(f'<text x="{bx + frac * bw:.1f}" y="{by + bh + 14:.1f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{100 * v:.1f}%</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def electrode_colors(svg: str) -> dict[str, tuple[str, float]]:
    """Parse ``{channel: (fill, value)}`` back out of a rendered topomap."""
    pat = re.compile(r'class="electrode" data-channel="([^"]+)" data-value="([^"]+)"[^>]*fill="(#[0-9a-f]{6})"')
    return {m.group(1): (m.group(3), float(m.group(2))) for m in pat.finditer(svg)}

