"""Visual mappings from a coordinate field to pixels.

All modes are pure per-pixel functions of the field raster.  Contour lines
are extracted directly in screen space: a pixel is on a line when its value's
distance to the nearest spacing multiple, divided by the local gradient
magnitude, is under half the line width.  That keeps the drawn width constant
in pixels no matter how stretched or compressed the mapped space is, and
needs no polyline tracing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from .field import CoordinateField

MODES = ("contour", "discrete", "discrete+contour", "adaptive", "gradient", "texture")

# 11-step sequential default (light yellow to deep blue).
DEFAULT_COLORMAP = [
    (255, 255, 217), (237, 248, 177), (199, 233, 180), (127, 205, 187),
    (65, 182, 196), (29, 145, 192), (34, 94, 168), (37, 52, 148),
    (8, 29, 88), (5, 15, 60), (2, 8, 40),
]
# Corner colors for the gradient mode cell blend: origin, +u, +v, +uv.
GRADIENT_CORNERS = [(56, 80, 200), (228, 110, 200), (90, 200, 225), (245, 245, 245)]


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class RenderSpec:
    mode: str = "contour"
    spacing: float = 1.0
    line_width_px: float = 1.5
    colormap: list = field(default_factory=lambda: list(DEFAULT_COLORMAP))
    gradient_corners: list = field(default_factory=lambda: list(GRADIENT_CORNERS))
    texture: np.ndarray | None = None
    line_color: tuple = (40, 40, 40, 255)
    background: tuple = (255, 255, 255, 255)
    point_radius: float = 2.5
    point_color: tuple = (20, 20, 20, 255)
    adaptive_target_px: float = 24.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise RenderError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.spacing <= 0:
            raise RenderError("spacing must be positive")
        if self.line_width_px <= 0:
            raise RenderError("line_width_px must be positive")
        if self.mode == "texture" and self.texture is None:
            raise RenderError("texture mode requires a texture image")


@dataclass
class RenderedImage:
    width: int
    height: int
    pixels: np.ndarray  # (h, w, 4) uint8

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.pixels, "RGBA").save(buf, format="PNG")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_png_bytes())


def _rgba(color) -> np.ndarray:
    c = list(color)
    if len(c) == 3:
        c.append(255)
    return np.array(c, dtype=float) / 255.0


def _flat(shape, color) -> np.ndarray:
    img = np.empty(shape + (4,), dtype=float)
    img[:] = _rgba(color)
    return img


def _over(base: np.ndarray, color, alpha: np.ndarray) -> np.ndarray:
    """Source-over composite of a flat color with per-pixel alpha."""
    src = _rgba(color)
    a = np.clip(alpha, 0.0, 1.0)[..., None] * src[3]
    base[..., :3] = base[..., :3] * (1.0 - a) + src[:3] * a
    base[..., 3:] = base[..., 3:] * (1.0 - a) + a
    return base


def _to_image(img: np.ndarray) -> RenderedImage:
    px = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return RenderedImage(width=px.shape[1], height=px.shape[0], pixels=px)


def _channel_values(fld: CoordinateField):
    for ch in range(fld.active_channels):
        yield fld.coords[..., ch]


def _gradient_magnitudes(fld: CoordinateField) -> np.ndarray:
    """Per-channel length of the screen-space gradient, value units per pixel."""
    jac = fld.jacobian()
    return np.hypot(jac[..., 0], jac[..., 1])  # (h, w, 2)


def line_coverage(fld: CoordinateField, spacing: float, line_width_px: float) -> np.ndarray:
    """Anti-aliased coverage of isolines at every multiple of ``spacing``,
    combined over the active channels."""
    grads = _gradient_magnitudes(fld)
    cov = np.zeros(fld.coords.shape[:2])
    for ch, vals in enumerate(_channel_values(fld)):
        dist = np.abs(vals - spacing * np.round(vals / spacing))
        g = grads[..., ch]
        px = np.where(g > 1e-30, dist / np.where(g > 1e-30, g, 1.0), np.inf)
        cov = np.maximum(cov, np.clip(0.5 * line_width_px + 0.5 - px, 0.0, 1.0))
    return cov


def render_contours(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    img = _flat(fld.coords.shape[:2], spec.background)
    _over(img, spec.line_color, line_coverage(fld, spec.spacing, spec.line_width_px))
    return _to_image(img)


def _band_indices(fld: CoordinateField, spacing: float) -> np.ndarray:
    bands = np.floor(fld.coords[..., 0] / spacing).astype(np.int64)
    if fld.active_channels == 2:
        bands = bands + np.floor(fld.coords[..., 1] / spacing).astype(np.int64)
    return bands


def render_discrete(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    table = np.array([_rgba(c) for c in spec.colormap])
    bands = _band_indices(fld, spec.spacing)
    img = table[np.mod(bands, len(table))]
    if spec.mode == "discrete+contour":
        _over(img, spec.line_color, line_coverage(fld, spec.spacing, spec.line_width_px))
    return _to_image(img)


def adaptive_family_opacity(
    fld: CoordinateField, spec: RenderSpec, octaves=range(-3, 4)
) -> dict[int, np.ndarray]:
    """Per-octave opacity: a smooth ramp of the on-screen pixel distance
    between that family's successive isolines (full at target_px, gone at a
    quarter of it).  Channel 0 drives the density estimate."""
    g = _gradient_magnitudes(fld)[..., 0]
    out = {}
    lo = spec.adaptive_target_px / 4.0
    hi = spec.adaptive_target_px
    for k in octaves:
        s = spec.spacing * (2.0**k)
        px_between = np.where(g > 1e-30, s / np.where(g > 1e-30, g, 1.0), np.inf)
        t = np.clip((px_between - lo) / (hi - lo), 0.0, 1.0)
        out[k] = t * t * (3.0 - 2.0 * t)
    return out


def render_adaptive(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    img = _flat(fld.coords.shape[:2], spec.background)
    opacity = adaptive_family_opacity(fld, spec)
    remaining = np.ones(fld.coords.shape[:2])
    for k in sorted(opacity, reverse=True):  # coarse families first
        cov = line_coverage(fld, spec.spacing * (2.0**k), spec.line_width_px)
        a = cov * opacity[k]
        remaining = remaining * (1.0 - a)
    _over(img, spec.line_color, 1.0 - remaining)
    return _to_image(img)


def corner_blend(fu: np.ndarray, fv: np.ndarray, corners) -> np.ndarray:
    """Bilinear blend of the four cell-corner colors at fractional (fu, fv)."""
    c00, c10, c01, c11 = (_rgba(c) for c in corners)
    fu = np.asarray(fu, dtype=float)[..., None]
    fv = np.asarray(fv, dtype=float)[..., None]
    return (
        (1 - fu) * (1 - fv) * c00
        + fu * (1 - fv) * c10
        + (1 - fu) * fv * c01
        + fu * fv * c11
    )


def render_gradient(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    if fld.active_channels != 2:
        raise RenderError("gradient mode requires a two-dimensional target")
    fu = np.mod(fld.coords[..., 0] / spec.spacing, 1.0)
    fv = np.mod(fld.coords[..., 1] / spec.spacing, 1.0)
    img = corner_blend(fu, fv, spec.gradient_corners)
    _over(img, spec.line_color, line_coverage(fld, spec.spacing, spec.line_width_px))
    return _to_image(img)


def _bilinear_wrap(tex: np.ndarray, tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    th, tw = tex.shape[:2]
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    ax = tx - x0
    ay = ty - y0
    x1 = np.mod(x0 + 1, tw)
    y1 = np.mod(y0 + 1, th)
    x0 = np.mod(x0, tw)
    y0 = np.mod(y0, th)
    t = tex.astype(float) / 255.0
    out = (
        t[y0, x0] * ((1 - ax) * (1 - ay))[..., None]
        + t[y0, x1] * (ax * (1 - ay))[..., None]
        + t[y1, x0] * ((1 - ax) * ay)[..., None]
        + t[y1, x1] * (ax * ay)[..., None]
    )
    return out


def render_texture(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    tex = spec.texture
    if tex.ndim == 2:
        tex = np.stack([tex] * 3, axis=-1)
    if tex.shape[2] == 3:
        tex = np.concatenate([tex, np.full(tex.shape[:2] + (1,), 255, tex.dtype)], axis=2)
    fu = np.mod(fld.coords[..., 0] / spec.spacing, 1.0)
    fv = np.mod(fld.coords[..., 1] / spec.spacing, 1.0)
    tx = fu * tex.shape[1] - 0.5
    ty = fv * tex.shape[0] - 0.5
    return _to_image(_bilinear_wrap(tex, tx, ty))


def overlay_points(img: RenderedImage, positions, transform, spec: RenderSpec) -> RenderedImage:
    """Anti-aliased discs at the projected point positions."""
    base = img.pixels.astype(float) / 255.0
    h, w = base.shape[:2]
    r = spec.point_radius
    pix = transform.to_pixels(np.asarray(positions, dtype=float).reshape(-1, 2))
    for px, py in pix:
        if not (-r - 1 <= px <= w + r and -r - 1 <= py <= h + r):
            continue  # outside the raster; skip defensively
        c0 = max(0, int(np.floor(px - r - 1)))
        c1 = min(w - 1, int(np.ceil(px + r + 1)))
        r0 = max(0, int(np.floor(py - r - 1)))
        r1 = min(h - 1, int(np.ceil(py + r + 1)))
        if c0 > c1 or r0 > r1:
            continue
        yy, xx = np.mgrid[r0 : r1 + 1, c0 : c1 + 1]
        dist = np.hypot(xx - px, yy - py)
        cov = np.clip(r + 0.5 - dist, 0.0, 1.0)
        patch = base[r0 : r1 + 1, c0 : c1 + 1]
        _over(patch, spec.point_color, cov)
    return _to_image(base)


def point_mask(img_shape, positions, transform, spec: RenderSpec) -> np.ndarray:
    """Boolean mask of pixels covered by the point overlay (for comparisons)."""
    h, w = img_shape
    mask = np.zeros((h, w), dtype=bool)
    r = spec.point_radius
    pix = transform.to_pixels(np.asarray(positions, dtype=float).reshape(-1, 2))
    yy, xx = np.mgrid[0:h, 0:w]
    for px, py in pix:
        mask |= np.hypot(xx - px, yy - py) <= r + 0.5
    return mask


def render(fld: CoordinateField, spec: RenderSpec) -> RenderedImage:
    if spec.mode == "contour":
        return render_contours(fld, spec)
    if spec.mode in ("discrete", "discrete+contour"):
        return render_discrete(fld, spec)
    if spec.mode == "adaptive":
        return render_adaptive(fld, spec)
    if spec.mode == "gradient":
        return render_gradient(fld, spec)
    if spec.mode == "texture":
        return render_texture(fld, spec)
    raise RenderError(f"unknown mode {spec.mode!r}")


def render_legend(fld: CoordinateField, spec: RenderSpec, width: int = 72) -> RenderedImage:
    """Vertical value-to-color strip for channel 0, max at the top."""
    h = fld.height
    vals = np.linspace(
        fld.coords[..., 0].max(), fld.coords[..., 0].min(), h
    )[:, None].repeat(width, axis=1)
    if spec.mode in ("discrete", "discrete+contour"):
        table = np.array([_rgba(c) for c in spec.colormap])
        img = table[np.mod(np.floor(vals / spec.spacing).astype(np.int64), len(table))]
    elif spec.mode == "gradient":
        img = corner_blend(np.mod(vals / spec.spacing, 1.0), np.zeros_like(vals), spec.gradient_corners)
    else:
        img = _flat(vals.shape, spec.background)
    on_line = np.abs(vals - spec.spacing * np.round(vals / spec.spacing))
    step = abs(vals[0, 0] - vals[-1, 0]) / max(h - 1, 1)
    _over(img, spec.line_color, np.clip(1.0 - on_line / max(step, 1e-30), 0.0, 1.0))

    pil = Image.fromarray(np.clip(np.rint(img * 255), 0, 255).astype(np.uint8), "RGBA")
    draw = ImageDraw.Draw(pil)
    draw.text((3, 2), f"{vals[0, 0]:.3g}", fill=(0, 0, 0, 255))
    draw.text((3, h - 12), f"{vals[-1, 0]:.3g}", fill=(0, 0, 0, 255))
    draw.text((3, h // 2), f"step {spec.spacing:.3g}", fill=(0, 0, 0, 255))
    return RenderedImage(width=width, height=h, pixels=np.array(pil))


def attach_legend(img: RenderedImage, legend: RenderedImage) -> RenderedImage:
    if legend.height != img.height:
        raise RenderError("legend height must match the image")
    return RenderedImage(
        width=img.width + legend.width,
        height=img.height,
        pixels=np.concatenate([img.pixels, legend.pixels], axis=1),
    )
