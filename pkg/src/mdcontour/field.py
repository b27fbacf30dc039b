"""Per-pixel Moving Least Squares mapping from screen space to target values.

Each pixel of the output raster is mapped from the distorted point layout
(control points ``p_i``) back to target coordinates (``q_i``): either the
undistorted projection coordinates or the values of one or two selected data
dimensions.  Weights fall off as an inverse power of distance, so control
points are reproduced exactly and the field is smooth everywhere else.

The three MLS variants trade smoothness against rigidity: ``mean`` blends
displacements, ``affine`` solves a weighted least-squares linear map per
pixel, ``rigid`` restricts that map to rotation plus translation.  ``linear``
is plain barycentric interpolation over the mesh triangles, kept as the fast
baseline.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dataset import Dataset
from .mesh import TriMesh
from .projection import expand_bounds

VARIANTS = ("linear", "mean", "affine", "rigid")
DEFAULT_ALPHA = {"linear": 1.0, "mean": 1.0, "affine": 1.5, "rigid": 1.0}
ALPHA_RANGE = (0.25, 3.0)


class FieldError(Exception):
    pass


class DegenerateRotation(FieldError):
    """Rigid solve collapsed (zero rotation estimate) at the sample point."""


class AtControlPoint:
    """Sentinel for samples inside the snap radius of a control point."""

    def __repr__(self):  # pragma: no cover
        return "AtControlPoint"


AT_CONTROL_POINT = AtControlPoint()


@dataclass(frozen=True)
class MlsParams:
    variant: str = "affine"
    alpha: float | None = None     # None: per-variant default
    epsilon_dist: float | None = None  # None: (1/4 pixel)^2, set by compute_field
    reg_eps: float = 1e-12         # scaled by the moment-matrix trace

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        a = self.resolved_alpha
        if not 0.1 < a <= 4.0:
            raise ValueError(f"alpha must be in (0.1, 4.0], got {a}")
        if self.reg_eps <= 0:
            raise ValueError("reg_eps must be positive")
        if self.epsilon_dist is not None and self.epsilon_dist <= 0:
            raise ValueError("epsilon_dist must be positive")

    @property
    def resolved_alpha(self) -> float:
        return DEFAULT_ALPHA[self.variant] if self.alpha is None else self.alpha


@dataclass(frozen=True)
class TargetAssignment:
    """Per-node target coordinates plus a tag saying what they mean."""

    targets: np.ndarray            # (n, 2)
    mode: str                      # "projection" or "dims"
    dims: tuple[str, ...] = ()

    def __post_init__(self):
        if not np.all(np.isfinite(self.targets)):
            raise FieldError("target coordinates must be finite")

    @property
    def active_channels(self) -> int:
        return 1 if self.mode == "dims" and len(self.dims) == 1 else 2


def projection_targets(mesh: TriMesh) -> TargetAssignment:
    return TargetAssignment(targets=mesh.original_pos.copy(), mode="projection")


def dimension_targets(ds: Dataset, dim_a: str, dim_b: str | None = None) -> TargetAssignment:
    """Targets from one or two raw data dimensions; a single dimension fills
    the second coordinate with zeros."""
    a = ds.raw_column(dim_a)
    if dim_b is None:
        return TargetAssignment(
            targets=np.column_stack([a, np.zeros_like(a)]), mode="dims", dims=(dim_a,)
        )
    b = ds.raw_column(dim_b)
    return TargetAssignment(targets=np.column_stack([a, b]), mode="dims", dims=(dim_a, dim_b))


@dataclass(frozen=True)
class ViewportTransform:
    """Affine map between pixel indices and projection-space coordinates.

    Pixel (0, 0) is the top-left; its center maps near the top-left corner of
    the viewport (y axis flipped, as in image conventions).
    """

    x0: float
    y0: float
    x1: float
    y1: float
    width: int
    height: int

    @property
    def units_per_px(self) -> tuple[float, float]:
        return ((self.x1 - self.x0) / self.width, (self.y1 - self.y0) / self.height)

    def pixel_center_grids(self) -> tuple[np.ndarray, np.ndarray]:
        sx, sy = self.units_per_px
        xs = self.x0 + (np.arange(self.width) + 0.5) * sx
        ys = self.y1 - (np.arange(self.height) + 0.5) * sy
        return np.meshgrid(xs, ys)

    def to_pixels(self, points: np.ndarray) -> np.ndarray:
        sx, sy = self.units_per_px
        px = (points[:, 0] - self.x0) / sx - 0.5
        py = (self.y1 - points[:, 1]) / sy - 0.5
        return np.column_stack([px, py])

    @classmethod
    def fit(cls, points: np.ndarray, width: int, height: int) -> "ViewportTransform":
        x0, y0, x1, y1 = expand_bounds(points)
        return cls(x0, y0, x1, y1, width, height)


@dataclass
class CoordinateField:
    width: int
    height: int
    coords: np.ndarray             # (height, width, 2)
    source_positions: np.ndarray   # the control points p_i
    transform: ViewportTransform
    active_channels: int = 2

    def jacobian(self) -> np.ndarray:
        """Finite-difference d(coords)/d(pixel): shape (h, w, 2, 2) with
        entry [..., i, j] = d coord_i / d pixel_j (j=0 along x, j=1 along y)."""
        dy, dx = np.gradient(self.coords, axis=(0, 1))
        out = np.empty(self.coords.shape[:2] + (2, 2))
        out[..., 0] = dx
        out[..., 1] = dy
        return out


def field_gradient(fld: CoordinateField, x: int, y: int) -> np.ndarray:
    """Jacobian of the stored coordinates at one pixel (central differences,
    one-sided on the borders)."""
    c = fld.coords

    def diff(axis: int, idx: int, limit: int):
        if 0 < idx < limit - 1:
            lo = idx - 1
            hi = idx + 1
            scale = 0.5
        else:
            lo = max(idx - 1, 0)
            hi = min(idx + 1, limit - 1)
            scale = 1.0
        if axis == 0:
            return scale * (c[y, hi] - c[y, lo])
        return scale * (c[hi, x] - c[lo, x])

    out = np.empty((2, 2))
    out[:, 0] = diff(0, x, fld.width)
    out[:, 1] = diff(1, y, fld.height)
    return out


def mls_weight(v, pi, alpha: float, epsilon_dist: float = 1e-18):
    """Inverse-power distance weight; the sentinel marks the w->inf limit."""
    d = np.asarray(pi, dtype=float) - np.asarray(v, dtype=float)
    d2 = float(d @ d)
    if d2 < epsilon_dist:
        return AT_CONTROL_POINT
    return d2 ** (-alpha)


def _snap_index(v, controls_p, epsilon_dist: float) -> int | None:
    d2 = np.einsum("ij,ij->i", controls_p - v, controls_p - v)
    i = int(np.argmin(d2))
    return i if d2[i] < epsilon_dist else None


def _weights(v, controls_p, alpha: float) -> np.ndarray:
    d2 = np.einsum("ij,ij->i", controls_p - v, controls_p - v)
    return _inv_pow(d2, alpha)


def mean_mls(v, controls_p, controls_q, params: MlsParams) -> np.ndarray:
    """Weighted-average displacement: v plus the blended q_i - p_i."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(controls_p, dtype=float)
    q = np.asarray(controls_q, dtype=float)
    eps = params.epsilon_dist if params.epsilon_dist is not None else 1e-18
    hit = _snap_index(v, p, eps)
    if hit is not None:
        return q[hit].copy()
    w = _weights(v, p, params.resolved_alpha)
    return v + (w @ (q - p)) / w.sum()


def affine_mls(v, controls_p, controls_q, params: MlsParams) -> np.ndarray:
    """Optimal weighted affine map through the controls, evaluated at v."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(controls_p, dtype=float)
    q = np.asarray(controls_q, dtype=float)
    eps = params.epsilon_dist if params.epsilon_dist is not None else 1e-18
    hit = _snap_index(v, p, eps)
    if hit is not None:
        return q[hit].copy()
    w = _weights(v, p, params.resolved_alpha)
    sw = w.sum()
    pstar = (w @ p) / sw
    qstar = (w @ q) / sw
    phat = p - pstar
    qhat = q - qstar
    a = np.einsum("i,ij,ik->jk", w, phat, phat)
    b = np.einsum("i,ij,ik->jk", w, phat, qhat)
    a += params.reg_eps * np.trace(a) * np.eye(2)
    m = np.linalg.solve(a, b)
    return (v - pstar) @ m + qstar


def rigid_mls(v, controls_p, controls_q, params: MlsParams) -> np.ndarray:
    """Optimal weighted rotation+translation through the controls."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(controls_p, dtype=float)
    q = np.asarray(controls_q, dtype=float)
    eps = params.epsilon_dist if params.epsilon_dist is not None else 1e-18
    hit = _snap_index(v, p, eps)
    if hit is not None:
        return q[hit].copy()
    w = _weights(v, p, params.resolved_alpha)
    sw = w.sum()
    pstar = (w @ p) / sw
    qstar = (w @ q) / sw
    phat = p - pstar
    qhat = q - qstar
    d = v - pstar
    pd = phat @ d                                 # p-hat . delta
    pxd = phat[:, 0] * d[1] - phat[:, 1] * d[0]   # p-hat x delta
    fx = float(w @ (qhat[:, 0] * pd - qhat[:, 1] * pxd))
    fy = float(w @ (qhat[:, 0] * pxd + qhat[:, 1] * pd))
    norm = float(np.hypot(fx, fy))
    if norm < 1e-12:
        raise DegenerateRotation("rigid MLS rotation estimate vanished")
    r = float(np.hypot(*d))
    return np.array([fx, fy]) * (r / norm) + qstar


# ---------------------------------------------------------------------------
# Vectorized per-pixel evaluation


def _inv_pow(d2: np.ndarray, alpha: float) -> np.ndarray:
    """d2 ** -alpha with cheap paths for the common half-integer exponents."""
    if alpha == 1.0:
        return 1.0 / d2
    if alpha == 2.0:
        return 1.0 / (d2 * d2)
    if alpha == 0.5:
        return 1.0 / np.sqrt(d2)
    if alpha == 1.5:
        return 1.0 / (d2 * np.sqrt(d2))
    return d2 ** (-alpha)


def _block_weights(vx, vy, px, py, alpha):
    """Weights for a block of samples against all controls, plus each
    sample's nearest control (for the snap path).

    |p - v|^2 is built by the expanded form so the cross term is one BLAS
    matmul, then finished in place.  Cancellation noise (~1e-14 absolute)
    only matters below the snap radius, where the sentinel overwrites the
    result anyway.
    """
    d2 = np.column_stack([vx, vy]) @ np.stack([px, py])
    d2 *= -2.0
    d2 += (vx * vx + vy * vy)[:, None]
    d2 += (px * px + py * py)[None, :]
    np.maximum(d2, 1e-300, out=d2)
    if alpha == 1.0:
        return np.reciprocal(d2, out=d2)  # d2 no longer needed
    return _inv_pow(d2, alpha)


def _mean_block(vx, vy, p, q, alpha, reg_eps):
    w = _block_weights(vx, vy, p[:, 0], p[:, 1], alpha)
    k = np.column_stack([np.ones(len(p)), q - p])
    mm = w @ k
    return np.column_stack([vx + mm[:, 1] / mm[:, 0], vy + mm[:, 2] / mm[:, 0]])


def _wls_moments(vx, vy, p, q, alpha):
    """All weighted sums both solvers need, as one gemm against a per-call
    moment matrix: columns 1, p, q, and the p*p / p*q second-order products."""
    px, py = p[:, 0], p[:, 1]
    qx, qy = q[:, 0], q[:, 1]
    w = _block_weights(vx, vy, px, py, alpha)
    k = np.column_stack(
        [np.ones(len(p)), px, py, qx, qy,
         px * px, px * py, py * py,
         px * qx, px * qy, py * qx, py * qy]
    )
    mm = w @ k
    sw = mm[:, 0]
    psx, psy = mm[:, 1] / sw, mm[:, 2] / sw
    qsx, qsy = mm[:, 3] / sw, mm[:, 4] / sw
    # Centered second moments: sum w (p - p*)(p - p*) etc., via the shifted
    # products (inputs are globally pre-centered, so this stays accurate).
    a00 = mm[:, 5] - psx * mm[:, 1]
    a01 = mm[:, 6] - psx * mm[:, 2]
    a11 = mm[:, 7] - psy * mm[:, 2]
    b00 = mm[:, 8] - qsx * mm[:, 1]
    b01 = mm[:, 9] - qsy * mm[:, 1]
    b10 = mm[:, 10] - qsx * mm[:, 2]
    b11 = mm[:, 11] - qsy * mm[:, 2]
    cen = (psx, psy, qsx, qsy)
    return w, sw, cen, (a00, a01, a11), (b00, b01, b10, b11)


def _affine_block(vx, vy, p, q, alpha, reg_eps):
    w, sw, cen, amat, bmat = _wls_moments(vx, vy, p, q, alpha)
    psx, psy, qsx, qsy = cen
    a00, a01, a11 = amat
    b00, b01, b10, b11 = bmat
    reg = reg_eps * (a00 + a11)
    a00 = a00 + reg
    a11 = a11 + reg
    det = a00 * a11 - a01 * a01
    m00 = (a11 * b00 - a01 * b10) / det
    m01 = (a11 * b01 - a01 * b11) / det
    m10 = (a00 * b10 - a01 * b00) / det
    m11 = (a00 * b11 - a01 * b01) / det
    dx = vx - psx
    dy = vy - psy
    return np.column_stack([dx * m00 + dy * m10 + qsx, dx * m01 + dy * m11 + qsy])


def _rigid_block(vx, vy, p, q, alpha, reg_eps):
    w, sw, cen, amat, bmat = _wls_moments(vx, vy, p, q, alpha)
    psx, psy, qsx, qsy = cen
    b00, b01, b10, b11 = bmat
    dx = vx - psx
    dy = vy - psy
    # f'(v) collapses to a similarity applied to (v - p*):
    # fx + i fy = (dx + i dy) * (s - i d), s = b00 + b11, d = b10 - b01.
    s = b00 + b11
    d = b10 - b01
    fx = dx * s + dy * d
    fy = dy * s - dx * d
    norm = np.hypot(fx, fy)
    degen = norm < 1e-12
    norm_safe = np.where(degen, 1.0, norm)
    r = np.hypot(dx, dy)
    out = np.column_stack([fx, fy]) * (r / norm_safe)[:, None]
    out[:, 0] += qsx
    out[:, 1] += qsy
    if degen.any():
        # Per-pixel fallback to the mean blend where the rotation vanished.
        disp = (w[degen] @ (q - p)) / sw[degen, None]
        out[degen] = np.column_stack([vx[degen], vy[degen]]) + disp
    return out


_BLOCKS = {"mean": _mean_block, "affine": _affine_block, "rigid": _rigid_block}


def _snap_control_pixels(coords, positions, tvals, transform: ViewportTransform, eps):
    """Stamp exact targets onto pixels whose centers sit within the snap
    radius of a control point (nearest control wins ties).

    Only pixels inside a sqrt(eps) disk around some control can snap, so this
    walks a few pixels per control instead of testing every (pixel, control)
    pair; it also repairs any overflow the raw weights produced there.
    """
    h, w = coords.shape[:2]
    sx, sy = transform.units_per_px
    rx = int(np.ceil(np.sqrt(eps) / sx)) + 1
    ry = int(np.ceil(np.sqrt(eps) / sy)) + 1
    xs = transform.x0 + (np.arange(w) + 0.5) * sx
    ys = transform.y1 - (np.arange(h) + 0.5) * sy
    best = {}
    pix = transform.to_pixels(positions)
    for i, (pxf, pyf) in enumerate(pix):
        cx = int(round(pxf))
        cy = int(round(pyf))
        for yy in range(max(0, cy - ry), min(h, cy + ry + 1)):
            for xx in range(max(0, cx - rx), min(w, cx + rx + 1)):
                d2 = (xs[xx] - positions[i, 0]) ** 2 + (ys[yy] - positions[i, 1]) ** 2
                if d2 < eps and d2 < best.get((yy, xx), np.inf):
                    best[(yy, xx)] = d2
                    coords[yy, xx] = tvals[i]


def triangle_neighbors(tris: np.ndarray) -> np.ndarray:
    """Neighbor triangle across the edge opposite each vertex (-1 on the hull)."""
    owner: dict[tuple[int, int], tuple[int, int]] = {}
    nbrs = np.full((len(tris), 3), -1, dtype=np.int64)
    for t, (a, b, c) in enumerate(tris):
        for k, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (u, v) if u < v else (v, u)
            if key in owner:
                ot, ok = owner.pop(key)
                nbrs[t, k] = ot
                nbrs[ot, ok] = t
            else:
                owner[key] = (t, k)
    return nbrs


def _barycentric(pt, a, b, c):
    det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if det == 0.0:
        return None
    l1 = ((b[0] - pt[0]) * (c[1] - pt[1]) - (b[1] - pt[1]) * (c[0] - pt[0])) / det
    l2 = ((c[0] - pt[0]) * (a[1] - pt[1]) - (c[1] - pt[1]) * (a[0] - pt[0])) / det
    return l1, l2, 1.0 - l1 - l2


def _hull_edges(tris: np.ndarray) -> list[tuple[int, int, int]]:
    """(u, v, triangle) for each boundary edge."""
    counts: dict[tuple[int, int], list] = {}
    for t, (a, b, c) in enumerate(tris):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            counts.setdefault(key, []).append(t)
    return [(u, v, owners[0]) for (u, v), owners in counts.items() if len(owners) == 1]


def _nearest_hull_triangle(pt, positions, hull, squared=False):
    best = None
    best_d = np.inf
    for u, v, t in hull:
        a, b = positions[u], positions[v]
        e = b - a
        ee = float(e @ e)
        s = 0.0 if ee == 0.0 else float(np.clip(((pt - a) @ e) / ee, 0.0, 1.0))
        d = pt - (a + s * e)
        d2 = float(d @ d)
        if d2 < best_d:
            best_d = d2
            best = t
    return best


def linear_interp(v, mesh: TriMesh, targets: TargetAssignment, positions: np.ndarray | None = None) -> np.ndarray:
    """Barycentric blend of the containing triangle's targets; outside the
    hull, the nearest hull triangle's affine map is extended."""
    v = np.asarray(v, dtype=float)
    pos = mesh.current_pos if positions is None else positions
    tris = mesh.triangles
    nbrs = triangle_neighbors(tris)
    tvals = targets.targets

    t = 0
    for _ in range(4 * len(tris) + 16):
        a, b, c = pos[tris[t, 0]], pos[tris[t, 1]], pos[tris[t, 2]]
        bar = _barycentric(v, a, b, c)
        if bar is None:
            break
        l1, l2, l3 = bar
        lams = (l1, l2, l3)
        worst = int(np.argmin(lams))
        if lams[worst] >= -1e-12:
            return l1 * tvals[tris[t, 0]] + l2 * tvals[tris[t, 1]] + l3 * tvals[tris[t, 2]]
        nxt = nbrs[t, worst]
        if nxt < 0:
            break
        t = nxt

    t = _nearest_hull_triangle(v, pos, _hull_edges(tris))
    a, b, c = pos[tris[t, 0]], pos[tris[t, 1]], pos[tris[t, 2]]
    l1, l2, l3 = _barycentric(v, a, b, c)
    return l1 * tvals[tris[t, 0]] + l2 * tvals[tris[t, 1]] + l3 * tvals[tris[t, 2]]


def _linear_field(positions, tvals, tris, transform: ViewportTransform) -> np.ndarray:
    w, h = transform.width, transform.height
    sx, sy = transform.units_per_px
    if _kernels.HAVE_NUMBA:
        out = np.empty((h, w, 2))
        assigned = np.zeros((h, w), dtype=np.bool_)
        _kernels.rasterize_linear(
            positions, tvals, tris, transform.x0, transform.y1, sx, sy, out, assigned
        )
        if not assigned.all():
            hull = _hull_edges(tris)
            _kernels.extend_hull(
                positions, tvals, tris,
                np.array([u for u, _, _ in hull], dtype=np.int64),
                np.array([v for _, v, _ in hull], dtype=np.int64),
                np.array([t for _, _, t in hull], dtype=np.int64),
                transform.x0, transform.y1, sx, sy, out, assigned,
            )
        return out

    xs, ys = transform.pixel_center_grids()
    out = np.full((h, w, 2), np.nan)

    for t, (ia, ib, ic) in enumerate(tris):
        a, b, c = positions[ia], positions[ib], positions[ic]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if det == 0.0:
            continue
        x_lo = min(a[0], b[0], c[0])
        x_hi = max(a[0], b[0], c[0])
        y_lo = min(a[1], b[1], c[1])
        y_hi = max(a[1], b[1], c[1])
        c0 = max(0, int(np.floor((x_lo - transform.x0) / sx - 0.5)))
        c1 = min(w - 1, int(np.ceil((x_hi - transform.x0) / sx)))
        r0 = max(0, int(np.floor((transform.y1 - y_hi) / sy - 0.5)))
        r1 = min(h - 1, int(np.ceil((transform.y1 - y_lo) / sy)))
        if c0 > c1 or r0 > r1:
            continue
        gx = xs[r0 : r1 + 1, c0 : c1 + 1]
        gy = ys[r0 : r1 + 1, c0 : c1 + 1]
        l1 = ((b[0] - gx) * (c[1] - gy) - (b[1] - gy) * (c[0] - gx)) / det
        l2 = ((c[0] - gx) * (a[1] - gy) - (c[1] - gy) * (a[0] - gx)) / det
        l3 = 1.0 - l1 - l2
        inside = (l1 >= -1e-12) & (l2 >= -1e-12) & (l3 >= -1e-12)
        patch = out[r0 : r1 + 1, c0 : c1 + 1]
        fill = inside & np.isnan(patch[..., 0])
        if not fill.any():
            continue
        vals = (
            l1[..., None] * tvals[ia] + l2[..., None] * tvals[ib] + l3[..., None] * tvals[ic]
        )
        patch[fill] = vals[fill]

    missing = np.isnan(out[..., 0])
    if missing.any():
        hull = _hull_edges(tris)
        rows, cols = np.nonzero(missing)
        pts = np.column_stack([xs[rows, cols], ys[rows, cols]])
        # Distance from every missing pixel to every hull segment.
        aa = positions[[u for u, _, _ in hull]]
        bb = positions[[v for _, v, _ in hull]]
        tt = np.array([t for _, _, t in hull])
        e = bb - aa
        ee = np.einsum("ij,ij->i", e, e)
        ee[ee == 0.0] = 1.0
        s = np.clip(
            np.einsum("mej->me", (pts[:, None, :] - aa[None, :, :]) * e[None, :, :]) / ee[None, :],
            0.0,
            1.0,
        )
        proj = aa[None, :, :] + s[..., None] * e[None, :, :]
        d2 = ((pts[:, None, :] - proj) ** 2).sum(axis=2)
        tri_idx = tt[np.argmin(d2, axis=1)]
        for r, cidx, t in zip(rows, cols, tri_idx):
            ia, ib, ic = tris[t]
            bar = _barycentric(
                np.array([xs[r, cidx], ys[r, cidx]]),
                positions[ia],
                positions[ib],
                positions[ic],
            )
            out[r, cidx] = bar[0] * tvals[ia] + bar[1] * tvals[ib] + bar[2] * tvals[ic]
    return out


def compute_field(
    mesh: TriMesh,
    positions: np.ndarray,
    targets: TargetAssignment,
    params: MlsParams,
    width: int,
    height: int,
    threads: int = 1,
) -> CoordinateField:
    """Evaluate the chosen variant at every pixel center of a width x height
    raster whose viewport is the padded bounding box of ``positions``."""
    if params.variant == "rigid" and targets.active_channels == 1:
        raise FieldError("rigid MLS is degenerate for single-dimension targets; "
                         "use mean or affine")
    transform = ViewportTransform.fit(positions, width, height)
    tvals = targets.targets.astype(float)

    if params.variant == "linear":
        coords = _linear_field(positions, tvals, mesh.triangles, transform)
    else:
        eps = params.epsilon_dist
        if eps is None:
            eps = (0.25 * max(transform.units_per_px)) ** 2
        # Evaluate around the data centroids; the variants are all
        # translation-equivariant and the moment sums stay well conditioned.
        pm = positions.mean(axis=0)
        qm = tvals.mean(axis=0)
        pc = positions - pm
        qc = tvals - qm
        xs, ys = transform.pixel_center_grids()
        vx = xs.ravel() - pm[0]
        vy = ys.ravel() - pm[1]
        alpha = params.resolved_alpha
        out = np.empty((height * width, 2))
        if _kernels.HAVE_NUMBA:
            _kernels.set_threads(threads)
            if params.variant == "mean":
                dq = qc - pc
                _kernels.mean_field(vx, vy, pc[:, 0], pc[:, 1], dq[:, 0], dq[:, 1], alpha, out)
            elif params.variant == "affine":
                _kernels.affine_field(
                    vx, vy, pc[:, 0], pc[:, 1], qc[:, 0], qc[:, 1], alpha, params.reg_eps, out
                )
            else:
                _kernels.rigid_field(vx, vy, pc[:, 0], pc[:, 1], qc[:, 0], qc[:, 1], alpha, out)
        else:
            block = _BLOCKS[params.variant]
            n = len(positions)
            chunk = max(256, int(16e6 / max(n, 1)))
            spans = [(s, min(s + chunk, len(vx))) for s in range(0, len(vx), chunk)]

            def run(span):
                s, e = span
                # Weights overflow right on top of a control point; those
                # pixels are snapped to exact targets below.
                with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                    out[s:e] = block(vx[s:e], vy[s:e], pc, qc, alpha, params.reg_eps)

            if threads > 1 and len(spans) > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    list(pool.map(run, spans))
            else:
                for span in spans:
                    run(span)
        out += qm
        coords = out.reshape(height, width, 2)
        _snap_control_pixels(coords, positions, tvals, transform, eps)

    if not np.all(np.isfinite(coords)):
        raise FieldError("field evaluation produced non-finite coordinates")
    return CoordinateField(
        width=width,
        height=height,
        coords=coords,
        source_positions=np.asarray(positions, dtype=float),
        transform=transform,
        active_channels=targets.active_channels,
    )


MAGIC = b"MLSF"


def write_field(fld: CoordinateField, path) -> None:
    """Binary raster dump: magic, u32 width/height, row-major f64 (u, v) pairs."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", fld.width, fld.height))
        fh.write(fld.coords.astype("<f8").tobytes())


def read_field(path) -> tuple[int, int, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise FieldError(f"{path}: not a field raster")
        w, h = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(h, w, 2)
    return w, h, data
