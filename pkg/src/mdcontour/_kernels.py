"""Fused per-pixel kernels for the field evaluation hot paths.

The numpy formulations in ``field`` allocate pixels-by-controls temporaries,
which makes them memory-bound; these loops keep everything in registers and
parallelize over pixels (each pixel is written exactly once, so results are
identical for any thread count).  ``field`` falls back to the numpy path when
numba is unavailable.
"""

from __future__ import annotations

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco

    prange = range


def set_threads(threads: int) -> None:
    if HAVE_NUMBA:
        limit = numba.config.NUMBA_NUM_THREADS
        numba.set_num_threads(min(max(1, threads), limit))


@njit(inline="always", cache=True)
def _weight(d2, alpha):
    if d2 < 1e-300:
        d2 = 1e-300
    if alpha == 1.0:
        return 1.0 / d2
    if alpha == 1.5:
        return 1.0 / (d2 * np.sqrt(d2))
    if alpha == 0.5:
        return 1.0 / np.sqrt(d2)
    if alpha == 2.0:
        return 1.0 / (d2 * d2)
    return d2 ** (-alpha)


@njit(parallel=True, cache=True)
def mean_field(vx, vy, px, py, dqx, dqy, alpha, out):
    n = px.shape[0]
    for i in prange(vx.shape[0]):
        sw = 0.0
        sx = 0.0
        sy = 0.0
        for j in range(n):
            dx = px[j] - vx[i]
            dy = py[j] - vy[i]
            w = _weight(dx * dx + dy * dy, alpha)
            sw += w
            sx += w * dqx[j]
            sy += w * dqy[j]
        out[i, 0] = vx[i] + sx / sw
        out[i, 1] = vy[i] + sy / sw


@njit(parallel=True, cache=True)
def affine_field(vx, vy, px, py, qx, qy, alpha, reg_eps, out):
    n = px.shape[0]
    for i in prange(vx.shape[0]):
        sw = 0.0
        mpx = 0.0
        mpy = 0.0
        mqx = 0.0
        mqy = 0.0
        mpxpx = 0.0
        mpxpy = 0.0
        mpypy = 0.0
        mpxqx = 0.0
        mpxqy = 0.0
        mpyqx = 0.0
        mpyqy = 0.0
        for j in range(n):
            dx = px[j] - vx[i]
            dy = py[j] - vy[i]
            w = _weight(dx * dx + dy * dy, alpha)
            sw += w
            mpx += w * px[j]
            mpy += w * py[j]
            mqx += w * qx[j]
            mqy += w * qy[j]
            mpxpx += w * px[j] * px[j]
            mpxpy += w * px[j] * py[j]
            mpypy += w * py[j] * py[j]
            mpxqx += w * px[j] * qx[j]
            mpxqy += w * px[j] * qy[j]
            mpyqx += w * py[j] * qx[j]
            mpyqy += w * py[j] * qy[j]
        psx = mpx / sw
        psy = mpy / sw
        qsx = mqx / sw
        qsy = mqy / sw
        a00 = mpxpx - psx * mpx
        a01 = mpxpy - psx * mpy
        a11 = mpypy - psy * mpy
        b00 = mpxqx - qsx * mpx
        b01 = mpxqy - qsy * mpx
        b10 = mpyqx - qsx * mpy
        b11 = mpyqy - qsy * mpy
        reg = reg_eps * (a00 + a11)
        a00 += reg
        a11 += reg
        det = a00 * a11 - a01 * a01
        m00 = (a11 * b00 - a01 * b10) / det
        m01 = (a11 * b01 - a01 * b11) / det
        m10 = (a00 * b10 - a01 * b00) / det
        m11 = (a00 * b11 - a01 * b01) / det
        dx = vx[i] - psx
        dy = vy[i] - psy
        out[i, 0] = dx * m00 + dy * m10 + qsx
        out[i, 1] = dx * m01 + dy * m11 + qsy


@njit(parallel=True, cache=True)
def rigid_field(vx, vy, px, py, qx, qy, alpha, out):
    n = px.shape[0]
    for i in prange(vx.shape[0]):
        sw = 0.0
        mpx = 0.0
        mpy = 0.0
        mqx = 0.0
        mqy = 0.0
        mpxqx = 0.0
        mpxqy = 0.0
        mpyqx = 0.0
        mpyqy = 0.0
        for j in range(n):
            dx = px[j] - vx[i]
            dy = py[j] - vy[i]
            w = _weight(dx * dx + dy * dy, alpha)
            sw += w
            mpx += w * px[j]
            mpy += w * py[j]
            mqx += w * qx[j]
            mqy += w * qy[j]
            mpxqx += w * px[j] * qx[j]
            mpxqy += w * px[j] * qy[j]
            mpyqx += w * py[j] * qx[j]
            mpyqy += w * py[j] * qy[j]
        psx = mpx / sw
        psy = mpy / sw
        qsx = mqx / sw
        qsy = mqy / sw
        b00 = mpxqx - qsx * mpx
        b01 = mpxqy - qsy * mpx
        b10 = mpyqx - qsx * mpy
        b11 = mpyqy - qsy * mpy
        s = b00 + b11
        d = b10 - b01
        dx = vx[i] - psx
        dy = vy[i] - psy
        fx = dx * s + dy * d
        fy = dy * s - dx * d
        norm = np.hypot(fx, fy)
        if norm < 1e-12:
            # Rotation estimate vanished: mean-blend fallback for this pixel.
            out[i, 0] = vx[i] + (mqx - mpx) / sw
            out[i, 1] = vy[i] + (mqy - mpy) / sw
        else:
            r = np.hypot(dx, dy) / norm
            out[i, 0] = fx * r + qsx
            out[i, 1] = fy * r + qsy


@njit(parallel=True, cache=True)
def bh_forces(points, perm, lo, hi, left, right, com, mass, size, bmin, bmax,
              c, eta, theta, out):
    """Per-point Barnes-Hut descent over the flattened kd-tree."""
    n = points.shape[0]
    for i in prange(n):
        xi = points[i, 0]
        yi = points[i, 1]
        fx = 0.0
        fy = 0.0
        stack = np.empty(128, np.int64)
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if left[node] < 0:
                for k in range(lo[node], hi[node]):
                    j = perm[k]
                    if j == i:
                        continue
                    dx = xi - points[j, 0]
                    dy = yi - points[j, 1]
                    r2 = dx * dx + dy * dy
                    w = c / (r2 * np.sqrt(r2) + eta)
                    fx += w * dx
                    fy += w * dy
                continue
            gx = bmin[node, 0] - xi
            if gx < 0.0:
                gx = xi - bmax[node, 0]
            if gx < 0.0:
                gx = 0.0
            gy = bmin[node, 1] - yi
            if gy < 0.0:
                gy = yi - bmax[node, 1]
            if gy < 0.0:
                gy = 0.0
            box_dist = np.sqrt(gx * gx + gy * gy)
            if size[node] < theta * box_dist:
                dx = xi - com[node, 0]
                dy = yi - com[node, 1]
                r = np.sqrt(dx * dx + dy * dy)
                coef = c * mass[node] / (r * r * r + eta)
                fx += coef * dx
                fy += coef * dy
            else:
                stack[sp] = left[node]
                sp += 1
                stack[sp] = right[node]
                sp += 1
        out[i, 0] = fx
        out[i, 1] = fy


@njit(cache=True)
def rasterize_linear(pos, tvals, tris, x0, y1, sx, sy, out, assigned):
    """First-wins scanline fill of every triangle's bounding box."""
    h, w = assigned.shape
    for t in range(tris.shape[0]):
        ia, ib, ic = tris[t, 0], tris[t, 1], tris[t, 2]
        ax, ay = pos[ia, 0], pos[ia, 1]
        bx, by = pos[ib, 0], pos[ib, 1]
        cx, cy = pos[ic, 0], pos[ic, 1]
        det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if det == 0.0:
            continue
        xlo = min(ax, min(bx, cx))
        xhi = max(ax, max(bx, cx))
        ylo = min(ay, min(by, cy))
        yhi = max(ay, max(by, cy))
        c0 = max(0, int(np.floor((xlo - x0) / sx - 0.5)))
        c1 = min(w - 1, int(np.ceil((xhi - x0) / sx)))
        r0 = max(0, int(np.floor((y1 - yhi) / sy - 0.5)))
        r1 = min(h - 1, int(np.ceil((y1 - ylo) / sy)))
        for row in range(r0, r1 + 1):
            gy = y1 - (row + 0.5) * sy
            for col in range(c0, c1 + 1):
                if assigned[row, col]:
                    continue
                gx = x0 + (col + 0.5) * sx
                l1 = ((bx - gx) * (cy - gy) - (by - gy) * (cx - gx)) / det
                l2 = ((cx - gx) * (ay - gy) - (cy - gy) * (ax - gx)) / det
                l3 = 1.0 - l1 - l2
                if l1 >= -1e-12 and l2 >= -1e-12 and l3 >= -1e-12:
                    assigned[row, col] = True
                    out[row, col, 0] = (
                        l1 * tvals[ia, 0] + l2 * tvals[ib, 0] + l3 * tvals[ic, 0]
                    )
                    out[row, col, 1] = (
                        l1 * tvals[ia, 1] + l2 * tvals[ib, 1] + l3 * tvals[ic, 1]
                    )


@njit(parallel=True, cache=True)
def extend_hull(pos, tvals, tris, hull_u, hull_v, hull_t, x0, y1, sx, sy, out, assigned):
    """Fill unassigned pixels from the plane of the nearest hull triangle."""
    h, w = assigned.shape
    nh = hull_u.shape[0]
    for row in prange(h):
        gy = y1 - (row + 0.5) * sy
        for col in range(w):
            if assigned[row, col]:
                continue
            gx = x0 + (col + 0.5) * sx
            best = np.inf
            best_t = 0
            for k in range(nh):
                axp, ayp = pos[hull_u[k], 0], pos[hull_u[k], 1]
                bxp, byp = pos[hull_v[k], 0], pos[hull_v[k], 1]
                ex = bxp - axp
                ey = byp - ayp
                ee = ex * ex + ey * ey
                s = 0.0
                if ee > 0.0:
                    s = ((gx - axp) * ex + (gy - ayp) * ey) / ee
                    if s < 0.0:
                        s = 0.0
                    elif s > 1.0:
                        s = 1.0
                ddx = gx - (axp + s * ex)
                ddy = gy - (ayp + s * ey)
                d2 = ddx * ddx + ddy * ddy
                if d2 < best:
                    best = d2
                    best_t = hull_t[k]
            ia, ib, ic = tris[best_t, 0], tris[best_t, 1], tris[best_t, 2]
            ax, ay = pos[ia, 0], pos[ia, 1]
            bx, by = pos[ib, 0], pos[ib, 1]
            cx, cy = pos[ic, 0], pos[ic, 1]
            det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            l1 = ((bx - gx) * (cy - gy) - (by - gy) * (cx - gx)) / det
            l2 = ((cx - gx) * (ay - gy) - (cy - gy) * (ax - gx)) / det
            l3 = 1.0 - l1 - l2
            out[row, col, 0] = l1 * tvals[ia, 0] + l2 * tvals[ib, 0] + l3 * tvals[ic, 0]
            out[row, col, 1] = l1 * tvals[ia, 1] + l2 * tvals[ib, 1] + l3 * tvals[ic, 1]
