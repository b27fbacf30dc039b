"""Delaunay triangulation with compact CSR adjacency and triangle-fan storage.

Construction is incremental Bowyer-Watson.  Orientation and in-circle tests
run in floating point with an error-bound filter and fall back to exact
rational arithmetic when the determinant is too close to zero, so the
triangulation is deterministic and never corrupted by round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class MeshError(Exception):
    pass


class DegenerateInput(MeshError):
    """All input points collinear: no triangulation exists."""


class ZeroAreaTriangle(MeshError):
    pass


_ORIENT_BOUND = 3.4e-16   # float filter threshold factors, a few ulps above
_INCIRCLE_BOUND = 1.2e-15  # Shewchuk's static error-bound constants


def signed_area(a, b, c) -> float:
    """Half the cross product of (b-a, c-a); positive iff a,b,c are CCW."""
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def orient2d(ax, ay, bx, by, cx, cy) -> int:
    """Sign of the signed area of (a,b,c): 1 CCW, -1 CW, 0 collinear. Exact."""
    detleft = (ax - cx) * (by - cy)
    detright = (ay - cy) * (bx - cx)
    det = detleft - detright
    if abs(det) > _ORIENT_BOUND * (abs(detleft) + abs(detright)):
        return 1 if det > 0 else -1
    d = (Fraction(ax) - Fraction(cx)) * (Fraction(by) - Fraction(cy)) - (
        Fraction(ay) - Fraction(cy)
    ) * (Fraction(bx) - Fraction(cx))
    return (d > 0) - (d < 0)


def incircle(ax, ay, bx, by, cx, cy, dx, dy) -> int:
    """Sign test: 1 if d lies strictly inside the circumcircle of CCW (a,b,c)."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    bxcy, cxby = bdx * cdy, cdx * bdy
    cxay, axcy = cdx * ady, adx * cdy
    axby, bxay = adx * bdy, bdx * ady
    det = alift * (bxcy - cxby) + blift * (cxay - axcy) + clift * (axby - bxay)
    permanent = (
        alift * (abs(bxcy) + abs(cxby))
        + blift * (abs(cxay) + abs(axcy))
        + clift * (abs(axby) + abs(bxay))
    )
    if abs(det) > _INCIRCLE_BOUND * permanent:
        return 1 if det > 0 else -1
    F = Fraction
    fadx, fady = F(ax) - F(dx), F(ay) - F(dy)
    fbdx, fbdy = F(bx) - F(dx), F(by) - F(dy)
    fcdx, fcdy = F(cx) - F(dx), F(cy) - F(dy)
    d = (
        (fadx * fadx + fady * fady) * (fbdx * fcdy - fcdx * fbdy)
        + (fbdx * fbdx + fbdy * fbdy) * (fcdx * fady - fadx * fcdy)
        + (fcdx * fcdx + fcdy * fcdy) * (fadx * fbdy - fbdx * fady)
    )
    return (d > 0) - (d < 0)


def limiting_lines(tri, positions):
    """Midsegment lines of a triangle, one per vertex.

    Entry k is ``(point_on_line, inward_normal)`` for vertex k: the line runs
    through the midpoints of the two edges at vertex k (parallel to the
    opposite edge) and the unit normal points back toward the vertex.
    """
    a, b, c = (np.asarray(positions[i], dtype=float) for i in tri)
    if signed_area(a, b, c) == 0.0:
        raise ZeroAreaTriangle(f"triangle {tuple(tri)} has zero area")
    verts = (a, b, c)
    out = []
    for k in range(3):
        v = verts[k]
        m1 = 0.5 * (v + verts[(k + 1) % 3])
        m2 = 0.5 * (v + verts[(k + 2) % 3])
        d = m2 - m1
        n = np.array([-d[1], d[0]])
        n /= np.linalg.norm(n)
        if np.dot(n, v - m1) < 0:
            n = -n
        out.append((m1, n))
    return out


@dataclass
class TriMesh:
    """Triangulated point set in CSR + anchored-fan storage.

    ``original_pos`` is fixed; ``current_pos`` is the buffer the layout is
    allowed to mutate.  ``csr_targets`` holds each node's neighbors sorted
    counter-clockwise by angle around the node (at ``original_pos``).  Each
    triangle is recorded once in ``fan_nodes``, under its smallest vertex
    (the anchor), as the first of its two other vertices in CCW order; the
    third vertex is recoverable as the anchor's next CCW neighbor, so fan
    storage costs exactly |N| + |T| entries on top of the CSR arrays.
    """

    node_count: int
    original_pos: np.ndarray   # (n, 2)
    current_pos: np.ndarray    # (n, 2)
    csr_offsets: np.ndarray    # (n+1,)
    csr_targets: np.ndarray    # (2E,)
    fan_offsets: np.ndarray    # (n+1,)
    fan_nodes: np.ndarray      # (T,)
    triangles: np.ndarray      # (T, 3) CCW triples
    jitter_count: int = 0

    @property
    def edge_count(self) -> int:
        return len(self.csr_targets) // 2

    @property
    def triangle_count(self) -> int:
        return len(self.triangles)

    def neighbors(self, i: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[i] : self.csr_offsets[i + 1]]

    def hull_nodes(self) -> np.ndarray:
        """Nodes on the boundary: endpoints of edges used by only one triangle."""
        counts: dict[tuple[int, int], int] = {}
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                counts[key] = counts.get(key, 0) + 1
        hull = {v for edge, n in counts.items() if n == 1 for v in edge}
        return np.array(sorted(hull), dtype=np.int64)

    def _succ(self, i: int, j: int) -> int:
        """Next neighbor CCW after j in i's angularly sorted adjacency."""
        nbrs = self.neighbors(i)
        k = int(np.flatnonzero(nbrs == j)[0])
        return int(nbrs[(k + 1) % len(nbrs)])

    def fan_entries(self, i: int) -> np.ndarray:
        return self.fan_nodes[self.fan_offsets[i] : self.fan_offsets[i + 1]]

    def node_triangles(self, i: int) -> list[tuple[int, int, int]]:
        """All triangles incident to node i, reconstructed from fan storage."""
        out = []
        for x in self.fan_entries(i):
            out.append((i, int(x), self._succ(i, int(x))))
        for j in self.neighbors(i):
            j = int(j)
            if j >= i:
                continue
            entries = self.fan_entries(j)
            if i in entries:
                out.append((j, i, self._succ(j, i)))
            for x in entries:
                x = int(x)
                if x != i and self._succ(j, x) == i:
                    out.append((j, x, i))
        return out

    def signed_areas(self, positions: np.ndarray | None = None) -> np.ndarray:
        """Signed area of every triangle at the given (default current) positions."""
        p = self.current_pos if positions is None else positions
        a = p[self.triangles[:, 0]]
        b = p[self.triangles[:, 1]]
        c = p[self.triangles[:, 2]]
        return 0.5 * (
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        )

    def dump_text(self) -> str:
        """Line-based debug serialization (positions and triangle triples)."""
        lines = [f"mesh {self.node_count} {self.triangle_count}"]
        for k in range(self.node_count):
            ox, oy = (float(v) for v in self.original_pos[k])
            cx, cy = (float(v) for v in self.current_pos[k])
            lines.append(f"p {ox!r} {oy!r} {cx!r} {cy!r}")
        for a, b, c in self.triangles:
            lines.append(f"t {a} {b} {c}")
        return "\n".join(lines) + "\n"


def parse_mesh_text(text: str) -> TriMesh:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    tag, n, t = lines[0].split()
    if tag != "mesh":
        raise MeshError(f"bad mesh dump header: {lines[0]!r}")
    n, t = int(n), int(t)
    orig = np.empty((n, 2))
    cur = np.empty((n, 2))
    for k in range(n):
        parts = lines[1 + k].split()
        orig[k] = (float(parts[1]), float(parts[2]))
        cur[k] = (float(parts[3]), float(parts[4]))
    tris = np.empty((t, 3), dtype=np.int64)
    for k in range(t):
        parts = lines[1 + n + k].split()
        tris[k] = (int(parts[1]), int(parts[2]), int(parts[3]))
    return _assemble(orig, cur, tris, jitter_count=0)


class _Triangulator:
    """Incremental Bowyer-Watson over a large bounding super-triangle."""

    def __init__(self, points: np.ndarray, scale: float):
        self.pts: list[tuple[float, float]] = [tuple(p) for p in points]
        n = len(points)
        cx, cy = points.mean(axis=0)
        m = scale
        self.pts.append((cx - 3.0 * m, cy - 2.0 * m))
        self.pts.append((cx + 3.0 * m, cy - 2.0 * m))
        self.pts.append((cx, cy + 3.0 * m))
        self.super = (n, n + 1, n + 2)
        self.verts: list[list[int]] = [[n, n + 1, n + 2]]
        self.nbrs: list[list[int]] = [[-1, -1, -1]]
        self.alive: list[bool] = [True]
        self.hint = 0

    def _orient(self, a: int, b: int, p) -> int:
        pa, pb = self.pts[a], self.pts[b]
        return orient2d(pa[0], pa[1], pb[0], pb[1], p[0], p[1])

    def _in_circumcircle(self, t: int, p) -> bool:
        a, b, c = self.verts[t]
        pa, pb, pc = self.pts[a], self.pts[b], self.pts[c]
        return incircle(pa[0], pa[1], pb[0], pb[1], pc[0], pc[1], p[0], p[1]) > 0

    def _locate(self, p) -> int:
        t = self.hint if self.alive[self.hint] else next(
            i for i, ok in enumerate(self.alive) if ok
        )
        came_from = -1
        for _ in range(4 * len(self.verts) + 16):
            moved = False
            for k in range(3):
                nb = self.nbrs[t][(k + 2) % 3]
                if nb == came_from:
                    continue
                a, b = self.verts[t][k], self.verts[t][(k + 1) % 3]
                if self._orient(a, b, p) < 0:
                    if nb < 0:
                        raise MeshError("walked out of the super-triangle")
                    came_from, t = t, nb
                    moved = True
                    break
            if not moved:
                return t
        # Degenerate walk cycle: fall back to scanning live triangles.
        for t, ok in enumerate(self.alive):
            if not ok:
                continue
            vs = self.verts[t]
            if all(
                self._orient(vs[k], vs[(k + 1) % 3], p) >= 0 for k in range(3)
            ):
                return t
        raise MeshError("point location failed")

    def insert(self, pi: int) -> None:
        p = self.pts[pi]
        t0 = self._locate(p)

        # Grow the cavity: every reachable triangle whose circumcircle
        # strictly contains p.  Cocircular ties stay outside the cavity,
        # which resolves them deterministically by insertion order.
        cavity = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            for nb in self.nbrs[t]:
                if nb >= 0 and nb not in cavity and self._in_circumcircle(nb, p):
                    cavity.add(nb)
                    stack.append(nb)

        boundary = []  # (a, b, outer) directed CCW around the cavity
        for t in cavity:
            for k in range(3):
                nb = self.nbrs[t][(k + 2) % 3]
                if nb not in cavity:
                    boundary.append((self.verts[t][k], self.verts[t][(k + 1) % 3], nb))

        for t in cavity:
            self.alive[t] = False

        by_start: dict[int, int] = {}
        by_second: dict[int, int] = {}
        created = []
        for a, b, outer in boundary:
            ti = len(self.verts)
            self.verts.append([a, b, pi])
            self.nbrs.append([-1, -1, outer])
            self.alive.append(True)
            if outer >= 0:
                onb = self.nbrs[outer]
                for k in range(3):
                    if {self.verts[outer][k], self.verts[outer][(k + 1) % 3]} == {a, b}:
                        onb[(k + 2) % 3] = ti
                        break
            by_start[a] = ti
            by_second[b] = ti
            created.append(ti)
        for ti in created:
            a, b, _ = self.verts[ti]
            self.nbrs[ti][0] = by_start[b]
            self.nbrs[ti][1] = by_second[a]
        self.hint = created[0]

    def real_triangles(self) -> np.ndarray:
        sup = set(self.super)
        tris = [
            vs
            for vs, ok in zip(self.verts, self.alive)
            if ok and not (set(vs) & sup)
        ]
        return np.array(tris, dtype=np.int64).reshape(-1, 3)


def _jitter_duplicates(points: np.ndarray, diag: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Perturb near-coincident points so the input is in general position."""
    pts = points.copy()
    tol = 1e-9 * diag
    amp = 1e-6 * diag
    moved = 0
    for _ in range(16):
        cells: dict[tuple[int, int], int] = {}
        dup = []
        for i, (x, y) in enumerate(pts):
            key = (int(round(x / tol)), int(round(y / tol)))
            if key in cells:
                dup.append(i)
            else:
                cells[key] = i
        if not dup:
            break
        for i in dup:
            ang = rng.uniform(0.0, 2.0 * np.pi)
            r = amp * (0.5 + 0.5 * rng.uniform())
            pts[i, 0] += r * np.cos(ang)
            pts[i, 1] += r * np.sin(ang)
        moved += len(dup)
    return pts, moved


def _assemble(original: np.ndarray, current: np.ndarray, tris: np.ndarray, jitter_count: int) -> TriMesh:
    n = len(original)
    # Canonical order: rotate each CCW triple to put its smallest vertex
    # first, then sort the list, so output is independent of insert history.
    canon = np.empty_like(tris)
    for r, (a, b, c) in enumerate(tris):
        if a <= b and a <= c:
            canon[r] = (a, b, c)
        elif b <= a and b <= c:
            canon[r] = (b, c, a)
        else:
            canon[r] = (c, a, b)
    canon = canon[np.lexsort((canon[:, 2], canon[:, 1], canon[:, 0]))]

    adj: list[set[int]] = [set() for _ in range(n)]
    for a, b, c in canon:
        adj[a].update((b, c))
        adj[b].update((a, c))
        adj[c].update((a, b))

    csr_offsets = np.zeros(n + 1, dtype=np.int64)
    targets: list[int] = []
    order_in: list[dict[int, int]] = []
    for i in range(n):
        nbrs = np.array(sorted(adj[i]), dtype=np.int64)
        if len(nbrs):
            d = original[nbrs] - original[i]
            ang = np.arctan2(d[:, 1], d[:, 0])
            nbrs = nbrs[np.lexsort((nbrs, ang))]
        order_in.append({int(v): k for k, v in enumerate(nbrs)})
        targets.extend(int(v) for v in nbrs)
        csr_offsets[i + 1] = len(targets)
    csr_targets = np.array(targets, dtype=np.int64)

    fans: list[list[int]] = [[] for _ in range(n)]
    for a, b, c in canon:
        fans[a].append(int(b))  # a is the anchor; b the CCW-first neighbor
    fan_offsets = np.zeros(n + 1, dtype=np.int64)
    fan_nodes: list[int] = []
    for i in range(n):
        fans[i].sort(key=lambda v: order_in[i][v])
        fan_nodes.extend(fans[i])
        fan_offsets[i + 1] = len(fan_nodes)

    return TriMesh(
        node_count=n,
        original_pos=original,
        current_pos=current,
        csr_offsets=csr_offsets,
        csr_targets=csr_targets,
        fan_offsets=fan_offsets,
        fan_nodes=np.array(fan_nodes, dtype=np.int64),
        triangles=canon,
        jitter_count=jitter_count,
    )


def delaunay(points, seed: int = 0, viewport=None) -> TriMesh:
    """Delaunay-triangulate a 2D point set into a TriMesh.

    Accepts a PointCloud2D or an (n, 2) array.  Coincident points are split
    apart by a tiny seeded jitter first; fully collinear input raises
    ``DegenerateInput``.
    """
    if hasattr(points, "positions"):
        viewport = viewport or points.viewport
        points = points.positions
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise MeshError("expected an (n, 2) point array")
    n = len(pts)
    if n < 3:
        raise DegenerateInput(f"need at least 3 points, got {n}")

    if viewport is None:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ext = np.where(hi > lo, hi - lo, 1.0)
        diag = float(np.hypot(*(1.1 * ext)))
    else:
        diag = float(np.hypot(viewport[2] - viewport[0], viewport[3] - viewport[1]))

    rng = np.random.default_rng(seed)
    pts, jitter_count = _jitter_duplicates(pts, diag, rng)

    i0, i1 = 0, 1
    while i1 < n and pts[i1, 0] == pts[i0, 0] and pts[i1, 1] == pts[i0, 1]:
        i1 += 1
    a, b = pts[i0], pts[i1]
    if all(
        orient2d(a[0], a[1], b[0], b[1], pts[i, 0], pts[i, 1]) == 0 for i in range(n)
    ):
        raise DegenerateInput("all points are collinear")

    # Retry with an ever-larger super-triangle until the stripped result
    # covers the convex hull (huge circumcircles near the hull can otherwise
    # capture a super vertex and leave a notch).
    scale = 1e5 * diag
    for _ in range(4):
        tr = _Triangulator(pts, scale)
        for i in range(n):
            tr.insert(i)
        tris = tr.real_triangles()
        if len(tris) and _covers_hull(pts, tris):
            return _assemble(pts.copy(), pts.copy(), tris, jitter_count)
        scale *= 1e3
    raise MeshError("triangulation failed to cover the convex hull")


def _covers_hull(pts: np.ndarray, tris: np.ndarray) -> bool:
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            counts[key] = counts.get(key, 0) + 1
    for (u, v), cnt in counts.items():
        if cnt != 1:
            continue
        d = pts - pts[u]
        e = pts[v] - pts[u]
        cross = e[0] * d[:, 1] - e[1] * d[:, 0]
        span = np.abs(cross).max() or 1.0
        if cross.min() < -1e-12 * span and cross.max() > 1e-12 * span:
            return False
    return True
