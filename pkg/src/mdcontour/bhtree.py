"""Kd-tree monopole approximation of all-pairs inverse-square repulsion."""

from __future__ import annotations

import numpy as np

from . import _kernels


class KdTree:
    """Median-split kd-tree over 2D points with per-node mass and centroid.

    Built fresh each layout iteration; nodes are stored in flat arrays so the
    force evaluation can sweep whole groups of query points at once.
    """

    __slots__ = (
        "points", "perm", "lo", "hi", "left", "right", "com", "mass", "size",
        "bmin", "bmax", "_count",
    )

    def __init__(self, points: np.ndarray, leaf_size: int = 16):
        n = len(points)
        self.points = points
        self.perm = np.arange(n)
        cap = max(1, 4 * (2 * n // max(leaf_size, 1) + 2))
        self.lo = np.zeros(cap, dtype=np.int64)
        self.hi = np.zeros(cap, dtype=np.int64)
        self.left = np.full(cap, -1, dtype=np.int64)
        self.right = np.full(cap, -1, dtype=np.int64)
        self.com = np.zeros((cap, 2))
        self.mass = np.zeros(cap)
        self.size = np.zeros(cap)
        self.bmin = np.zeros((cap, 2))
        self.bmax = np.zeros((cap, 2))
        self._count = 0
        self._build(0, n, leaf_size)

    def _new_node(self, lo: int, hi: int) -> int:
        i = self._count
        self._count += 1
        self.lo[i] = lo
        self.hi[i] = hi
        sl = self.points[self.perm[lo:hi]]
        mn, mx = sl.min(axis=0), sl.max(axis=0)
        self.bmin[i] = mn
        self.bmax[i] = mx
        self.com[i] = sl.mean(axis=0)
        self.mass[i] = hi - lo
        self.size[i] = float(np.hypot(*(mx - mn)))  # bbox diagonal
        return i

    def _build(self, lo: int, hi: int, leaf_size: int) -> int:
        node = self._new_node(lo, hi)
        if hi - lo <= leaf_size:
            return node
        sl = self.points[self.perm[lo:hi]]
        axis = int(np.argmax(sl.max(axis=0) - sl.min(axis=0)))
        mid = (hi - lo) // 2
        order = np.argpartition(sl[:, axis], mid, kind="introselect")
        self.perm[lo:hi] = self.perm[lo:hi][order]
        if mid == 0 or mid == hi - lo:
            return node  # all coordinates equal; keep as a fat leaf
        self.left[node] = self._build(lo, lo + mid, leaf_size)
        self.right[node] = self._build(lo + mid, hi, leaf_size)
        return node


def repulsive_forces(
    points: np.ndarray,
    c: float,
    eta: float,
    theta: float,
    leaf_size: int = 32,
) -> np.ndarray:
    """Net repulsive force on every point from all others.

    Groups whose bbox diagonal subtends less than ``theta`` of the distance
    to the box itself are collapsed to a single charge at their centroid;
    leaves are evaluated pairwise with the query point itself excluded.
    Measuring the distance to the box (not the centroid) keeps the opening
    criterion valid for every point inside the cell.
    """
    n = len(points)
    forces = np.zeros_like(points, dtype=float)
    if n < 2:
        return forces
    tree = KdTree(points, leaf_size)
    if _kernels.HAVE_NUMBA:
        _kernels.bh_forces(
            points, tree.perm, tree.lo, tree.hi, tree.left, tree.right,
            tree.com, tree.mass, tree.size, tree.bmin, tree.bmax,
            c, eta, theta, forces,
        )
        return forces
    stack: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
    while stack:
        node, act = stack.pop()
        if tree.left[node] < 0:
            idx = tree.perm[tree.lo[node] : tree.hi[node]]
            d = points[act, None, :] - points[None, idx, :]
            r2 = np.einsum("amk,amk->am", d, d)
            w = c / (r2 * np.sqrt(r2) + eta)
            w[act[:, None] == idx[None, :]] = 0.0
            forces[act] += np.einsum("am,amk->ak", w, d)
            continue
        pa = points[act]
        gap = np.maximum(np.maximum(tree.bmin[node] - pa, pa - tree.bmax[node]), 0.0)
        box_dist = np.hypot(gap[:, 0], gap[:, 1])
        far = tree.size[node] < theta * box_dist
        if far.any():
            dd = pa[far] - tree.com[node]
            r = np.hypot(dd[:, 0], dd[:, 1])
            coef = c * tree.mass[node] / (r * r * r + eta)
            forces[act[far]] += coef[:, None] * dd
        near = act[~far]
        if near.size:
            stack.append((int(tree.left[node]), near))
            stack.append((int(tree.right[node]), near))
    return forces


def repulsive_forces_exact(points: np.ndarray, c: float, eta: float) -> np.ndarray:
    """Direct O(n^2) sum; the reference the tree approximation is checked against."""
    d = points[:, None, :] - points[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    w = c / (r2 * np.sqrt(r2) + eta)
    np.fill_diagonal(w, 0.0)
    return np.einsum("ij,ijk->ik", w, d)
