"""Planarity-preserving force-directed relaxation of a triangulated layout.

Every iteration reads a frozen snapshot of the positions, computes repulsive,
spring, and node-edge forces for all nodes independently, caps each node's
displacement at the annealing temperature, and then shrinks it further so the
node cannot cross any limiting line (midsegment) of any triangle it belongs
to.  Confining every vertex to its side of those lines is what makes the
simultaneous, order-independent update safe: no triangle can change the sign
of its signed area, so the mesh stays planar at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bhtree import repulsive_forces
from .mesh import TriMesh


class TOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class LayoutParams:
    repulsion_c: float
    spring_scale: float
    desired_edge_d: float
    softening_eta: float
    initial_temp: float
    decay_lambda: float
    iterations: int = 500
    bh_theta: float = 0.5

    def __post_init__(self):
        if self.repulsion_c <= 0 or self.spring_scale <= 0 or self.desired_edge_d <= 0:
            raise ValueError("force constants must be positive")
        if self.softening_eta <= 0 or self.initial_temp <= 0 or self.bh_theta <= 0:
            raise ValueError("softening, temperature, and opening angle must be positive")
        if not 0.0 < self.decay_lambda < 1.0:
            raise ValueError("decay_lambda must lie in (0, 1)")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    @classmethod
    def defaults_for(cls, mesh: TriMesh, iterations: int = 500, **overrides) -> "LayoutParams":
        """Mesh-scaled defaults: one temperature step moves at most ~one edge.

        The softening margin must sit far below the de-overplot jitter scale,
        or the limiting-line clamp freezes freshly split point clusters
        inside their sliver triangles before they can inflate.
        """
        d = median_edge_length(mesh)
        base = dict(
            repulsion_c=d * d,
            spring_scale=1.0,
            desired_edge_d=d,
            softening_eta=1e-7 * d,
            initial_temp=d,
            decay_lambda=0.99,
            iterations=iterations,
            bh_theta=0.5,
        )
        base.update(overrides)
        return cls(**base)


def median_edge_length(mesh: TriMesh, positions: np.ndarray | None = None) -> float:
    pos = mesh.original_pos if positions is None else positions
    src = np.repeat(np.arange(mesh.node_count), np.diff(mesh.csr_offsets))
    dst = mesh.csr_targets
    keep = src < dst
    lengths = np.hypot(*(pos[src[keep]] - pos[dst[keep]]).T)
    return float(np.median(lengths)) if len(lengths) else 1.0


@dataclass(frozen=True)
class LayoutState:
    mesh: TriMesh
    iteration: int
    temperature: float
    relaxed_pos: np.ndarray


def repulsive_force(v, vi, params: LayoutParams) -> np.ndarray:
    """Inverse-square push away from vi, softened near coincidence."""
    d = np.asarray(v, dtype=float) - np.asarray(vi, dtype=float)
    r = float(np.hypot(*d))
    return params.repulsion_c / (r**3 + params.softening_eta) * d


def spring_force(v, vi, params: LayoutParams) -> np.ndarray:
    """Log spring on a mesh edge: zero at the desired edge length."""
    d = np.asarray(v, dtype=float) - np.asarray(vi, dtype=float)
    r = float(np.hypot(*d))
    if r == 0.0:
        return np.zeros(2)
    return -params.spring_scale * np.log((r + params.softening_eta) / params.desired_edge_d) * d


def node_edge_force(v, vi, vj, params: LayoutParams) -> np.ndarray:
    """Push a vertex away from the supporting line of its opposing edge."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(vi, dtype=float)
    e = np.asarray(vj, dtype=float) - a
    ee = float(e @ e)
    if ee == 0.0:
        return np.zeros(2)
    foot = a + ((v - a) @ e) / ee * e
    r = foot - v
    nr = float(np.hypot(*r))
    if nr < 1e-12:
        return np.zeros(2)  # on the line; the planarity clamp keeps this from arising
    return params.repulsion_c / (nr**2 + params.softening_eta) * (-r / nr)


def _limit_constraints(pos: np.ndarray, tris: np.ndarray):
    """Per (vertex, limiting line) rows: node index, line point, unit normal.

    Each triangle contributes nine rows: all three of its vertices against
    all three of its midsegment lines.
    """
    a = pos[tris[:, 0]]
    b = pos[tris[:, 1]]
    c = pos[tris[:, 2]]
    mab = 0.5 * (a + b)
    mbc = 0.5 * (b + c)
    mca = 0.5 * (c + a)
    # Line k passes through the midpoints of the two edges at vertex k.
    line_pts = (mab, mab, mbc)
    line_dirs = (mca - mab, mbc - mab, mca - mbc)
    nodes, pts, normals = [], [], []
    for pt, dr in zip(line_pts, line_dirs):
        nrm = np.stack([-dr[:, 1], dr[:, 0]], axis=1)
        ln = np.hypot(nrm[:, 0], nrm[:, 1])
        ln[ln == 0.0] = 1.0
        nrm /= ln[:, None]
        for k in range(3):
            nodes.append(tris[:, k])
            pts.append(pt)
            normals.append(nrm)
    return np.concatenate(nodes), np.concatenate(pts), np.concatenate(normals)


def _constraint_groups(tris: np.ndarray, n: int):
    """Sort order grouping the 9T constraint rows by node, for reduceat.

    Row order must mirror ``_limit_constraints``: per line, then per vertex.
    """
    nodes = np.tile(np.concatenate([tris[:, 0], tris[:, 1], tris[:, 2]]), 3)
    order = np.argsort(nodes, kind="stable")
    sorted_nodes = nodes[order]
    starts = np.flatnonzero(np.concatenate([[True], sorted_nodes[1:] != sorted_nodes[:-1]]))
    uniq = sorted_nodes[starts]
    return order, starts, uniq


def clamp_factors(
    pos: np.ndarray, disp: np.ndarray, tris: np.ndarray, eta: float, groups=None
) -> np.ndarray:
    """Per-node scale factor in [0,1] keeping every vertex eta clear of
    every limiting line of every triangle it belongs to."""
    n = len(pos)
    s = np.ones(n)
    if len(tris) == 0:
        return s
    nodes, pts, normals = _limit_constraints(pos, tris)
    rel = pos[nodes] - pts
    signed = np.einsum("ij,ij->i", rel, normals)
    side = np.where(signed >= 0.0, 1.0, -1.0)
    dist = np.abs(signed)
    allowed = np.maximum(0.0, dist - eta)
    toward = -side * np.einsum("ij,ij->i", disp[nodes], normals)
    viol = toward > allowed
    if viol.any():
        factors = np.ones(len(nodes))
        factors[viol] = allowed[viol] / toward[viol]
        if groups is None:
            groups = _constraint_groups(tris, n)
        order, starts, uniq = groups
        s[uniq] = np.minimum.reduceat(factors[order], starts)
    return np.clip(s, 0.0, 1.0)


def clamp_displacement(node_idx: int, proposed, mesh: TriMesh, params: LayoutParams) -> np.ndarray:
    """Scale a single node's proposed displacement so it violates no limiting
    line of any incident triangle; direction is preserved."""
    proposed = np.asarray(proposed, dtype=float)
    if not proposed.any():
        return proposed.copy()
    mask = np.any(mesh.triangles == node_idx, axis=1)
    tris = mesh.triangles[mask]
    pos = mesh.current_pos
    factor = 1.0
    for tri in tris:
        a, b, c = pos[tri[0]], pos[tri[1]], pos[tri[2]]
        mab, mbc, mca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        for pt, other in ((mab, mca), (mab, mbc), (mbc, mca)):
            d = other - pt
            nrm = np.array([-d[1], d[0]])
            ln = np.hypot(*nrm)
            if ln == 0.0:
                continue
            nrm /= ln
            signed = (pos[node_idx] - pt) @ nrm
            side = 1.0 if signed >= 0.0 else -1.0
            allowed = max(0.0, abs(signed) - params.softening_eta)
            toward = -side * (proposed @ nrm)
            if toward > allowed:
                factor = min(factor, allowed / toward)
    return proposed * max(factor, 0.0)


def _spring_forces(pos: np.ndarray, mesh: TriMesh, params: LayoutParams) -> np.ndarray:
    n = mesh.node_count
    src = np.repeat(np.arange(n), np.diff(mesh.csr_offsets))
    dst = mesh.csr_targets
    d = pos[src] - pos[dst]
    r = np.hypot(d[:, 0], d[:, 1])
    coef = -params.spring_scale * np.log(
        (r + params.softening_eta) / params.desired_edge_d
    )
    return np.stack(
        [
            np.bincount(src, weights=coef * d[:, 0], minlength=n),
            np.bincount(src, weights=coef * d[:, 1], minlength=n),
        ],
        axis=1,
    )


def _node_edge_forces(pos: np.ndarray, mesh: TriMesh, params: LayoutParams) -> np.ndarray:
    tris = mesh.triangles
    n = mesh.node_count
    forces = np.zeros_like(pos)
    if len(tris) == 0:
        return forces
    for k in range(3):
        v = tris[:, k]
        a = tris[:, (k + 1) % 3]
        b = tris[:, (k + 2) % 3]
        e = pos[b] - pos[a]
        ee = np.einsum("ij,ij->i", e, e)
        ee[ee == 0.0] = 1.0
        t = np.einsum("ij,ij->i", pos[v] - pos[a], e) / ee
        r = pos[a] + t[:, None] * e - pos[v]
        nr = np.hypot(r[:, 0], r[:, 1])
        ok = nr >= 1e-12
        coef = np.where(
            ok, params.repulsion_c / (nr**2 + params.softening_eta) / np.where(ok, nr, 1.0), 0.0
        )
        forces[:, 0] -= np.bincount(v, weights=coef * r[:, 0], minlength=n)
        forces[:, 1] -= np.bincount(v, weights=coef * r[:, 1], minlength=n)
    return forces


def total_forces(pos: np.ndarray, mesh: TriMesh, params: LayoutParams) -> np.ndarray:
    f = repulsive_forces(pos, params.repulsion_c, params.softening_eta, params.bh_theta)
    f += _spring_forces(pos, mesh, params)
    f += _node_edge_forces(pos, mesh, params)
    return f


def layout_step(state: LayoutState, params: LayoutParams) -> LayoutState:
    """One synchronous annealed update of every node from a frozen snapshot."""
    mesh = state.mesh
    pos = mesh.current_pos
    groups = mesh.__dict__.get("_constraint_groups")
    if groups is None:
        groups = _constraint_groups(mesh.triangles, mesh.node_count)
        mesh.__dict__["_constraint_groups"] = groups
    disp = total_forces(pos, mesh, params)
    mag = np.hypot(disp[:, 0], disp[:, 1])
    over = mag > state.temperature
    if over.any():
        disp[over] *= (state.temperature / mag[over])[:, None]
    s = clamp_factors(pos, disp, mesh.triangles, params.softening_eta, groups)
    mesh.current_pos = pos + s[:, None] * disp  # buffer swap: readers of `pos` are unaffected
    return LayoutState(
        mesh=mesh,
        iteration=state.iteration + 1,
        temperature=state.temperature * params.decay_lambda,
        relaxed_pos=mesh.current_pos.copy(),
    )


def initial_state(mesh: TriMesh, params: LayoutParams) -> LayoutState:
    return LayoutState(
        mesh=mesh,
        iteration=0,
        temperature=params.initial_temp,
        relaxed_pos=mesh.current_pos.copy(),
    )


def layout_run(mesh: TriMesh, params: LayoutParams) -> LayoutState:
    state = initial_state(mesh, params)
    for _ in range(params.iterations):
        state = layout_step(state, params)
    return state


def interpolate_layout(state: LayoutState, t: float) -> np.ndarray:
    """Blend between the original projection and the relaxed layout."""
    if not 0.0 <= t <= 1.0:
        raise TOutOfRange(f"relax parameter must be in [0, 1], got {t}")
    return (1.0 - t) * state.mesh.original_pos + t * state.relaxed_pos


def count_orientation_flips(mesh: TriMesh, positions: np.ndarray) -> int:
    """Triangles whose winding at `positions` differs from the original layout.

    Linear blending of two planar layouts is not provably flip-free, so
    intermediate relax values are audited rather than constrained.
    """
    ref = np.sign(mesh.signed_areas(mesh.original_pos))
    cur = np.sign(mesh.signed_areas(positions))
    return int(np.count_nonzero(ref != cur))


def dump_layout_text(state: LayoutState) -> str:
    """Mesh debug dump extended with the relaxed positions, one `r` row per node."""
    lines = [state.mesh.dump_text().rstrip("\n")]
    lines.append(f"layout {state.iteration} {state.temperature!r}")
    for x, y in state.relaxed_pos:
        lines.append(f"r {float(x)!r} {float(y)!r}")
    return "\n".join(lines) + "\n"


def parse_layout_text(text: str) -> LayoutState:
    from .mesh import parse_mesh_text

    lines = [ln for ln in text.splitlines() if ln.strip()]
    split = next(i for i, ln in enumerate(lines) if ln.startswith("layout "))
    mesh = parse_mesh_text("\n".join(lines[:split]))
    _, iteration, temperature = lines[split].split()
    relaxed = np.array(
        [[float(p) for p in ln.split()[1:]] for ln in lines[split + 1 :]]
    )
    if len(relaxed) != mesh.node_count:
        raise ValueError("relaxed position count does not match the mesh")
    return LayoutState(
        mesh=mesh,
        iteration=int(iteration),
        temperature=float(temperature),
        relaxed_pos=relaxed,
    )
