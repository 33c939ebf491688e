"""Pairing of the two interface traces and their common refinement.

The poro-side trace polyline is the master geometry: its arclength
parameterizes the interface, fluid-side trace vertices are projected onto it
and the merged breakpoints define segments on which cross-mesh products are
integrated exactly.  Each segment knows its owning edge (hence cell) on both
sides together with unit normals, the tangent and the tangential permeability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh2D
from .quadrature import edge_rule

MERGE_TOL = 1e-12          # times interface length, breakpoint dedup
PROJECTION_TOL = 1e-8      # times interface length, trace mismatch guard


class GeometryMismatchError(ValueError):
    pass


@dataclass
class TraceEdge:
    bedge: int          # index into mesh.bedges
    cell: int
    local_edge: int
    a: np.ndarray       # first endpoint in the edge's own orientation
    b: np.ndarray
    s0: float = 0.0     # arclength parameters on the master polyline
    s1: float = 0.0


@dataclass
class InterfacePairing:
    mesh_f: Mesh2D
    mesh_p: Mesh2D
    fluid_edges: list
    poro_edges: list
    # per segment
    seg_fluid: np.ndarray      # index into fluid_edges
    seg_poro: np.ndarray       # index into poro_edges
    seg_t_f: np.ndarray        # (n, 2) sub-interval in the fluid edge's [0,1]
    seg_t_p: np.ndarray        # (n, 2) sub-interval in the poro edge's [0,1]
    seg_length: np.ndarray
    seg_n_f: np.ndarray        # (n, 2)
    seg_n_p: np.ndarray
    seg_tau: np.ndarray        # fluid-side unit tangent
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_segments(self) -> int:
        return len(self.seg_length)

    @property
    def length(self) -> float:
        return float(self.seg_length.sum())


def _collect_trace(mesh: Mesh2D, tag: str = "interface") -> list[TraceEdge]:
    ids = mesh.boundary_edge_ids(tag)
    if len(ids) == 0:
        raise GeometryMismatchError(f"mesh has no edges tagged {tag!r}")
    owner, local = mesh.bedge_owner()
    out = []
    for i in ids:
        a, b = mesh.bedges[i]
        out.append(TraceEdge(bedge=int(i), cell=int(owner[i]), local_edge=int(local[i]),
                             a=mesh.nodes[a].copy(), b=mesh.nodes[b].copy()))
    return out


def _chain_polyline(edges: list[TraceEdge]) -> np.ndarray:
    """Order trace edges into one open chain; returns its vertex array."""
    key = lambda p: (round(p[0], 12), round(p[1], 12))
    adj: dict = {}
    for e in edges:
        adj.setdefault(key(e.a), []).append((e, True))
        adj.setdefault(key(e.b), []).append((e, False))
    ends = [k for k, v in adj.items() if len(v) == 1]
    if len(ends) != 2:
        raise GeometryMismatchError("interface trace is not a single open chain")
    start = min(ends)
    chain = [np.array(start)]
    used = set()
    node = start
    while True:
        options = [x for x in adj[node] if id(x[0]) not in used]
        if not options:
            break
        e, forward = options[0]
        used.add(id(e))
        nxt = e.b if forward else e.a
        chain.append(nxt.copy())
        node = key(nxt)
    if len(used) != len(edges):
        raise GeometryMismatchError("interface trace edges do not form one chain")
    return np.array(chain)


def _project_to_polyline(poly: np.ndarray, arc: np.ndarray, p: np.ndarray):
    """Arclength parameter and distance of point ``p`` projected on the chain."""
    best = (np.inf, 0.0)
    for i in range(len(poly) - 1):
        a, b = poly[i], poly[i + 1]
        d = b - a
        L2 = d @ d
        t = np.clip(((p - a) @ d) / L2, 0.0, 1.0)
        q = a + t * d
        dist = np.linalg.norm(p - q)
        if dist < best[0]:
            best = (dist, arc[i] + t * (arc[i + 1] - arc[i]))
    return best[1], best[0]


def common_refinement(mesh_f: Mesh2D, mesh_p: Mesh2D) -> InterfacePairing:
    """Overlay the two 1D interface partitions into integration segments."""
    fluid_edges = _collect_trace(mesh_f)
    poro_edges = _collect_trace(mesh_p)

    poly = _chain_polyline(poro_edges)
    seg_len = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = arc[-1]

    def param(p):
        s, dist = _project_to_polyline(poly, arc, p)
        if dist > PROJECTION_TOL * total:
            raise GeometryMismatchError(
                f"interface traces mismatch: point {p} is {dist:.3e} from the master polyline")
        return s

    for e in poro_edges:
        e.s0, e.s1 = param(e.a), param(e.b)
    for e in fluid_edges:
        e.s0, e.s1 = param(e.a), param(e.b)

    breaks = [0.0, total]
    for e in poro_edges + fluid_edges:
        breaks.extend((e.s0, e.s1))
    breaks = np.array(sorted(breaks))
    keep = np.concatenate([[True], np.diff(breaks) > MERGE_TOL * total])
    breaks = breaks[keep]

    def find_edge(edges, smid):
        for i, e in enumerate(edges):
            lo, hi = min(e.s0, e.s1), max(e.s0, e.s1)
            if lo - MERGE_TOL * total <= smid <= hi + MERGE_TOL * total:
                return i
        raise GeometryMismatchError(f"no edge covers interface parameter {smid}")

    nseg = len(breaks) - 1
    seg_fluid = np.empty(nseg, dtype=np.int64)
    seg_poro = np.empty(nseg, dtype=np.int64)
    seg_t_f = np.empty((nseg, 2))
    seg_t_p = np.empty((nseg, 2))
    seg_length = np.empty(nseg)
    seg_n_f = np.empty((nseg, 2))
    seg_n_p = np.empty((nseg, 2))
    seg_tau = np.empty((nseg, 2))

    for k in range(nseg):
        lo, hi = breaks[k], breaks[k + 1]
        smid = 0.5 * (lo + hi)
        fi = find_edge(fluid_edges, smid)
        pi = find_edge(poro_edges, smid)
        seg_fluid[k], seg_poro[k] = fi, pi
        for (ei, target) in ((fluid_edges[fi], seg_t_f), (poro_edges[pi], seg_t_p)):
            den = ei.s1 - ei.s0
            target[k] = ((lo - ei.s0) / den, (hi - ei.s0) / den)
        pe = poro_edges[pi]
        fe = fluid_edges[fi]
        pa = pe.a + seg_t_p[k, 0] * (pe.b - pe.a)
        pb = pe.a + seg_t_p[k, 1] * (pe.b - pe.a)
        seg_length[k] = np.linalg.norm(pb - pa)
        for (ei, target) in ((fe, seg_n_f), (pe, seg_n_p)):
            d = ei.b - ei.a
            n = np.array([d[1], -d[0]])
            target[k] = n / np.linalg.norm(n)
        seg_tau[k] = np.array([-seg_n_f[k, 1], seg_n_f[k, 0]])

    pairing = InterfacePairing(
        mesh_f=mesh_f, mesh_p=mesh_p,
        fluid_edges=fluid_edges, poro_edges=poro_edges,
        seg_fluid=seg_fluid, seg_poro=seg_poro,
        seg_t_f=seg_t_f, seg_t_p=seg_t_p, seg_length=seg_length,
        seg_n_f=seg_n_f, seg_n_p=seg_n_p, seg_tau=seg_tau)
    _validate_pairing(pairing, total)
    return pairing


def _validate_pairing(pairing: InterfacePairing, total: float) -> None:
    if abs(pairing.seg_length.sum() - total) > 1e-10 * total:
        raise GeometryMismatchError("segment lengths do not tile the interface")
    dots = np.einsum("kd,kd->k", pairing.seg_n_f, pairing.seg_n_p)
    if np.any(dots > -1.0 + 1e-8):
        worst = float(dots.max())
        raise GeometryMismatchError(f"opposite normals violated, max n_f.n_p = {worst}")


@dataclass
class SegmentQuadrature:
    """Per-segment quadrature with preimages in both adjacent cells."""

    points_f: np.ndarray     # (n_seg, q, 2) reference coords in the fluid cell
    points_p: np.ndarray     # (n_seg, q, 2) reference coords in the poro cell
    phys: np.ndarray         # (n_seg, q, 2) physical points (poro-side geometry)
    weights: np.ndarray      # (n_seg, q) arclength weights
    t_edge_p: np.ndarray     # (n_seg, q) parameter on the poro edge (multiplier coord)
    cells_f: np.ndarray
    cells_p: np.ndarray


def segment_quadrature(pairing: InterfacePairing, degree: int) -> SegmentQuadrature:
    rule = edge_rule(degree)
    q = rule.points
    nseg = pairing.n_segments
    nq = len(q)
    from .spaces import _geometry

    geo_f = _geometry(pairing.mesh_f)
    geo_p = _geometry(pairing.mesh_p)
    pts_f = np.empty((nseg, nq, 2))
    pts_p = np.empty((nseg, nq, 2))
    phys = np.empty((nseg, nq, 2))
    t_edge_p = np.empty((nseg, nq))
    cells_f = np.empty(nseg, dtype=np.int64)
    cells_p = np.empty(nseg, dtype=np.int64)
    for k in range(nseg):
        fe = pairing.fluid_edges[pairing.seg_fluid[k]]
        pe = pairing.poro_edges[pairing.seg_poro[k]]
        cells_f[k] = fe.cell
        cells_p[k] = pe.cell
        tf = pairing.seg_t_f[k, 0] + q * (pairing.seg_t_f[k, 1] - pairing.seg_t_f[k, 0])
        tp = pairing.seg_t_p[k, 0] + q * (pairing.seg_t_p[k, 1] - pairing.seg_t_p[k, 0])
        t_edge_p[k] = tp
        xf = fe.a[None, :] + tf[:, None] * (fe.b - fe.a)[None, :]
        xp = pe.a[None, :] + tp[:, None] * (pe.b - pe.a)[None, :]
        if np.abs(xf - xp).max() > 1e-10 * max(1.0, pairing.length):
            raise GeometryMismatchError(f"segment {k}: preimages disagree by {np.abs(xf - xp).max():.2e}")
        phys[k] = xp
        pts_f[k] = geo_f.ref_coords(fe.cell, xf)
        pts_p[k] = geo_p.ref_coords(pe.cell, xp)
    weights = rule.weights[None, :] * pairing.seg_length[:, None]
    return SegmentQuadrature(points_f=pts_f, points_p=pts_p, phys=phys, weights=weights,
                             t_edge_p=t_edge_p, cells_f=cells_f, cells_p=cells_p)


def tangential_permeability(pairing: InterfacePairing, K) -> np.ndarray:
    """K_j = (K tau) . tau per segment, K taken from the adjacent poro cell."""
    tau = pairing.seg_tau
    if np.ndim(K) == 2:
        return np.einsum("kd,de,ke->k", tau, np.asarray(K, dtype=float), tau)
    K = np.asarray(K, dtype=float)
    cells = np.array([pairing.poro_edges[i].cell for i in pairing.seg_poro])
    return np.einsum("kd,kde,ke->k", tau, K[cells], tau)
