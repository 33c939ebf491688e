"""Triangular meshes for the two-subdomain geometry.

A ``Mesh2D`` stores one conforming triangulation (one subdomain per mesh in
this package).  Triangles are counterclockwise.  Boundary edges are stored
with the owning cell on their left, so the outward normal of edge (a, b) is
the direction (p_b - p_a) rotated by -90 degrees.

Boundary tags are lowercase identifiers; the tag ``"interface"`` marks the
side of the subdomain facing the other one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

FRACTURE_HALF_WIDTH = 0.05
FRACTURE_HALF_LENGTH = math.sqrt(0.5)

GEOMETRIC_TOL = 1e-10  # times domain diameter, node-coincidence tolerance


class MeshParseError(ValueError):
    """Raised for malformed mesh files; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Mesh2D:
    nodes: np.ndarray          # (n, 2) float
    tris: np.ndarray           # (m, 3) int, counterclockwise
    tri_tags: np.ndarray       # (m,) str, subdomain tag
    bedges: np.ndarray         # (k, 2) int, owner cell on the left
    bedge_tags: np.ndarray     # (k,) str
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- derived connectivity (built lazily, mesh treated as immutable) --

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_tris(self) -> int:
        return len(self.tris)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.tris]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def _edge_data(self):
        if "edges" not in self._cache:
            # local edge i is opposite local vertex i
            pairs = self.tris[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
            sorted_pairs = np.sort(pairs, axis=1)
            edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
            self._cache["edges"] = edges
            self._cache["cell_edges"] = inverse.reshape(-1, 3)
        return self._cache["edges"], self._cache["cell_edges"]

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) unique edges with sorted node indices."""
        return self._edge_data()[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(m, 3) global edge index opposite each local vertex."""
        return self._edge_data()[1]

    def edge_cells(self) -> np.ndarray:
        """(ne, 2) adjacent cells per edge, -1 when on the boundary."""
        if "edge_cells" not in self._cache:
            ne = len(self.edges)
            ec = np.full((ne, 2), -1, dtype=np.int64)
            for c in range(self.n_tris):
                for e in self.cell_edges[c]:
                    if ec[e, 0] == -1:
                        ec[e, 0] = c
                    else:
                        ec[e, 1] = c
            self._cache["edge_cells"] = ec
        return self._cache["edge_cells"]

    def bedge_owner(self) -> tuple[np.ndarray, np.ndarray]:
        """Owning cell and local edge index for every boundary edge."""
        if "bedge_owner" not in self._cache:
            edges, cell_edges = self._edge_data()
            lookup = {tuple(e): i for i, e in enumerate(edges)}
            ecells = self.edge_cells()
            owner = np.empty(len(self.bedges), dtype=np.int64)
            local = np.empty(len(self.bedges), dtype=np.int64)
            eid = np.empty(len(self.bedges), dtype=np.int64)
            for i, (a, b) in enumerate(self.bedges):
                key = (min(a, b), max(a, b))
                if key not in lookup:
                    raise ValueError(f"boundary edge {a, b} not a mesh edge")
                e = lookup[key]
                c0, c1 = ecells[e]
                if c1 != -1:
                    raise ValueError(f"boundary edge {a, b} is interior")
                owner[i] = c0
                local[i] = int(np.nonzero(self.cell_edges[c0] == e)[0][0])
                eid[i] = e
            self._cache["bedge_owner"] = (owner, local)
            self._cache["bedge_edge_ids"] = eid
        return self._cache["bedge_owner"]

    def bedge_edge_ids(self) -> np.ndarray:
        """Global mesh-edge index of every boundary edge."""
        self.bedge_owner()
        return self._cache["bedge_edge_ids"]

    def bedge_normals(self) -> np.ndarray:
        """Unit outward normals of the boundary edges."""
        d = self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def bedge_lengths(self) -> np.ndarray:
        d = self.nodes[self.bedges[:, 1]] - self.nodes[self.bedges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def boundary_edge_ids(self, tags) -> np.ndarray:
        if isinstance(tags, str):
            tags = (tags,)
        mask = np.isin(self.bedge_tags, list(tags))
        return np.nonzero(mask)[0]

    def h_max(self) -> float:
        p = self.nodes[self.tris]
        lengths = [np.linalg.norm(p[:, i] - p[:, j], axis=1) for i, j in ((0, 1), (1, 2), (2, 0))]
        return float(np.max(lengths))

    def validate(self) -> None:
        """Check the structural invariants; raises ValueError on violation."""
        if np.any(self.tris < 0) or np.any(self.tris >= self.n_nodes):
            raise ValueError("triangle node index out of range")
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} has non-positive area {areas[bad]:.3e}")
        # every boundary edge is a directed edge of exactly one triangle
        directed = set()
        for tri in self.tris:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                directed.add((int(a), int(b)))
        for a, b in self.bedges:
            if (int(a), int(b)) not in directed:
                raise ValueError(f"boundary edge ({a},{b}) not oriented with its cell")
        # conformity: each edge borders 2 cells or is a boundary edge
        ecells = self.edge_cells()
        bset = {tuple(sorted(map(int, e))) for e in self.bedges}
        for e, (c0, c1) in zip(self.edges, ecells):
            if c1 == -1 and tuple(map(int, e)) not in bset:
                raise ValueError(f"edge {tuple(e)} on boundary but untagged")


# ---------------------------------------------------------------------------
# structured rectangle mesh


def build_structured(rect, nx: int, ny: int, subdomain: str,
                     boundary_tags: dict[str, str]) -> Mesh2D:
    """Uniform triangulation of ``rect = (x0, x1, y0, y1)``.

    Each grid cell is split by the diagonal from its lower-left to its
    upper-right corner (consistent direction, no criss-cross).
    ``boundary_tags`` maps the sides 'left', 'right', 'bottom', 'top' to tags.
    """
    x0, x1, y0, y1 = map(float, rect)
    if nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    return _mesh_from_rows([ys[j] * np.ones(nx + 1) for j in range(ny + 1)],
                           [xs] * (ny + 1), subdomain, boundary_tags)


def _mesh_from_rows(row_y, row_x, subdomain, boundary_tags,
                    left_tag_per_row=None) -> Mesh2D:
    """Triangulate a stack of horizontal node rows (same node count per row).

    Rows may have different x-coordinates (horizontal trapezoid cells, always
    convex).  ``left_tag_per_row`` optionally overrides the 'left' tag for
    individual row intervals, which the fracture builder uses to split the
    left side into outer boundary and interface.
    """
    n_rows = len(row_y)
    n_cols = len(row_x[0])
    nodes = np.empty((n_rows * n_cols, 2))
    for j in range(n_rows):
        nodes[j * n_cols:(j + 1) * n_cols, 0] = row_x[j]
        nodes[j * n_cols:(j + 1) * n_cols, 1] = row_y[j]

    def nid(i, j):
        return j * n_cols + i

    tris = []
    for j in range(n_rows - 1):
        for i in range(n_cols - 1):
            a, b = nid(i, j), nid(i + 1, j)
            c, d = nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    tris = np.asarray(tris, dtype=np.int64)

    bedges, btags = [], []
    for i in range(n_cols - 1):  # bottom row, left to right
        bedges.append((nid(i, 0), nid(i + 1, 0)))
        btags.append(boundary_tags["bottom"])
    for j in range(n_rows - 1):  # right side, bottom to top
        bedges.append((nid(n_cols - 1, j), nid(n_cols - 1, j + 1)))
        btags.append(boundary_tags["right"])
    for i in range(n_cols - 1, 0, -1):  # top row, right to left
        bedges.append((nid(i, n_rows - 1), nid(i - 1, n_rows - 1)))
        btags.append(boundary_tags["top"])
    for j in range(n_rows - 1, 0, -1):  # left side, top to bottom
        bedges.append((nid(0, j), nid(0, j - 1)))
        tag = boundary_tags["left"]
        if left_tag_per_row is not None:
            tag = left_tag_per_row[j - 1]
        btags.append(tag)

    mesh = Mesh2D(
        nodes=nodes,
        tris=tris,
        tri_tags=np.full(len(tris), subdomain, dtype="U16"),
        bedges=np.asarray(bedges, dtype=np.int64),
        bedge_tags=np.asarray(btags, dtype="U16"),
    )
    mesh.validate()
    return mesh


# ---------------------------------------------------------------------------
# fracture geometry (reference domain [0,1] x [-1,1] with a lens-shaped
# fluid cavity attached to the left boundary)


def fracture_half_width(y: np.ndarray) -> np.ndarray:
    """Right extent of the fracture boundary, x^2 = 200(0.05-y)(0.05+y)."""
    return np.sqrt(np.maximum(0.0, 200.0 * (FRACTURE_HALF_WIDTH - y) * (FRACTURE_HALF_WIDTH + y)))


def build_fracture_domain(resolution: float):
    """Mesh the fluid lens and the surrounding matrix on the reference domain.

    Both meshes sample the fracture boundary at the same points (uniform in
    the elliptic angle), so their interface traces coincide and the common
    refinement is one-to-one.  Returns ``(fluid_mesh, poro_mesh)``.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    b = FRACTURE_HALF_WIDTH
    a = FRACTURE_HALF_LENGTH
    n_band = int(math.ceil(a * math.pi / resolution))
    n_band += n_band % 2  # keep y = 0 as a sample row
    ns_f = int(math.ceil(a / resolution))
    if n_band < 4 or ns_f < 2:
        raise ValueError(f"resolution {resolution} too coarse for fracture half-width {b}")

    theta = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n_band + 1)
    band_y = b * np.sin(theta)
    band_y[0], band_y[-1] = -b, b
    band_w = fracture_half_width(band_y)
    band_w[0] = band_w[-1] = 0.0

    fluid = _build_lens_mesh(band_y, band_w, ns_f)

    ns_p = int(math.ceil(1.0 / resolution))
    n_outer = int(math.ceil((1.0 - b) / resolution))
    xs = np.linspace(0.0, 1.0, ns_p + 1)
    below = np.linspace(-1.0, -b, n_outer + 1)[:-1]
    above = np.linspace(b, 1.0, n_outer + 1)[1:]
    row_y = np.concatenate([below, band_y, above])
    row_x = []
    left_tags = []
    for y in row_y:
        w = float(fracture_half_width(np.array([y]))[0]) if abs(y) < b else 0.0
        row_x.append(w + xs * (1.0 - w))
    # rows inside the open band have their left node on the fracture curve
    for j in range(len(row_y) - 1):
        lo, hi = row_y[j], row_y[j + 1]
        inside = (lo >= -b - 1e-14) and (hi <= b + 1e-14) and not (hi <= -b + 1e-14 or lo >= b - 1e-14)
        left_tags.append("interface" if inside else "left")
    poro = _mesh_from_rows(list(row_y), row_x, "poro",
                           {"bottom": "bottom", "right": "right", "top": "top", "left": "left"},
                           left_tag_per_row=left_tags)

    _check_trace_match(fluid, poro)
    return fluid, poro


def _build_lens_mesh(band_y, band_w, ns: int) -> Mesh2D:
    """Triangulate the lens {0 <= x <= w(y)}; the end rows collapse to points."""
    n_rows = len(band_y)
    s = np.linspace(0.0, 1.0, ns + 1)
    node_id = np.full((n_rows, ns + 1), -1, dtype=np.int64)
    nodes = []
    for j in range(n_rows):
        if band_w[j] == 0.0:
            idx = len(nodes)
            nodes.append((0.0, band_y[j]))
            node_id[j, :] = idx
        else:
            for i in range(ns + 1):
                node_id[j, i] = len(nodes)
                nodes.append((s[i] * band_w[j], band_y[j]))
    nodes = np.asarray(nodes)

    tris = []
    for j in range(n_rows - 1):
        for i in range(ns):
            a, bb = node_id[j, i], node_id[j, i + 1]
            c, d = node_id[j + 1, i + 1], node_id[j + 1, i]
            for tri in ((a, bb, c), (a, c, d)):
                if len(set(map(int, tri))) == 3:
                    tris.append(tri)
    tris = np.asarray(tris, dtype=np.int64)

    bedges, btags = [], []
    for j in range(n_rows - 1):  # curve side, bottom to top (fluid on the left)
        bedges.append((node_id[j, ns], node_id[j + 1, ns]))
        btags.append("interface")
    for j in range(n_rows - 1, 0, -1):  # mouth x = 0, top to bottom
        aid, bid = node_id[j, 0], node_id[j - 1, 0]
        if aid != bid:
            bedges.append((aid, bid))
            btags.append("inflow")
    mesh = Mesh2D(
        nodes=nodes,
        tris=tris,
        tri_tags=np.full(len(tris), "fluid", dtype="U16"),
        bedges=np.asarray(bedges, dtype=np.int64),
        bedge_tags=np.asarray(btags, dtype="U16"),
    )
    mesh.validate()
    return mesh


def _check_trace_match(fluid: Mesh2D, poro: Mesh2D) -> None:
    diam = math.sqrt(5.0)
    pf = _trace_points(fluid)
    pp = _trace_points(poro)
    if polyline_hausdorff(pf, pp) > GEOMETRIC_TOL * diam:
        raise ValueError("fluid and poro interface traces do not coincide")


def _trace_points(mesh: Mesh2D) -> np.ndarray:
    ids = mesh.boundary_edge_ids("interface")
    pts = mesh.nodes[np.unique(mesh.bedges[ids])]
    return pts[np.lexsort((pts[:, 0], pts[:, 1]))]


def polyline_hausdorff(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point-sampled polylines."""

    def one_sided(a, b):
        d = 0.0
        for pt in a:
            seg = np.linalg.norm(b - pt, axis=1).min()
            d = max(d, seg)
        return d

    return max(one_sided(p, q), one_sided(q, p))


# ---------------------------------------------------------------------------
# domain mapping


@dataclass(frozen=True)
class DomainMap:
    """Closed-form coordinate map with its Jacobian evaluator."""

    fn: Callable[[np.ndarray], np.ndarray]          # (n,2) -> (n,2)
    jacobian: Callable[[np.ndarray], np.ndarray]    # (n,2) -> (n,2,2)


def reservoir_domain_map() -> DomainMap:
    """Map from the reference rectangle to the curved physical reservoir.

    x = xh,  y = 5 cos((xh+yh)/100) cos^2((pi xh+yh)/100) + yh/2 - xh/10.
    """

    def fn(p):
        xh, yh = p[:, 0], p[:, 1]
        u = (xh + yh) / 100.0
        v = (math.pi * xh + yh) / 100.0
        y = 5.0 * np.cos(u) * np.cos(v) ** 2 + yh / 2.0 - xh / 10.0
        return np.column_stack([xh, y])

    def jac(p):
        xh, yh = p[:, 0], p[:, 1]
        u = (xh + yh) / 100.0
        v = (math.pi * xh + yh) / 100.0
        du = 0.01
        dy_dx = (-5.0 * np.sin(u) * du * np.cos(v) ** 2
                 - 10.0 * np.cos(u) * np.cos(v) * np.sin(v) * (math.pi / 100.0) - 0.1)
        dy_dy = (-5.0 * np.sin(u) * du * np.cos(v) ** 2
                 - 10.0 * np.cos(u) * np.cos(v) * np.sin(v) * du + 0.5)
        J = np.zeros((len(p), 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 0] = dy_dx
        J[:, 1, 1] = dy_dy
        return J

    return DomainMap(fn=fn, jacobian=jac)


def apply_domain_map(mesh: Mesh2D, dmap: DomainMap) -> Mesh2D:
    """Move mesh nodes through the map; connectivity and tags are kept."""
    J = dmap.jacobian(mesh.nodes)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("map Jacobian not positive at all mesh nodes")
    mapped = Mesh2D(
        nodes=dmap.fn(mesh.nodes),
        tris=mesh.tris.copy(),
        tri_tags=mesh.tri_tags.copy(),
        bedges=mesh.bedges.copy(),
        bedge_tags=mesh.bedge_tags.copy(),
    )
    areas = mapped.signed_areas()
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise ValueError(f"mapped triangle {bad} degenerates (area {areas[bad]:.3e})")
    return mapped


# ---------------------------------------------------------------------------
# ASCII mesh file format:
#   mesh2d 1
#   <#nodes> <#tris> <#bedges>
#   x y                per node
#   i j k subdomain    per triangle (0-based indices)
#   i j tag            per boundary edge


def write_mesh(mesh: Mesh2D, path) -> None:
    with open(path, "w") as f:
        f.write("mesh2d 1\n")
        f.write(f"{mesh.n_nodes} {mesh.n_tris} {len(mesh.bedges)}\n")
        for x, y in mesh.nodes:
            f.write(f"{float(x)!r} {float(y)!r}\n")
        for (i, j, k), tag in zip(mesh.tris, mesh.tri_tags):
            f.write(f"{i} {j} {k} {tag}\n")
        for (i, j), tag in zip(mesh.bedges, mesh.bedge_tags):
            f.write(f"{i} {j} {tag}\n")


def read_mesh(path) -> Mesh2D:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise MeshParseError("empty file", 1)
    if lines[0].split() != ["mesh2d", "1"]:
        raise MeshParseError(f"bad header {lines[0]!r}", 1)
    if len(lines) < 2:
        raise MeshParseError("missing size line", 2)
    try:
        n_nodes, n_tris, n_bedges = map(int, lines[1].split())
    except ValueError:
        raise MeshParseError(f"bad size line {lines[1]!r}", 2) from None

    def need(idx):
        if idx >= len(lines):
            raise MeshParseError("unexpected end of file", idx + 1)
        return lines[idx]

    nodes = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        ln = 2 + i
        parts = need(ln).split()
        try:
            x, y = float(parts[0]), float(parts[1])
        except (ValueError, IndexError):
            raise MeshParseError(f"bad node line {lines[ln]!r}", ln + 1) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MeshParseError("non-finite coordinate", ln + 1)
        nodes[i] = (x, y)

    tris = np.empty((n_tris, 3), dtype=np.int64)
    tri_tags = np.empty(n_tris, dtype="U16")
    for i in range(n_tris):
        ln = 2 + n_nodes + i
        parts = need(ln).split()
        if len(parts) != 4:
            raise MeshParseError(f"bad triangle line {lines[ln]!r}", ln + 1)
        try:
            idx = [int(p) for p in parts[:3]]
        except ValueError:
            raise MeshParseError(f"bad triangle line {lines[ln]!r}", ln + 1) from None
        for v in idx:
            if not 0 <= v < n_nodes:
                raise MeshParseError(f"triangle node index {v} out of range", ln + 1)
        tris[i] = idx
        tri_tags[i] = parts[3]

    bedges = np.empty((n_bedges, 2), dtype=np.int64)
    bedge_tags = np.empty(n_bedges, dtype="U16")
    for i in range(n_bedges):
        ln = 2 + n_nodes + n_tris + i
        parts = need(ln).split()
        if len(parts) != 3:
            raise MeshParseError(f"bad boundary edge line {lines[ln]!r}", ln + 1)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise MeshParseError(f"bad boundary edge line {lines[ln]!r}", ln + 1) from None
        for v in (a, b):
            if not 0 <= v < n_nodes:
                raise MeshParseError(f"edge node index {v} out of range", ln + 1)
        bedges[i] = (a, b)
        bedge_tags[i] = parts[2]

    mesh = Mesh2D(nodes=nodes, tris=tris, tri_tags=tri_tags,
                  bedges=bedges, bedge_tags=bedge_tags)
    mesh.validate()
    return mesh
