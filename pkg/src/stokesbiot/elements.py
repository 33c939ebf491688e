"""Reference element families on the unit triangle.

Vertices of the reference cell are v0=(0,0), v1=(1,0), v2=(0,1); local edge i
is opposite local vertex i.  Scalar Lagrange-type families are tabulated here;
Raviart-Thomas bases are constructed per physical cell (see ``build_rt_basis``)
so that global edge orientation and moment conventions are built in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import edge_rule, triangle_rule


@dataclass(frozen=True)
class ScalarElement:
    name: str
    degree: int
    dofs_per_vertex: int
    dofs_per_edge: int
    dofs_per_cell: int
    continuous: bool
    nodes: np.ndarray | None       # reference coords of nodal dofs, or None
    _tabulate: Callable

    @property
    def n_dofs(self) -> int:
        return 3 * self.dofs_per_vertex + 3 * self.dofs_per_edge + self.dofs_per_cell

    def tabulate(self, points: np.ndarray):
        """Values (n_dofs, n_pts) and reference gradients (n_dofs, n_pts, 2)."""
        return self._tabulate(np.atleast_2d(points))


def _bary(points):
    x, y = points[:, 0], points[:, 1]
    return 1.0 - x - y, x, y


def _tab_p0(points):
    n = len(points)
    return np.ones((1, n)), np.zeros((1, n, 2))


def _tab_p1(points):
    l0, l1, l2 = _bary(points)
    vals = np.stack([l0, l1, l2])
    grads = np.broadcast_to(
        np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])[:, None, :], (3, len(points), 2)
    ).copy()
    return vals, grads


def _tab_p2(points):
    l = np.stack(_bary(points))                       # (3, n)
    gl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    n = points.shape[0]
    vals = np.empty((6, n))
    grads = np.empty((6, n, 2))
    for i in range(3):
        vals[i] = l[i] * (2.0 * l[i] - 1.0)
        grads[i] = (4.0 * l[i] - 1.0)[:, None] * gl[i]
    # edge dof i sits on the edge opposite vertex i: 4 l_j l_k
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        vals[3 + i] = 4.0 * l[j] * l[k]
        grads[3 + i] = 4.0 * (l[j][:, None] * gl[k] + l[k][:, None] * gl[j])
    return vals, grads


def _tab_p1bubble(points):
    v1, g1 = _tab_p1(points)
    l0, l1, l2 = _bary(points)
    gl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    bub = 27.0 * l0 * l1 * l2
    gbub = 27.0 * (
        (l1 * l2)[:, None] * gl[0] + (l0 * l2)[:, None] * gl[1] + (l0 * l1)[:, None] * gl[2]
    )
    vals = np.vstack([v1, bub[None, :]])
    grads = np.concatenate([g1, gbub[None, :, :]], axis=0)
    return vals, grads


_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_MIDPOINTS = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])  # midpoint of edge i

P0 = ScalarElement("P0", 0, 0, 0, 1, False, np.array([[1 / 3, 1 / 3]]), _tab_p0)
P1 = ScalarElement("P1", 1, 1, 0, 0, True, _VERTS, _tab_p1)
P1DC = ScalarElement("P1dc", 1, 0, 0, 3, False, _VERTS, _tab_p1)
P2 = ScalarElement("P2", 2, 1, 1, 0, True, np.vstack([_VERTS, _MIDPOINTS]), _tab_p2)
P1BUBBLE = ScalarElement("P1bubble", 3, 1, 0, 1, True, None, _tab_p1bubble)

SCALAR_ELEMENTS = {e.name: e for e in (P0, P1, P1DC, P2, P1BUBBLE)}


def _check_in_reference(points, tol=1e-12):
    l0, l1, l2 = _bary(np.atleast_2d(points))
    if np.min([l0.min(), l1.min(), l2.min()]) < -tol:
        raise ValueError("point outside the reference triangle")


def eval_basis(family: str, points: np.ndarray):
    """Reference-element basis values at ``points``.

    Scalar families return (values, gradients); 'RT0' returns
    (values, divergences) with the unit-outward-flux normalization.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _check_in_reference(points)
    if family == "RT0":
        # phi_i = x - v_i has unit flux through edge i, zero through others
        vals = points[None, :, :] - _VERTS[:, None, :]
        divs = np.full((3, len(points)), 2.0)
        return vals, divs
    if family not in SCALAR_ELEMENTS:
        raise ValueError(f"unknown element family {family!r}")
    return SCALAR_ELEMENTS[family].tabulate(points)


def piola_map(verts: np.ndarray, ref_vals: np.ndarray, ref_divs: np.ndarray | None = None):
    """Contravariant Piola transform of reference vector fields to the
    affine cell ``verts`` (3, 2): v = J v_ref / det J, div v = div_ref / det J.

    ``ref_vals`` has shape (..., 2).  Edge fluxes are preserved, so
    H(div)-conforming fields stay normal-trace continuous.
    """
    J = np.stack([verts[1] - verts[0], verts[2] - verts[0]], axis=-1)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    if det <= 0:
        raise ValueError(f"degenerate cell, det J = {det}")
    vals = np.einsum("ab,...b->...a", J, ref_vals) / det
    if ref_divs is None:
        return vals
    return vals, ref_divs / det


# ---------------------------------------------------------------------------
# Raviart-Thomas bases on physical (affine) cells
#
# Degrees of freedom are defined against *global* edge conventions so that
# normal traces are single-valued across cells:
#   n_e   = (t_y, -t_x) where t is the unit vector from the lower- to the
#           higher-numbered global endpoint,
#   s     = arclength parameter from the lower- to the higher-numbered end.
# RT0 has one mean-flux dof per edge; RT1 adds a first edge moment against
# (2s - 1) and two interior mean-value dofs.


@dataclass
class RTCellBasis:
    """Nodal RT basis on one cell: coefficients over scaled vector monomials."""

    order: int
    centroid: np.ndarray
    scale: float
    coeffs: np.ndarray    # (n_mono, n_dofs)

    def eval(self, points: np.ndarray):
        """Values (n_dofs, n_pts, 2) and divergences (n_dofs, n_pts)."""
        X = (np.atleast_2d(points) - self.centroid) / self.scale
        mv, md = _rt_monomials(self.order, X)
        vals = np.einsum("kpd,kn->npd", mv, self.coeffs) / self.scale
        divs = np.einsum("kp,kn->np", md, self.coeffs) / self.scale**2
        return vals, divs


def _rt_monomials(order: int, X: np.ndarray):
    """Vector monomial basis of RT_k and its divergence, at points (..., 2)."""
    x, y = X[..., 0], X[..., 1]
    z = np.zeros_like(x)
    o = np.ones_like(x)
    if order == 0:
        comp = [([o, z], z), ([z, o], z), ([x, y], 2 * o)]
    elif order == 1:
        comp = [
            ([o, z], z), ([x, z], o), ([y, z], z),
            ([z, o], z), ([z, x], z), ([z, y], o),
            ([x * x, x * y], 3 * x), ([x * y, y * y], 3 * y),
        ]
    else:
        raise ValueError(f"unsupported RT order {order}")
    vals = np.stack([np.stack(v, axis=-1) for v, _ in comp])   # (k, n, 2)
    divs = np.stack([d for _, d in comp])                       # (k, n)
    return vals, divs


_EDGE_Q = edge_rule(5)
_TRI_Q = triangle_rule(3)


def build_rt_basis(order: int, verts: np.ndarray, edge_ends: np.ndarray) -> RTCellBasis:
    """RT basis on the triangle ``verts`` (3,2).

    ``edge_ends[i]`` holds the two *coordinates* (2,2) of local edge i in
    global orientation (lower-numbered endpoint first).  Dof ordering:
    edge0 moments, edge1 moments, edge2 moments, then interior moments.
    """
    centroid = verts.mean(axis=0)
    u, v = verts[1] - verts[0], verts[2] - verts[0]
    area = 0.5 * abs(u[0] * v[1] - u[1] * v[0])
    scale = np.sqrt(area)
    n_mono = 3 if order == 0 else 8
    n_edge_m = 1 if order == 0 else 2
    M = np.zeros((n_mono, n_mono))
    row = 0
    sq, wq = _EDGE_Q.points, _EDGE_Q.weights
    for i in range(3):
        A, B = edge_ends[i]
        t = B - A
        L = np.linalg.norm(t)
        n = np.array([t[1], -t[0]]) / L
        pts = A[None, :] + sq[:, None] * t[None, :]
        mv, _ = _rt_monomials(order, (pts - centroid) / scale)
        flux = np.einsum("kpd,d->kp", mv, n) / scale
        M[row] = flux @ (wq * L)
        row += 1
        if n_edge_m == 2:
            M[row] = flux @ (wq * L * (2.0 * sq - 1.0))
            row += 1
    if order == 1:
        ref = _TRI_Q.points
        pts = verts[0] + ref @ np.stack([verts[1] - verts[0], verts[2] - verts[0]])
        w = _TRI_Q.weights * 2.0 * area
        mv, _ = _rt_monomials(order, (pts - centroid) / scale)
        M[row] = np.einsum("kpd,p->kd", mv, w)[:, 0] / (scale * area)
        M[row + 1] = np.einsum("kpd,p->kd", mv, w)[:, 1] / (scale * area)
    coeffs = np.linalg.solve(M, np.eye(n_mono))
    return RTCellBasis(order=order, centroid=centroid, scale=scale, coeffs=coeffs)
