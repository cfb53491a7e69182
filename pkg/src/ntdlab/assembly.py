"""
Piecewise-linear finite element matrices for  b(u, w) = int grad u . grad w + q u w
and the boundary functional  l(w) = int_Gamma g w ds.

All matrices are assembled from their upper triangle and mirrored, so they
are bitwise symmetric.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MeshError, PatchError, PotentialError
from .mesh import region_mask

LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
LOCAL_EDGE_MASS = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0

SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class Potential:
    """Piecewise-constant potential, one value per triangle, bounded below
    by a positive constant."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise PotentialError("potential has no values")
        if not np.all(np.isfinite(v)):
            raise PotentialError("potential values must be finite")
        if v.min() <= 0:
            bad = int(np.argmin(v))
            raise PotentialError(
                f"potential must have a positive lower bound (L-infinity-plus); "
                f"triangle {bad} has value {v[bad]!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def min_value(self):
        return float(self.values.min())

    @classmethod
    def constant(cls, mesh, value):
        return cls(np.full(mesh.n_triangles, float(value)))

    @classmethod
    def from_regions(cls, mesh, base, overrides=()):
        """Constant ``base`` with ``(region, value)`` overrides applied in order."""
        v = np.full(mesh.n_triangles, float(base))
        for region, value in overrides:
            v[region_mask(mesh, region)] = float(value)
        return cls(v)

    def __add__(self, other):
        other = other.values if isinstance(other, Potential) else other
        return Potential(self.values + other)


def _symmetric_from_entries(rows, cols, vals, n):
    """Sum local contributions into an exactly symmetric CSR matrix."""
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    keep = rows <= cols
    upper = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    upper.sum_duplicates()
    return (upper + sp.triu(upper, k=1).T).tocsr()


def _local_indices(triangles):
    rows = np.repeat(triangles, 3, axis=1)
    cols = np.tile(triangles, (1, 3))
    return rows, cols


def assemble_stiffness(mesh):
    """P1 stiffness matrix, ``K[i, j] = int grad phi_i . grad phi_j``."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas()
    if np.any(area <= 0):
        raise MeshError("degenerate or inverted triangle in stiffness assembly")
    # rotated edge vectors opposite each vertex: grad phi_i = (b_i, c_i) / (2|T|)
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (4.0 * area[:, None, None])
    rows, cols = _local_indices(mesh.triangles)
    return _symmetric_from_entries(rows, cols, local, mesh.n_nodes)


def mass_matrix(mesh, weights):
    """P1 mass matrix with a nonnegative piecewise-constant weight.

    Zero weights are allowed here, unlike :func:`assemble_weighted_mass`.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (mesh.n_triangles,):
        raise ValueError(f"need one weight per triangle ({mesh.n_triangles}), got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    local = (w * mesh.areas())[:, None, None] * LOCAL_MASS
    rows, cols = _local_indices(mesh.triangles)
    return _symmetric_from_entries(rows, cols, local, mesh.n_nodes)


def assemble_weighted_mass(mesh, q):
    """Mass matrix weighted by the potential, ``M[i, j] = int q phi_i phi_j``."""
    if not isinstance(q, Potential):
        q = Potential(q)
    if q.values.shape != (mesh.n_triangles,):
        raise PotentialError(
            f"potential has {q.values.size} values, mesh has {mesh.n_triangles} triangles")
    return mass_matrix(mesh, q.values)


def triangle_l2_products(mesh, u, v=None):
    """Exact ``int_T u v`` for every triangle, for P1 nodal fields ``u``, ``v``."""
    v = u if v is None else v
    ut = np.asarray(u)[mesh.triangles]
    vt = np.asarray(v)[mesh.triangles]
    return mesh.areas() * np.einsum("ti,ij,tj->t", ut, LOCAL_MASS, vt)


def triangle_gradient_products(mesh, u, v=None):
    """Exact ``int_T grad u . grad v`` for every triangle."""
    v = u if v is None else v
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas()
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1)
    ut = np.asarray(u)[mesh.triangles]
    vt = np.asarray(v)[mesh.triangles]
    gu = np.stack([np.sum(b * ut, 1), np.sum(c * ut, 1)], axis=1)
    gv = np.stack([np.sum(b * vt, 1), np.sum(c * vt, 1)], axis=1)
    return np.sum(gu * gv, axis=1) / (4.0 * area)


@dataclass(frozen=True)
class GammaPatch:
    """Boundary part Gamma with its P1 trace basis and mass matrix.

    Attributes
    ----------
    nodes : ndarray of int
        Global indices of the Gamma nodes, ordered along the boundary.
    edges : ndarray of int, shape (E, 2)
        Selected boundary edges in global numbering.
    mass : ndarray, shape (len(nodes), len(nodes))
        Dense L2(Gamma) mass matrix in the Gamma node ordering.
    n_mesh_nodes : int
    """

    nodes: np.ndarray
    edges: np.ndarray
    mass: np.ndarray = field(repr=False)
    n_mesh_nodes: int

    @property
    def size(self):
        return len(self.nodes)

    @property
    def length(self):
        return float(self.mass.sum())

    def inner(self, g, h):
        """L2(Gamma) inner product of two Gamma nodal vectors."""
        return float(np.asarray(g) @ self.mass @ np.asarray(h))

    def same_as(self, other):
        return self is other or (
            self.n_mesh_nodes == other.n_mesh_nodes
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.edges, other.edges))


def _perimeter_parameter(points, lo, hi):
    """Position on the bounding-box perimeter in [0, 4), counter-clockwise
    from the lower-left corner; NaN off the box."""
    w, h = hi - lo
    tol = 1e-12 * max(w, h)
    x, y = points[:, 0], points[:, 1]
    s = np.full(len(points), np.nan)
    left = np.abs(x - lo[0]) <= tol
    top = np.abs(y - hi[1]) <= tol
    right = np.abs(x - hi[0]) <= tol
    bottom = np.abs(y - lo[1]) <= tol
    s[left] = 3.0 + (hi[1] - y[left]) / h
    s[top] = 2.0 + (hi[0] - x[top]) / w
    s[right] = 1.0 + (y[right] - lo[1]) / h
    s[bottom] = (x[bottom] - lo[0]) / w
    return s


def _select_edges(mesh, spec):
    edges = mesh.boundary_edges
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    if callable(spec):
        return np.asarray(spec(mids), dtype=bool)
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    s = _perimeter_parameter(mids, lo, hi)
    if isinstance(spec, str):
        spec = [part.strip() for part in spec.split(",") if part.strip()]
    if (isinstance(spec, tuple) and len(spec) == 2
            and all(isinstance(v, (int, float)) for v in spec)):
        s0, s1 = float(spec[0]) % 4.0, float(spec[1]) % 4.0
        if s1 == 0.0 and float(spec[1]) > 0:
            s1 = 4.0
        with np.errstate(invalid="ignore"):
            if s0 <= s1:
                return (s >= s0) & (s <= s1)
            return (s >= s0) | (s <= s1)
    names = list(spec)
    if "all" in names:
        return np.ones(len(edges), dtype=bool)
    mask = np.zeros(len(edges), dtype=bool)
    for name in names:
        if name not in SIDES:
            raise PatchError(f"unknown boundary side {name!r}; expected one of {SIDES} or 'all'")
        k = SIDES.index(name)
        with np.errstate(invalid="ignore"):
            mask |= (s >= k) & (s <= k + 1)
    return mask


def _order_chain(edges):
    """Order nodes along oriented edge chains (open chains first, then loops)."""
    nxt = {int(a): int(b) for a, b in edges}
    heads = set(nxt) - set(nxt.values())
    order = []
    seen = set()
    for start in sorted(heads):
        node = start
        while node not in seen:
            order.append(node)
            seen.add(node)
            if node not in nxt:
                break
            node = nxt[node]
    for start in sorted(nxt):
        node = start
        while node not in seen:
            order.append(node)
            seen.add(node)
            node = nxt[node]
    return np.array(order, dtype=np.int64)


def build_gamma_patch(mesh, spec="all"):
    """Select Gamma and assemble its boundary mass matrix.

    Parameters
    ----------
    mesh : Mesh
    spec : str, sequence of str, (float, float) or callable
        Side names of the bounding box (``"bottom"``, ``"right"``, ``"top"``,
        ``"left"``, ``"all"``, comma-separated allowed); a perimeter interval
        ``(s0, s1)`` with the box perimeter parametrised counter-clockwise
        over [0, 4) from the lower-left corner; or a predicate on an (E, 2)
        array of boundary edge midpoints.

    Nodes shared between Gamma and the rest of the boundary belong to Gamma.
    """
    mask = _select_edges(mesh, spec)
    if not mask.any():
        raise PatchError(f"boundary selection {spec!r} is empty; Gamma must be non-empty")
    edges = mesh.boundary_edges[mask]
    nodes = _order_chain(edges)
    local = {int(g): i for i, g in enumerate(nodes)}
    la = np.array([local[int(a)] for a in edges[:, 0]])
    lb = np.array([local[int(b)] for b in edges[:, 1]])
    h = np.linalg.norm(mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1)
    pair = np.stack([la, lb], axis=1)
    rows = np.repeat(pair, 2, axis=1)
    cols = np.tile(pair, (1, 2))
    vals = h[:, None, None] * LOCAL_EDGE_MASS
    mass = _symmetric_from_entries(rows, cols, vals, len(nodes)).toarray()
    for arr in (nodes, edges, mass):
        arr.setflags(write=False)
    return GammaPatch(nodes, edges, mass, mesh.n_nodes)


def assemble_boundary_load(patch, g):
    """Global load vector for the Neumann flux ``g`` given at the Gamma nodes."""
    g = np.asarray(g, dtype=float)
    if g.shape[0] != patch.size:
        raise PatchError(f"flux has {g.shape[0]} values, Gamma has {patch.size} nodes")
    load = np.zeros((patch.n_mesh_nodes,) + g.shape[1:])
    load[patch.nodes] = patch.mass @ g
    return load


def export_coo(matrix, path):
    """Write a sparse matrix as ``i j value`` lines."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {float(v)!r}\n")

