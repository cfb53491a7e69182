"""
Triangulations of polygonal domains, boundary structure and region selection.

Triangles are stored counter-clockwise.  Boundary edges inherit the
orientation of their owning triangle, so the domain lies to the left of
each boundary edge and the outward normal points to the right.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError


def _edge_table(triangles):
    """Return (sorted edge keys, owning triangle, local edge id) for all
    3*M directed triangle edges."""
    tri = np.asarray(triangles)
    starts = tri[:, [0, 1, 2]].ravel()
    ends = tri[:, [1, 2, 0]].ravel()
    owner = np.repeat(np.arange(len(tri)), 3)
    return starts, ends, owner


def _find_boundary_edges(triangles, n_nodes):
    starts, ends, owner = _edge_table(triangles)
    lo = np.minimum(starts, ends)
    hi = np.maximum(starts, ends)
    key = lo.astype(np.int64) * n_nodes + hi
    uniq, inverse, counts = np.unique(key, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
    on_boundary = counts[inverse] == 1
    edges = np.column_stack([starts[on_boundary], ends[on_boundary]])
    return edges, owner[on_boundary], len(uniq)


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    Attributes
    ----------
    nodes : ndarray, shape (K, 2)
    triangles : ndarray of int, shape (M, 3), counter-clockwise
    boundary_edges : ndarray of int, shape (B, 2), oriented with outward
        normal on the right
    boundary_owner : ndarray of int, shape (B,)
        Triangle owning each boundary edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = field(repr=False)
    boundary_owner: np.ndarray = field(repr=False)
    n_edges: int = field(repr=False)

    @classmethod
    def from_arrays(cls, nodes, triangles):
        """Build a mesh from raw coordinates and connectivity.

        Clockwise triangles are flipped; degenerate ones are rejected.
        """
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(nodes):
            raise MeshError("triangle references a node index out of range")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        area = _signed_areas(nodes, triangles)
        if np.any(area == 0.0):
            raise MeshError(f"degenerate triangle(s): {np.flatnonzero(area == 0.0)[:5].tolist()}")
        flip = area < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        edges, owner, n_edges = _find_boundary_edges(triangles, len(nodes))
        for arr in (nodes, triangles, edges, owner):
            arr.setflags(write=False)
        return cls(nodes, triangles, edges, owner, n_edges)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        return _signed_areas(self.nodes, self.triangles)

    def barycenters(self):
        return self.nodes[self.triangles].mean(axis=1)

    def boundary_nodes(self):
        return np.unique(self.boundary_edges)


def _signed_areas(nodes, triangles):
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_unit_square_mesh(n):
    """Uniform right-triangle mesh of [0, 1]^2.

    Every grid cell is split along its (i, j)-(i+1, j+1) diagonal.  Nodes
    are numbered row-major, ``index = j * (n + 1) + i`` with ``x = i / n``
    and ``y = j / n``.
    """
    if int(n) != n or n < 1:
        raise MeshError(f"invalid subdivision n={n!r}; need a positive integer")
    n = int(n)
    t = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(t, t)
    nodes = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    a = (j * (n + 1) + i).ravel()
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return Mesh.from_arrays(nodes, tris)


@dataclass(frozen=True)
class MeshAudit:
    positive_areas: bool
    edge_multiplicity: bool
    boundary_orientation: bool
    euler_characteristic: int

    @property
    def ok(self):
        return (self.positive_areas and self.edge_multiplicity
                and self.boundary_orientation and self.euler_characteristic == 1)


def audit_mesh(mesh):
    """Re-check mesh invariants independently of construction.

    Edge multiplicities are counted with a plain dictionary rather than the
    vectorised routine used when building the mesh.
    """
    counts = {}
    owners = {}
    for t, tri in enumerate(mesh.triangles.tolist()):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
            owners.setdefault(key, []).append((t, a, b))
    multiplicity_ok = all(c in (1, 2) for c in counts.values())
    bset = {(min(a, b), max(a, b)): (a, b) for a, b in mesh.boundary_edges.tolist()}
    multiplicity_ok &= {k for k, c in counts.items() if c == 1} == set(bset)

    # outward normal (dy, -dx) must point away from the owning triangle
    orient_ok = True
    bary = mesh.barycenters()
    for (a, b), t in zip(mesh.boundary_edges.tolist(), mesh.boundary_owner.tolist()):
        pa, pb = mesh.nodes[a], mesh.nodes[b]
        normal = np.array([pb[1] - pa[1], pa[0] - pb[0]])
        if np.dot(normal, 0.5 * (pa + pb) - bary[t]) <= 0:
            orient_ok = False
            break

    euler = mesh.n_nodes - len(counts) + mesh.n_triangles
    return MeshAudit(
        positive_areas=bool(np.all(mesh.areas() > 0)),
        edge_multiplicity=bool(multiplicity_ok),
        boundary_orientation=orient_ok,
        euler_characteristic=euler,
    )


@dataclass(frozen=True)
class Region:
    """Subset of the domain selected by triangle barycenter.

    Use the constructors :meth:`disk`, :meth:`rectangle` and
    :meth:`triangle_set`.  Disks and rectangles are closed.
    """

    kind: str
    params: tuple

    @classmethod
    def disk(cls, center, radius):
        cx, cy = map(float, center)
        return cls("disk", (cx, cy, float(radius)))

    @classmethod
    def rectangle(cls, xmin, xmax, ymin, ymax):
        return cls("rectangle", (float(xmin), float(xmax), float(ymin), float(ymax)))

    @classmethod
    def triangle_set(cls, indices):
        return cls("triangles", tuple(sorted({int(i) for i in indices})))

    def contains(self, points):
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if self.kind == "disk":
            cx, cy, r = self.params
            return (points[:, 0] - cx) ** 2 + (points[:, 1] - cy) ** 2 <= r * r
        if self.kind == "rectangle":
            x0, x1, y0, y1 = self.params
            x, y = points[:, 0], points[:, 1]
            return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        raise MeshError(f"region kind {self.kind!r} has no point predicate")


def resolve_region(mesh, region):
    """Sorted indices of the triangles whose barycenter lies in ``region``."""
    if region.kind == "triangles":
        idx = np.array(region.params, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= mesh.n_triangles):
            raise MeshError("explicit triangle index out of range")
        return idx
    if not all(np.isfinite(region.params)):
        raise MeshError(f"non-finite region parameters {region.params}")
    return np.flatnonzero(region.contains(mesh.barycenters()))


def region_mask(mesh, region):
    mask = np.zeros(mesh.n_triangles, dtype=bool)
    mask[resolve_region(mesh, region)] = True
    return mask


def save_mesh(mesh, path):
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += ["{} {} {}".format(*t) for t in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read the plain-text mesh format written by :func:`save_mesh`.

    Boundary edges are recomputed from the connectivity.
    """
    tokens = Path(path).read_text().split()
    try:
        if tokens[0] != "nodes":
            raise MeshError("mesh file must start with 'nodes K'")
        k = int(tokens[1])
        pos = 2
        nodes = np.array(tokens[pos:pos + 2 * k], dtype=float).reshape(k, 2)
        pos += 2 * k
        if tokens[pos] != "triangles":
            raise MeshError("expected 'triangles M' after node block")
        m = int(tokens[pos + 1])
        pos += 2
        tris = np.array(tokens[pos:pos + 3 * m], dtype=np.int64).reshape(m, 3)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    if pos + 3 * m != len(tokens):
        raise MeshError(f"trailing data in mesh file {path}")
    return Mesh.from_arrays(nodes, tris)
