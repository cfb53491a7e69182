"""
Virtual measurement operators and localized potentials.

For a region R the operator L_R maps a source density f on R to the Gamma
trace of v solving

    -Laplace v + q1 v = |q1 - q2|^{1/2} f chi_R,   dv/dn = 0,

and its adjoint maps a flux g to ``(|q1 - q2|^{1/2} u_g)|_R`` where u_g is
the q1 Neumann solution.  Everything is discretised with P1 fields and
piecewise-constant weights, so the duality holds up to solver residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .assembly import LOCAL_MASS, Potential, mass_matrix, triangle_l2_products
from .errors import NoContrastError
from .forward import SpdSolver, ntd_matrix, system_matrix
from .mesh import Region, resolve_region
from .table import write_csv

EPS = np.finfo(float).eps


def contrast_weight(q1, q2):
    """Per-triangle ``|q1 - q2|^{1/2}``."""
    return np.sqrt(np.abs(_values(q1) - _values(q2)))


def _values(q):
    return q.values if isinstance(q, Potential) else np.asarray(q, dtype=float)


def _triangles(mesh, region):
    if isinstance(region, Region):
        return resolve_region(mesh, region)
    return np.asarray(region, dtype=np.int64)


def virtual_source_solve(mesh, q1, weight, region, f, solver=None):
    """Apply the virtual measurement source problem for density ``f``.

    Parameters
    ----------
    region : Region or array of triangle indices
    f : array
        One value per region triangle, in :func:`resolve_region` order.

    Returns
    -------
    ndarray
        Nodal solution ``v``; ``v[patch.nodes]`` is ``L_R f``.
    """
    tris = _triangles(mesh, region)
    f = np.asarray(f, dtype=float)
    if f.shape != tris.shape:
        raise ValueError(f"density has {f.size} values, region has {tris.size} triangles")
    w = np.asarray(weight, dtype=float)[tris]
    per_vertex = w * f * mesh.areas()[tris] / 3.0
    load = np.zeros(mesh.n_nodes)
    np.add.at(load, mesh.triangles[tris].ravel(), np.repeat(per_vertex, 3))
    if not np.any(load):
        return np.zeros(mesh.n_nodes)
    if solver is None:
        solver = SpdSolver(system_matrix(mesh, q1))
    return solver.solve(load)


@dataclass(frozen=True)
class RegionFunction:
    """Weighted P1 field restricted to a set of triangles (discontinuous
    across the region boundary, linear on each triangle)."""

    triangles: np.ndarray
    values: np.ndarray
    areas: np.ndarray = field(repr=False)

    def norm_squared(self):
        return float(np.sum(self.areas * np.einsum("ti,ij,tj->t", self.values, LOCAL_MASS, self.values)))

    def norm(self):
        return math.sqrt(self.norm_squared())

    def inner_piecewise_constant(self, f):
        """L2 inner product with a per-triangle constant density ``f``."""
        return float(np.sum(np.asarray(f, dtype=float) * self.areas * self.values.sum(axis=1) / 3.0))


def adjoint_restrict(mesh, u, weight, region):
    """``(weight * u)|_region`` for a q1 Neumann solution ``u``."""
    tris = _triangles(mesh, region)
    w = np.asarray(weight, dtype=float)[tris]
    vals = w[:, None] * np.asarray(u, dtype=float)[mesh.triangles[tris]]
    return RegionFunction(tris, vals, mesh.areas()[tris])


def weighted_energy(mesh, u, weights, region=None):
    """``sum_T w_T int_T u^2`` over ``region`` (whole mesh if None)."""
    per_tri = np.asarray(weights, dtype=float) * triangle_l2_products(mesh, u)
    if region is None:
        return float(per_tri.sum())
    return float(per_tri[_triangles(mesh, region)].sum())


@dataclass(frozen=True)
class VirtualMeasurementGram:
    """``gram[i, j] = int_R |q1 - q2| u_i u_j`` for the Gamma basis solutions.

    ``g @ gram @ g`` is the squared norm of the adjoint applied to ``g``.
    """

    region: object
    triangles: np.ndarray
    gram: np.ndarray
    weight: np.ndarray = field(repr=False)

    def norm(self, g):
        g = np.asarray(g, dtype=float)
        return math.sqrt(max(float(g @ self.gram @ g), 0.0))


def build_gram(mesh, patch, q1, q2, region, L1=None):
    """Gram matrix of the adjoint virtual measurement operator on ``region``.

    ``L1`` (the q1 NtD matrix on ``patch``) supplies the basis solutions;
    it is computed when omitted.
    """
    if L1 is None:
        L1 = ntd_matrix(mesh, patch, q1)
    tris = _triangles(mesh, region)
    weight = contrast_weight(q1, q2)
    w2 = np.zeros(mesh.n_triangles)
    w2[tris] = np.abs(_values(q1) - _values(q2))[tris]
    M = mass_matrix(mesh, w2)
    U = L1.basis
    G = U.T @ (M @ U)
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return VirtualMeasurementGram(region, tris, G, weight)


@dataclass(frozen=True)
class LocalizedStep:
    delta: float
    g: np.ndarray
    ratio: float
    norm_b: float
    norm_out: float
    eigenvalue: float


def localized_sequence(gram_b, gram_out, mass, deltas):
    """Fluxes concentrating the contrast energy on B while starving Omega minus V.

    For each ``delta`` the flux maximising
    ``(g, G_B g) / (g, (G_out + delta M) g)`` is the top eigenvector of the
    symmetric definite pencil.  The m-th maximiser ``g'`` is rescaled to
    ``g'/(m ||L_out^* g'||)`` so that ``||L_out^* g|| = 1/m``; when that norm
    vanishes, to ``m g'/||g'||`` instead.

    Returns
    -------
    list of LocalizedStep
        ``ratio`` is ``||L_B^* g|| / ||L_out^* g||`` (``inf`` when the
        denominator is below machine epsilon); the norms refer to the
        rescaled ``g``.
    """
    GB = getattr(gram_b, "gram", gram_b)
    GO = getattr(gram_out, "gram", gram_out)
    mass = np.asarray(mass, dtype=float)
    deltas = [float(d) for d in deltas]
    if not deltas:
        raise ValueError("empty delta schedule")
    if any(d <= 0 for d in deltas) or any(a <= b for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be positive and strictly decreasing")
    scale = max(np.linalg.norm(GO, 2), np.linalg.norm(mass, 2))
    if np.linalg.norm(GB, 2) <= 1e3 * EPS * scale:
        raise NoContrastError("B carries no contrast: q1 and q2 agree on the target region")

    steps = []
    n = GB.shape[0]
    for m, delta in enumerate(deltas, start=1):
        vals, vecs = scipy.linalg.eigh(GB, GO + delta * mass, subset_by_index=[n - 1, n - 1])
        gp = vecs[:, 0]
        gp = gp * np.sign(gp[np.argmax(np.abs(gp))])
        nb = math.sqrt(max(float(gp @ GB @ gp), 0.0))
        no = math.sqrt(max(float(gp @ GO @ gp), 0.0))
        ratio = nb / no if no >= EPS else math.inf
        if no >= EPS:
            g = gp / (m * no)
        else:
            g = m * gp / math.sqrt(float(gp @ mass @ gp))
        steps.append(LocalizedStep(
            delta=delta,
            g=g,
            ratio=ratio,
            norm_b=math.sqrt(max(float(g @ GB @ g), 0.0)),
            norm_out=math.sqrt(max(float(g @ GO @ g), 0.0)),
            eigenvalue=float(vals[0]),
        ))
    return steps


SEQUENCE_FIELDS = ["delta", "ratio", "normB", "normOut", "eigenvalue"]


def write_sequence_csv(steps, path):
    write_csv(path, SEQUENCE_FIELDS,
              ([s.delta, s.ratio, s.norm_b, s.norm_out, s.eigenvalue] for s in steps))
