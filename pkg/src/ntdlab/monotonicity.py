"""
Monotonicity inequality for local NtD operators and the exact energy
identity behind it:

    (g, (L2 - L1) g) = -int (q2 - q1) u1^2 + int |grad(u2 - u1)|^2 + int q2 (u1 - u2)^2

For Galerkin solutions on a common mesh the identity holds up to the
linear-solver residual, and the last two terms are nonnegative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import Potential, triangle_gradient_products, triangle_l2_products
from .errors import PatchError
from .forward import ntd_matrix
from .table import write_csv


def quadratic_form_diff(L1, L2, patch, g):
    """``(g, (L2 - L1) g)`` in L2(Gamma)."""
    if not (L1.patch.same_as(patch) and L2.patch.same_as(patch)):
        raise PatchError("NtD matrices live on different Gamma patches")
    g = np.asarray(g, dtype=float)
    if g.shape != (patch.size,):
        raise PatchError(f"flux has shape {g.shape}, Gamma has {patch.size} nodes")
    return float(g @ patch.mass @ (L2.matrix @ g - L1.matrix @ g))


def monotonicity_bound(mesh, q1, q2, u1):
    """Lower bound ``-int (q2 - q1) u1^2`` with exact elementwise integration."""
    u1 = np.asarray(u1, dtype=float)
    if u1.shape != (mesh.n_nodes,):
        raise ValueError(f"field has shape {u1.shape}, mesh has {mesh.n_nodes} nodes")
    dq = _values(q2) - _values(q1)
    return -float(np.sum(dq * triangle_l2_products(mesh, u1)))


def _values(q):
    return q.values if isinstance(q, Potential) else np.asarray(q, dtype=float)


@dataclass(frozen=True)
class IdentityResult:
    lhs: float
    rhs: float
    residual: float
    bound: float
    gradient_term: float
    potential_term: float

    @property
    def defect(self):
        """``lhs - bound``; nonnegative when the inequality holds."""
        return self.lhs - self.bound


def monotonicity_identity_residual(mesh, patch, q1, q2, g, L1=None, L2=None):
    """Evaluate both sides of the monotonicity identity for flux ``g``.

    ``L1``/``L2`` may be passed to reuse existing NtD matrices for ``q1``/``q2``.

    Returns
    -------
    IdentityResult
        ``residual = |lhs - rhs| / max(|lhs|, |rhs|, 1)``.
    """
    g = np.asarray(g, dtype=float)
    L1 = L1 if L1 is not None else ntd_matrix(mesh, patch, q1)
    L2 = L2 if L2 is not None else ntd_matrix(mesh, patch, q2)
    lhs = quadratic_form_diff(L1, L2, patch, g)
    u1 = L1.solution(g)
    u2 = L2.solution(g)
    d = u2 - u1
    bound = monotonicity_bound(mesh, q1, q2, u1)
    grad_term = float(np.sum(triangle_gradient_products(mesh, d)))
    pot_term = float(np.sum(_values(q2) * triangle_l2_products(mesh, d)))
    rhs = bound + grad_term + pot_term
    residual = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
    return IdentityResult(lhs, rhs, residual, bound, grad_term, pot_term)


def random_piecewise_potential(mesh, rng, low=0.5, high=5.0):
    return Potential(rng.uniform(low, high, size=mesh.n_triangles))


CSV_FIELDS = ["seed", "n", "q", "lhs", "rhs", "bound", "residual"]


def write_identity_csv(rows, path):
    """Write identity results; ``rows`` are dicts keyed by ``CSV_FIELDS``."""
    write_csv(path, CSV_FIELDS, ([row[k] for k in CSV_FIELDS] for row in rows))
