"""
Neumann problem  -Laplace u + q u = 0,  du/dn = g on Gamma, 0 elsewhere,
and the local Neumann-to-Dirichlet matrix on Gamma.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .assembly import Potential, assemble_boundary_load, assemble_stiffness, assemble_weighted_mass
from .errors import IndefiniteMatrixError, PatchError, SolverError

log = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-10
DIRECT_LIMIT = 20_000


def _relative_residuals(A, x, b):
    r = A @ x - b
    bn = np.linalg.norm(b, axis=0)
    rn = np.linalg.norm(r, axis=0)
    return np.where(bn > 0, rn / np.where(bn > 0, bn, 1.0), rn)


def _pcg(A, b, diag, rtol, maxiter):
    """Jacobi-preconditioned conjugate gradients for one right-hand side."""
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0.0
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise IndefiniteMatrixError(
                "conjugate gradients met a non-positive curvature direction",
                np.linalg.norm(r) / bnorm)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            break
        z = r / diag
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > rtol:
        raise SolverError(
            f"conjugate gradients did not converge in {maxiter} iterations "
            f"(relative residual {res:.3e})", res)
    return x, res


class SpdSolver:
    """Solver for a sparse symmetric positive definite system.

    Sparse LU with symmetric ordering and no pivoting (an LDL^T in
    disguise) up to ``DIRECT_LIMIT`` unknowns, Jacobi-preconditioned CG
    above.  Every solve is checked against ``rtol`` in the relative
    residual.  The object is read-only after construction.
    """

    def __init__(self, matrix, method="auto", rtol=RESIDUAL_RTOL, maxiter=None):
        self.matrix = sp.csr_matrix(matrix)
        n = self.matrix.shape[0]
        self.rtol = rtol
        if method == "auto":
            method = "direct" if n <= DIRECT_LIMIT else "cg"
        self.method = method
        diag = self.matrix.diagonal()
        if np.any(diag <= 0):
            raise IndefiniteMatrixError("system matrix has a non-positive diagonal entry")
        if method == "direct":
            lu = sla.splu(self.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                          options=dict(SymmetricMode=True))
            pivots = lu.U.diagonal()
            if not np.array_equal(lu.perm_r, lu.perm_c) or np.any(pivots <= 0):
                raise IndefiniteMatrixError(
                    "system matrix is not positive definite (non-positive pivot)")
            self._lu = lu
        elif method == "cg":
            self._diag = diag
            self.maxiter = maxiter or 10 * n
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.matrix.shape[0]:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, system has {self.matrix.shape[0]}")
        if self.method == "direct":
            x = self._lu.solve(b)
            res = _relative_residuals(self.matrix, x, b)
            if np.any(res > self.rtol):
                # one step of iterative refinement
                x = x + self._lu.solve(b - self.matrix @ x)
                res = _relative_residuals(self.matrix, x, b)
            worst = float(np.max(res, initial=0.0))
            if worst > self.rtol:
                raise SolverError(f"direct solve residual {worst:.3e} exceeds {self.rtol:.0e}", worst)
            return x
        if b.ndim == 1:
            return _pcg(self.matrix, b, self._diag, self.rtol, self.maxiter)[0]
        cols = []
        for j in range(b.shape[1]):
            try:
                cols.append(_pcg(self.matrix, b[:, j], self._diag, self.rtol, self.maxiter)[0])
            except SolverError as exc:
                exc.column = j
                raise
        return np.column_stack(cols) if cols else np.zeros_like(b)


def system_matrix(mesh, q):
    """``K + M_q`` for the potential ``q``."""
    return (assemble_stiffness(mesh) + assemble_weighted_mass(mesh, q)).tocsr()


def solve_neumann(K, Mq, load, solver=None):
    """Solve ``(K + Mq) u = load``.

    Pass a prepared :class:`SpdSolver` to reuse a factorization.
    """
    if solver is None:
        solver = SpdSolver(K + Mq)
    load = np.asarray(load, dtype=float)
    if not np.any(load):
        return np.zeros_like(load)
    return solver.solve(load)


@dataclass(frozen=True)
class NtdMatrix:
    """Dense Neumann-to-Dirichlet matrix on a Gamma patch.

    ``matrix[:, j]`` is the Gamma trace of the solution for the j-th nodal
    basis flux.  ``basis`` holds the full solutions (one column per Gamma
    node) so that interior quantities can be formed without new solves.
    """

    matrix: np.ndarray
    patch: object = field(repr=False)
    q: Potential = field(repr=False)
    basis: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def weighted(self):
        """``M_Gamma @ matrix``, the symmetric representative of the operator."""
        return self.patch.mass @ self.matrix

    def solution(self, g):
        """Nodal solution for the Gamma flux ``g`` (linear combination of the basis)."""
        return self.basis @ np.asarray(g, dtype=float)


def ntd_matrix(mesh, patch, q, solver=None):
    """Assemble the local NtD matrix ``T S^{-1} E M_Gamma`` for potential ``q``."""
    if not isinstance(q, Potential):
        q = Potential(q)
    if solver is None:
        solver = SpdSolver(system_matrix(mesh, q))
    loads = assemble_boundary_load(patch, np.eye(patch.size))
    try:
        basis = solver.solve(loads)
    except SolverError as exc:
        col = getattr(exc, "column", None)
        where = f" (Gamma basis column {col})" if col is not None else ""
        raise type(exc)(f"{exc}{where}", exc.residual) from exc
    matrix = basis[patch.nodes]
    basis.setflags(write=False)
    matrix.setflags(write=False)
    return NtdMatrix(matrix, patch, q, basis)


def ntd_apply(L, g):
    g = np.asarray(g, dtype=float)
    if g.shape[0] != L.dim:
        raise PatchError(f"flux has {g.shape[0]} values, NtD matrix has dimension {L.dim}")
    return L.matrix @ g


def rayleigh_quotient(L, g):
    """``(g, L g) / (g, g)`` in the L2(Gamma) inner product."""
    M = L.patch.mass
    g = np.asarray(g, dtype=float)
    return float(g @ M @ (L.matrix @ g)) / float(g @ M @ g)


def separable_rayleigh_limit(k, q=1.0):
    """Continuum Rayleigh quotient on the unit square for the flux cos(k pi x)
    on the bottom edge and a constant potential: coth(mu)/mu with
    mu = sqrt(k^2 pi^2 + q)."""
    mu = np.sqrt((k * np.pi) ** 2 + q)
    return float(1.0 / (np.tanh(mu) * mu))


def separable_solution(x, y, k, q=1.0):
    """Closed-form solution for the flux cos(k pi x) on the bottom edge."""
    mu = np.sqrt((k * np.pi) ** 2 + q)
    return np.cos(k * np.pi * x) * np.cosh(mu * (1.0 - y)) / (mu * np.sinh(mu))


def write_nodal_field(u, path):
    with open(path, "w") as fh:
        for v in np.asarray(u, dtype=float).tolist():
            fh.write(f"{v!r}\n")


def read_nodal_field(path):
    return np.loadtxt(path, dtype=float, ndmin=1)


def write_ntd(L, path):
    A = L.matrix if isinstance(L, NtdMatrix) else np.asarray(L)
    with open(path, "w") as fh:
        fh.write(f"ntd {A.shape[0]}\n")
        for row in A:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_ntd(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 2 or head[0] != "ntd":
            raise ValueError(f"{path}: expected header 'ntd <dim>'")
        dim = int(head[1])
        A = np.loadtxt(fh, dtype=float, ndmin=2)
    if A.shape != (dim, dim):
        raise ValueError(f"{path}: header says {dim}, found shape {A.shape}")
    return A
