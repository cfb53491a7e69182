"""
Positive-eigenvalue test for L(q2) - L(q1) and a monotonicity-based
inclusion sweep.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import Potential
from .errors import PatchError
from .forward import ntd_matrix
from .mesh import Region, region_mask
from .table import write_csv

log = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-10
EIG_RTOL = 1e-10


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    tolerance: float

    @property
    def max_eigenvalue(self):
        return float(self.eigenvalues[0])

    @property
    def min_eigenvalue(self):
        return float(self.eigenvalues[-1])

    @property
    def verdict(self):
        """True when the difference has an eigenvalue above the tolerance."""
        return self.max_eigenvalue > self.tolerance


def default_tolerance(L):
    return EIG_RTOL * float(np.linalg.norm(L.weighted(), 2))


def pencil_eigenvalues(A, mass):
    """Descending eigenvalues of the pencil ``(A, mass)`` for symmetric ``A``.

    ``A`` is symmetrised after checking its asymmetry against
    ``SYMMETRY_RTOL``.
    """
    A = np.asarray(A, dtype=float)
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    asym = np.abs(A - A.T).max() / scale
    if asym > SYMMETRY_RTOL:
        raise ValueError(f"pencil is not symmetric (relative asymmetry {asym:.2e})")
    A = 0.5 * (A + A.T)
    return scipy.linalg.eigh(A, mass, eigvals_only=True)[::-1]


def difference_spectrum(L1, L2, patch=None, tol=None):
    """Spectrum of ``L2 - L1`` as an operator on L2(Gamma).

    The default tolerance is ``1e-10 * ||M_Gamma L1||_2``.
    """
    patch = L1.patch if patch is None else patch
    if not (L1.patch.same_as(patch) and L2.patch.same_as(patch)):
        raise PatchError("NtD matrices live on different Gamma patches")
    tol = default_tolerance(L1) if tol is None else float(tol)
    if tol <= 0:
        raise ValueError("eigenvalue tolerance must be positive")
    D = patch.mass @ (L2.matrix - L1.matrix)
    try:
        eig = pencil_eigenvalues(D, patch.mass)
    except ValueError as exc:
        raise ValueError(f"upstream invariant violation: {exc}") from exc
    return SpectrumReport(eig, tol)


@dataclass(frozen=True)
class SweepEntry:
    index: int
    region: object
    min_eigenvalue: float
    inside: bool


def inclusion_sweep(mesh, L_meas, q_ref, test_regions, contrast, patch=None, tol=None,
                    max_workers=None):
    """Monotonicity test over candidate regions.

    For each region R the test potential is ``q_ref + contrast * chi_R``.
    R is marked inside when ``L(test) - L_meas`` is positive semi-definite
    up to ``tol``: if R lies in the support of the true perturbation the
    test potential is dominated by the true one and monotonicity forces
    ``L(test) >= L_meas``.  Outside verdicts are heuristic.
    """
    patch = L_meas.patch if patch is None else patch
    regions = list(test_regions)
    if not regions:
        raise ValueError("inclusion sweep needs at least one test region")
    if contrast <= 0:
        raise ValueError("contrast must be positive")
    if not isinstance(q_ref, Potential):
        q_ref = Potential(q_ref)
    tol = default_tolerance(L_meas) if tol is None else float(tol)
    masks = []
    for i, region in enumerate(regions):
        mask = region_mask(mesh, region)
        if not mask.any():
            raise ValueError(f"test region {i} ({region}) contains no triangles")
        masks.append(mask)

    def test(i):
        q_test = Potential(q_ref.values + contrast * masks[i])
        L_test = ntd_matrix(mesh, patch, q_test)
        eig = pencil_eigenvalues(patch.mass @ (L_test.matrix - L_meas.matrix), patch.mass)
        lo = float(eig[-1])
        return SweepEntry(i, regions[i], lo, lo >= -tol)

    if max_workers == 1:
        results = [test(i) for i in range(len(regions))]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(test, range(len(regions))))
    log.debug("sweep: %d of %d regions inside", sum(r.inside for r in results), len(results))
    return results


SWEEP_FIELDS = ["region", "center_x", "center_y", "radius", "min_eigenvalue", "verdict"]


def write_sweep_csv(entries, path):
    rows = []
    for e in entries:
        if e.region.kind == "disk":
            cx, cy, r = e.region.params
        else:
            cx = cy = r = ""
        rows.append([e.index, cx, cy, r, e.min_eigenvalue, "inside" if e.inside else "outside"])
    write_csv(path, SWEEP_FIELDS, rows)


def disk_grid(k, radius, lo=0.0, hi=1.0):
    """``k x k`` grid of disks centred in the cells of ``[lo, hi]^2``, row-major
    from the lower-left cell."""
    h = (hi - lo) / k
    return [Region.disk((lo + (i + 0.5) * h, lo + (j + 0.5) * h), radius)
            for j in range(k) for i in range(k)]
