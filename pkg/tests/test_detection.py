import numpy as np
import pytest

from ntdlab.assembly import Potential, build_gamma_patch
from ntdlab.detection import (
    SWEEP_FIELDS,
    difference_spectrum,
    disk_grid,
    inclusion_sweep,
    pencil_eigenvalues,
    write_sweep_csv,
)
from ntdlab.errors import PatchError
from ntdlab.forward import ntd_matrix
from ntdlab.mesh import Region, build_unit_square_mesh
from ntdlab.table import read_csv

from conftest import random_potential


@pytest.fixture(scope="module")
def mesh():
    return build_unit_square_mesh(16)


@pytest.fixture(scope="module")
def patch(mesh):
    return build_gamma_patch(mesh, "bottom")


@pytest.fixture(scope="module")
def L_ref(mesh, patch):
    return ntd_matrix(mesh, patch, Potential.constant(mesh, 1.0))


def test_equal_potentials_no_verdict(L_ref):
    rep = difference_spectrum(L_ref, L_ref)
    assert not rep.verdict
    assert not np.any(rep.eigenvalues)


def test_constant_contrast_all_positive(mesh, patch, L_ref):
    L2 = ntd_matrix(mesh, patch, Potential.constant(mesh, 2.0))
    rep = difference_spectrum(L2, L_ref)
    assert rep.min_eigenvalue > rep.tolerance
    assert np.all(np.diff(rep.eigenvalues) <= 0)


def test_disk_inclusion_detected(mesh, patch, L_ref):
    q1 = Potential.from_regions(mesh, 1.0, [(Region.disk((0.5, 0.2), 0.1), 2.0)])
    rep = difference_spectrum(ntd_matrix(mesh, patch, q1), L_ref)
    assert rep.verdict
    assert rep.max_eigenvalue > 1e3 * rep.tolerance


def test_spectrum_antisymmetric(mesh, patch, rng):
    L1 = ntd_matrix(mesh, patch, random_potential(mesh, rng))
    L2 = ntd_matrix(mesh, patch, random_potential(mesh, rng))
    a = difference_spectrum(L1, L2).eigenvalues
    b = difference_spectrum(L2, L1).eigenvalues
    assert np.allclose(a, -b[::-1], rtol=0, atol=1e-10 * np.abs(a).max())


def test_asymmetric_pencil_rejected(patch):
    A = np.eye(patch.size)
    A[0, 1] = 1.0
    with pytest.raises(ValueError, match="not symmetric"):
        pencil_eigenvalues(A, patch.mass)


def test_patch_mismatch(mesh, L_ref):
    other = ntd_matrix(mesh, build_gamma_patch(mesh, "top"), Potential.constant(mesh, 1.0))
    with pytest.raises(PatchError):
        difference_spectrum(L_ref, other)


def test_sweep_without_perturbation(mesh, patch, L_ref):
    regions = [Region.disk((0.25, 0.25), 0.1), Region.disk((0.75, 0.5), 0.1)]
    entries = inclusion_sweep(mesh, L_ref, Potential.constant(mesh, 1.0), regions, 1.0)
    assert not any(e.inside for e in entries)
    assert [e.index for e in entries] == [0, 1]


def test_sweep_true_region_inside(mesh, patch):
    D = Region.disk((0.5, 0.25), 0.12)
    far = Region.disk((0.15, 0.8), 0.1)
    q = Potential.from_regions(mesh, 1.0, [(D, 2.0)])
    L_meas = ntd_matrix(mesh, patch, q)
    serial = inclusion_sweep(mesh, L_meas, Potential.constant(mesh, 1.0), [D, far], 1.0, max_workers=1)
    threaded = inclusion_sweep(mesh, L_meas, Potential.constant(mesh, 1.0), [D, far], 1.0, max_workers=2)
    assert [e.inside for e in serial] == [True, False]
    assert [e.min_eigenvalue for e in serial] == [e.min_eigenvalue for e in threaded]


def test_sweep_rejects_bad_input(mesh, L_ref):
    q = Potential.constant(mesh, 1.0)
    with pytest.raises(ValueError):
        inclusion_sweep(mesh, L_ref, q, [], 1.0)
    with pytest.raises(ValueError, match="no triangles"):
        inclusion_sweep(mesh, L_ref, q, [Region.disk((0.5, 0.5), 1e-3)], 1.0)
    with pytest.raises(ValueError):
        inclusion_sweep(mesh, L_ref, q, [Region.disk((0.5, 0.5), 0.2)], 0.0)


def test_disk_grid_order():
    grid = disk_grid(4, 0.05)
    assert len(grid) == 16
    assert grid[0].params[:2] == (0.125, 0.125)
    assert grid[1].params[:2] == (0.375, 0.125)
    assert grid[4].params[:2] == (0.125, 0.375)


def test_sweep_csv(tmp_path, mesh, L_ref):
    entries = inclusion_sweep(mesh, L_ref, Potential.constant(mesh, 1.0), disk_grid(2, 0.1), 1.0)
    write_sweep_csv(entries, tmp_path / "s.csv")
    rows = read_csv(tmp_path / "s.csv")
    assert list(rows[0]) == SWEEP_FIELDS
    assert {r["verdict"] for r in rows} == {"outside"}
