"""Local Neumann-to-Dirichlet maps for Schroedinger potentials: P1 forward
solver, monotonicity identity, localized potentials and the
positive-eigenvalue distinguishability test."""

__version__ = "0.1.0"

from .assembly import (
    GammaPatch,
    Potential,
    assemble_boundary_load,
    assemble_stiffness,
    assemble_weighted_mass,
    build_gamma_patch,
)
from .detection import SpectrumReport, difference_spectrum, inclusion_sweep
from .forward import NtdMatrix, SpdSolver, ntd_apply, ntd_matrix, solve_neumann
from .localized import (
    VirtualMeasurementGram,
    adjoint_restrict,
    build_gram,
    localized_sequence,
    virtual_source_solve,
)
from .mesh import Mesh, Region, audit_mesh, build_unit_square_mesh, load_mesh, resolve_region, save_mesh
from .monotonicity import monotonicity_bound, monotonicity_identity_residual, quadratic_form_diff
