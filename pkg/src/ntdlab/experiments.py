"""
Experiment drivers behind the command line runner.

Each driver takes a validated :class:`~ntdlab.config.ExperimentConfig` and
an output directory, writes its tables, and returns the written paths.
"""
from __future__ import annotations

import contextlib
import logging
import math
from pathlib import Path

import numpy as np

from .assembly import Potential, build_gamma_patch
from .config import ConfigError
from .detection import difference_spectrum, disk_grid, inclusion_sweep, pencil_eigenvalues, write_sweep_csv
from .errors import NoContrastError, SolverError
from .forward import (
    SpdSolver,
    ntd_matrix,
    rayleigh_quotient,
    separable_rayleigh_limit,
    system_matrix,
    write_nodal_field,
)
from .localized import adjoint_restrict, build_gram, contrast_weight, localized_sequence, \
    virtual_source_solve, write_sequence_csv
from .mesh import Region, build_unit_square_mesh, resolve_region
from .monotonicity import monotonicity_identity_residual, random_piecewise_potential, write_identity_csv
from .table import write_csv

log = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@contextlib.contextmanager
def stage(name):
    log.info("stage: %s", name)
    try:
        yield
    except (SolverError, NoContrastError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(name, exc) from exc


def potential(mesh, spec):
    return Potential.from_regions(mesh, spec.base, spec.overrides)


def _require_nonempty(cfg, mesh, name):
    region = cfg.region(name)
    tris = resolve_region(mesh, region)
    if tris.size == 0:
        raise ConfigError(f"region.{name}", f"resolves to no triangles on a {mesh.n_triangles}-triangle mesh")
    return region, tris


def run_ntd_convergence(cfg, out, threads=None):
    rows = []
    closed_form = cfg.gamma == "bottom" and not cfg.q1.overrides
    for k in cfg.modes:
        prev = None
        exact = separable_rayleigh_limit(k, cfg.q1.base) if closed_form else math.nan
        for n in cfg.levels:
            with stage(f"ntd n={n} k={k}"):
                mesh = build_unit_square_mesh(n)
                patch = build_gamma_patch(mesh, cfg.gamma)
                L = ntd_matrix(mesh, patch, potential(mesh, cfg.q1))
                s = mesh.nodes[patch.nodes]
                g = np.cos(k * np.pi * s[:, 0])
                rq = rayleigh_quotient(L, g)
            err = abs(rq - exact)
            ratio = prev / err if prev is not None and err > 0 else math.nan
            rows.append([n, k, rq, exact, err, ratio])
            prev = err
    path = out / "ntd_convergence.csv"
    write_csv(path, ["n", "k", "rayleigh", "exact", "error", "error_ratio"], rows)
    return [path]


def run_monotonicity_identity(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    lo, hi = cfg.q_range
    rows = []
    count = cfg.instances or 1
    for i in range(count):
        seed = cfg.seed + i
        rng = np.random.default_rng(seed)
        q1 = random_piecewise_potential(mesh, rng, lo, hi)
        q2 = random_piecewise_potential(mesh, rng, lo, hi)
        g = rng.standard_normal(patch.size)
        with stage(f"identity instance {i}"):
            L1 = ntd_matrix(mesh, patch, q1)
            L2 = ntd_matrix(mesh, patch, q2)
            fwd = monotonicity_identity_residual(mesh, patch, q1, q2, g, L1, L2)
            rev = monotonicity_identity_residual(mesh, patch, q2, q1, g, L2, L1)
        desc = f"random[{lo!r},{hi!r}]"
        rows.append(dict(seed=seed, n=cfg.n, q=desc, lhs=fwd.lhs, rhs=fwd.rhs,
                         bound=fwd.bound, residual=fwd.residual))
        rows.append(dict(seed=seed, n=cfg.n, q=desc + ":swapped", lhs=rev.lhs, rhs=rev.rhs,
                         bound=rev.bound, residual=rev.residual))
    path = out / "monotonicity.csv"
    write_identity_csv(rows, path)
    return [path]


def run_localized_sweep(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    q1, q2 = potential(mesh, cfg.q1), potential(mesh, cfg.q2)
    B, _ = _require_nonempty(cfg, mesh, "B")
    outside = cfg.region("outside")
    with stage("basis solves"):
        L1 = ntd_matrix(mesh, patch, q1)
    gram_b = build_gram(mesh, patch, q1, q2, B, L1)
    gram_out = build_gram(mesh, patch, q1, q2, outside, L1)
    with stage("pencil eigensolves"):
        steps = localized_sequence(gram_b, gram_out, patch.mass, cfg.deltas)
    paths = [out / "localized.csv"]
    write_sequence_csv(steps, paths[0])
    if cfg.dump_field:
        paths.append(out / "localized_field.txt")
        write_nodal_field(L1.solution(steps[-1].g), paths[-1])
    return paths


def _random_disk(rng, region, radius_range):
    """Disk inside the rectangle ``region`` with radius drawn from ``radius_range``."""
    x0, x1, y0, y1 = region.params
    r = rng.uniform(*radius_range)
    r = min(r, 0.5 * (x1 - x0), 0.5 * (y1 - y0))
    return Region.disk((rng.uniform(x0 + r, x1 - r), rng.uniform(y0 + r, y1 - r)), r)


def _tolerance(cfg, L):
    return cfg.eig_tol * float(np.linalg.norm(L.weighted(), 2))


def run_theorem_test(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    q2 = potential(mesh, cfg.q2)
    with stage("reference NtD"):
        L2 = ntd_matrix(mesh, patch, q2)
    paths = []
    if cfg.instances == 0:
        with stage("positive-eigenvalue test"):
            L1 = ntd_matrix(mesh, patch, potential(mesh, cfg.q1))
            rep = difference_spectrum(L1, L2, patch, _tolerance(cfg, L1))
        paths.append(out / "spectrum.csv")
        write_csv(paths[-1], ["index", "eigenvalue"], enumerate(rep.eigenvalues.tolist()))
        verdict = rep.verdict
    else:
        V = cfg.region("V")
        if V.kind != "rectangle":
            raise ConfigError("region.V", "must be a rectangle to draw random disks")
        rng = np.random.default_rng(cfg.seed)
        rows = []
        for i in range(cfg.instances):
            D = _random_disk(rng, V, cfg.radius_range)
            c = rng.uniform(*cfg.contrast_range)
            mask = np.zeros(mesh.n_triangles)
            mask[resolve_region(mesh, D)] = 1.0
            with stage(f"positive-eigenvalue instance {i}"):
                L1 = ntd_matrix(mesh, patch, Potential(q2.values + c * mask))
                rep = difference_spectrum(L1, L2, patch, _tolerance(cfg, L1))
            cx, cy, r = D.params
            rows.append([i, cx, cy, r, c, int(mask.sum()), rep.max_eigenvalue, rep.tolerance,
                         rep.verdict])
        with stage("control"):
            ctrl = difference_spectrum(ntd_matrix(mesh, patch, q2), L2, patch, _tolerance(cfg, L2))
        rows.append(["control", "", "", "", 0.0, 0, ctrl.max_eigenvalue, ctrl.tolerance, ctrl.verdict])
        paths.append(out / "theorem_suite.csv")
        write_csv(paths[-1], ["instance", "center_x", "center_y", "radius", "contrast", "triangles",
                              "max_eigenvalue", "tolerance", "verdict"], rows)
        verdict = all(row[-1] for row in rows[:-1]) and not ctrl.verdict
    paths.append(out / "verdict.txt")
    paths[-1].write_text(("true" if verdict else "false") + "\n")
    return paths


def run_inclusion_sweep(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    q_ref = potential(mesh, cfg.q2)
    regions = disk_grid(cfg.grid, cfg.grid_radius)
    if cfg.true_cell is not None:
        i, j = cfg.true_cell
        true_region = regions[j * cfg.grid + i]
        mask = np.zeros(mesh.n_triangles)
        mask[resolve_region(mesh, true_region)] = 1.0
        q_true = Potential(q_ref.values + cfg.contrast * mask)
    else:
        q_true = potential(mesh, cfg.q1)
    with stage("measured NtD"):
        L_meas = ntd_matrix(mesh, patch, q_true)
    with stage("sweep"):
        entries = inclusion_sweep(mesh, L_meas, q_ref, regions, cfg.contrast, patch,
                                  _tolerance(cfg, L_meas),
                                  max_workers=threads)
    path = out / "sweep.csv"
    write_sweep_csv(entries, path)
    return [path]


def run_self_adjoint_audit(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    lo, hi = cfg.q_range
    rows = []
    for i in range(cfg.instances or 1):
        rng = np.random.default_rng(cfg.seed + i)
        q = random_piecewise_potential(mesh, rng, lo, hi)
        with stage(f"audit instance {i}"):
            L = ntd_matrix(mesh, patch, q)
            A = L.weighted()
            asym = float(np.abs(A - A.T).max() / np.abs(A).max())
            eig = pencil_eigenvalues(A, patch.mass)
        rows.append([cfg.seed + i, asym, float(eig[-1]), float(eig[0])])
    path = out / "self_adjoint.csv"
    write_csv(path, ["seed", "relative_asymmetry", "min_eigenvalue", "max_eigenvalue"], rows)
    return [path]


def run_duality_audit(cfg, out, threads=None):
    mesh = build_unit_square_mesh(cfg.n)
    patch = build_gamma_patch(mesh, cfg.gamma)
    lo, hi = cfg.q_range
    region = cfg.region("B")
    tris = resolve_region(mesh, region)
    rows = []
    for i in range(cfg.instances or 1):
        rng = np.random.default_rng(cfg.seed + i)
        q1 = random_piecewise_potential(mesh, rng, lo, hi)
        q2 = random_piecewise_potential(mesh, rng, lo, hi)
        w = contrast_weight(q1, q2)
        f = rng.standard_normal(tris.size)
        g = rng.standard_normal(patch.size)
        with stage(f"duality instance {i}"):
            solver = SpdSolver(system_matrix(mesh, q1))
            L1 = ntd_matrix(mesh, patch, q1, solver=solver)
            v = virtual_source_solve(mesh, q1, w, tris, f, solver=solver)
        lhs = patch.inner(v[patch.nodes], g)
        rhs = adjoint_restrict(mesh, L1.solution(g), w, tris).inner_piecewise_constant(f)
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), np.finfo(float).tiny)
        rows.append([cfg.seed + i, lhs, rhs, rel])
    path = out / "duality.csv"
    write_csv(path, ["seed", "lf_dot_g", "f_dot_ladj_g", "relative_error"], rows)
    return [path]


DRIVERS = {
    "ntd-convergence": run_ntd_convergence,
    "monotonicity-identity": run_monotonicity_identity,
    "localized-sweep": run_localized_sweep,
    "theorem-test": run_theorem_test,
    "inclusion-sweep": run_inclusion_sweep,
    "self-adjoint-audit": run_self_adjoint_audit,
    "duality-audit": run_duality_audit,
}


def run_experiment(cfg, out, threads=None):
    out = Path(out)
    return DRIVERS[cfg.experiment](cfg, out, threads)
