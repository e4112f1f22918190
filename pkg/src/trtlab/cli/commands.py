"""Command implementations: each builds its objects from the config and writes CSV files."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..fields import ClosedFormField, VoxelField, VoxelGrid
from ..frames import build_spanning_set, recover_tensor_from_quadratic_values
from ..geodesic import TransportedVector, shoot_geodesics, transport_many
from ..lab.assembly import assemble_forward
from ..lab.experiments import (dim2_kernel_probe, injectivity_probe, near_null_count,
                               support_experiment, synthetic_inversion)
from ..lab.family import ChartBox, RayFamily
from ..lab.solvers import smallest_singular_value, solve_tikhonov
from ..metric import Domain, make_metric
from ..tensors import n_components
from ..transform import BoundaryTensorField, adjoint_duality, trt_scalar
from .config import ExperimentConfig, _fmt
from .io import RunReport, read_field_csv, write_csv, write_field_csv
from .main import COMMANDS


class Setup:
    """Domain, metric, grid and ray box described by a config."""

    def __init__(self, cfg: ExperimentConfig, n=None):
        self.cfg = cfg
        self.n = n or cfg["domain.n"]
        self.domain = Domain(self.n, cfg["domain.rho"], cfg["domain.rho_ext"])
        self.field = make_metric(self.domain, cfg["metric.kind"], cfg["metric.conformal_a"])
        self.grid = VoxelGrid.covering(self.domain, cfg["grid.resolution"])
        self.box = ChartBox.full(self.n, cfg["family.tilt_max"], cfg["family.polar_max"],
                                 cfg["family.tilt_min"])
        self.h = cfg["ode.h"]
        self.counts = (cfg["sampling.boundary_count"], cfg["sampling.direction_count"])

    def family(self, avoid=None):
        return RayFamily.sample(self.field, self.box, *self.counts, avoid=avoid, h=self.h)

    def random_voxel_field(self, rng):
        nc = n_components(self.n)
        return VoxelField(self.domain, self.grid, rng.standard_normal((self.grid.size, nc)))


def _report(name, cfg):
    return RunReport(name, cfg.digest(),
                     defaults=tuple((k, _fmt(cfg[k])) for k in cfg.defaulted))


def _write_singular(out, values):
    write_csv(out / "singular_values.csv", ["index", "sigma"], enumerate(values))


def cmd_forward(cfg, out: Path, **_):
    s = Setup(cfg)
    rng = np.random.default_rng(cfg["seed"])
    if cfg["io.field"]:
        f = read_field_csv(cfg["io.field"], s.domain, s.grid)
    else:
        f = s.random_voxel_field(rng)
    fam = s.family()
    A = assemble_forward(s.field, s.grid, fam, s.h)
    data = A.apply(f)
    write_csv(out / "data.csv", ["ray", "eta_index", "value"], zip(A.member, A.k, data))
    rep = _report("forward", cfg)
    rep.add("rays", fam.n_rays)
    rep.add("zero_rows", int(A.zero_rows.sum()))
    sel = np.sort(rng.choice(fam.n_rays, size=min(20, fam.n_rays), replace=False))
    paths = shoot_geodesics(s.field, s.domain, fam.ray_x[sel], fam.ray_dir[sel], s.h)
    etas = transport_many(s.field, paths, fam.ray_eta[sel])
    ref = np.array([trt_scalar(f, p, TransportedVector(p, e, e[0])) for p, e in zip(paths, etas)])
    scale = max(float(np.max(np.abs(ref))), 1e-300)
    rep.check("row_consistency", float(np.max(np.abs(ref - data[sel]))) / scale
              if np.any(ref) else float(np.max(np.abs(data[sel]))), 1e-6)
    return rep


def _smooth_field(domain, rng):
    n = domain.n
    M0 = rng.standard_normal((n, n))
    M0 = M0 + M0.T
    M1 = rng.standard_normal((n, n))
    M1 = M1 + M1.T

    def func(x):
        amp = np.clip(1 - np.sum(x ** 2, axis=-1) / domain.rho ** 2, 0, None) ** 4
        return amp[..., None, None] * (M0 + np.sin(x[..., 0])[..., None, None] * M1)

    return ClosedFormField(domain, func)


def _smooth_boundary(n, rng):
    A = rng.standard_normal((n, n))
    A = A @ A.T
    a, b = rng.uniform(0.1, 0.5, 2)

    def func(x, th):
        return A + a * x[..., :, None] * x[..., None, :] + b * th[..., :, None] * th[..., None, :]

    return BoundaryTensorField(func)


def cmd_adjoint_test(cfg, out: Path, **_):
    s = Setup(cfg)
    rng = np.random.default_rng(cfg["seed"])
    f = _smooth_field(s.domain, rng)
    phi = _smooth_boundary(s.n, rng)
    lhs, rhs, rel = adjoint_duality(f, phi, s.field, s.counts, cfg["grid.resolution"],
                                    cfg["sampling.sphere_count"], s.h)
    rep = _report("adjoint-test", cfg)
    rep.add("boundary_pairing", lhs)
    rep.add("interior_pairing", rhs)
    rep.check("relative_gap", rel, cfg["solver.duality_tol"])
    return rep


def cmd_spanning(cfg, out: Path, n=None, **_):
    n = n or cfg["domain.n"]
    if n < 3:
        raise ConfigError([f"spanning sets need n >= 3, got {n}"])
    sp = build_spanning_set(n)
    N = n_components(n)
    header = (["k", "case", "p", "q", "a_p", "a_q", "eps"] + [f"eta{i + 1}" for i in range(n)]
              + [f"witness{i + 1}" for i in range(n)])
    write_csv(out / "spanning.csv", header,
              ([k + 1, m.case, m.p + 1, m.q + 1, m.a_p, m.a_q, m.eps, *m.eta, *m.witness]
               for k, m in enumerate(sp.members)))
    write_csv(out / "gram_eigenvalues.csv", ["index", "eigenvalue"],
              enumerate(sp.gram_eigenvalues))
    rep = _report("spanning", cfg)
    rep.check("members", len(sp), N, "==")
    rep.check("rank", sp.rank, N, "==")
    rep.check("min_gram_eigenvalue", float(sp.gram_eigenvalues[0]), 0.0, ">")
    orth = max(abs(float(m.witness @ m.eta)) for m in sp.members)
    rep.check("witness_orthogonality", orth, 1e-10, "<=")
    rng = np.random.default_rng(cfg["seed"])
    worst = 0.0
    for _ in range(100):
        F = rng.standard_normal((n, n))
        F = F + F.T
        vals = np.einsum("kij,ki,kj->k", np.broadcast_to(F, (N, n, n)), sp.eta, sp.eta)
        worst = max(worst, float(np.max(np.abs(recover_tensor_from_quadratic_values(sp, vals) - F))))
    rep.check("recovery_error", worst, 1e-9)
    return rep


def cmd_inject_probe(cfg, out: Path, **_):
    s = Setup(cfg)
    if s.n < 3:
        raise ConfigError(["inject-probe needs domain.n >= 3 (use dim2-probe in the plane)"])
    fam = s.family()
    rep = _report("inject-probe", cfg)
    r = injectivity_probe(s.field, s.grid, fam, s.h, cfg["solver.sigma_threshold"])
    rep.add("rows", r.shape[0])
    rep.add("columns", r.shape[1])
    rep.add("sigma_min", r.sigma_min)
    rep.add("sigma_max", r.sigma_max)
    rep.check("min_voxel_hits", r.coverage_min, r.coverage_needed, ">=")
    rep.check("sigma_ratio", r.ratio, cfg["solver.sigma_threshold"], ">")
    rng = np.random.default_rng(cfg["seed"])
    f0 = s.random_voxel_field(rng)
    err, sol = synthetic_inversion(r.operator, f0, cfg["solver.lambda"], cfg["solver.iters"],
                                   cfg["solver.tol"])
    rep.add("cgls_iterations", sol.iterations)
    rep.check("synthetic_relative_error", err, cfg["solver.recon_tol"])
    sv = smallest_singular_value(r.operator)
    _write_singular(out, sv.values)
    write_field_csv(out / "reconstruction.csv", r.operator.field(sol.x, s.domain),
                    r.operator.voxels)
    return rep


def cmd_dim2_probe(cfg, out: Path, **_):
    s2 = Setup(cfg, n=2)
    fam2 = s2.family()
    r2 = dim2_kernel_probe(s2.field, s2.grid, fam2, s2.h)
    rep = _report("dim2-probe", cfg)
    rep.add("rows_2d", r2.rows)
    rep.add("columns_2d", r2.columns)
    rep.check("near_null_2d", r2.near_null, 1, ">=")
    rep.check("rotation_identity_error", r2.identity_error, 1e-8)
    rep.check("potential_data_ratio", r2.potential_ratio, 1e-6)
    s3 = Setup(cfg, n=3)
    A3 = assemble_forward(s3.field, s3.grid, s3.family(), s3.h)
    sv3 = smallest_singular_value(A3)
    rep.add("rows_3d", A3.shape[0])
    rep.add("columns_3d", A3.shape[1])
    rep.check("near_null_3d", near_null_count(sv3), 0, "==")
    A2 = assemble_forward(s2.field, s2.grid, fam2, s2.h)
    _write_singular(out, smallest_singular_value(A2).values)
    return rep


def cmd_support_exp(cfg, out: Path, **_):
    s = Setup(cfg)
    center = np.asarray(cfg["family.avoid_center"], dtype=float)
    if len(center) != s.n:
        raise ConfigError([f"family.avoid_center needs {s.n} coordinates"])
    r = support_experiment(
        s.field, s.grid, center, s.box, s.counts, s.h,
        support_radius=cfg["family.support_radius"], avoid_radius=cfg["family.avoid_radius"],
        lam=cfg["solver.lambda"], iters=cfg["solver.iters"],
        apex_angles=cfg["family.apex_angles"], aperture=cfg["family.cone_aperture"],
        cone_count=cfg["family.cone_count"], path_steps=cfg["family.path_steps"],
        data_tol=cfg["solver.data_tol"], ratio_tol=cfg["solver.sigma_threshold"])
    rep = _report("support-exp", cfg)
    rep.add("dropped_members", r.dropped_members)
    rep.add("mask_voxels", r.mask_voxels)
    rep.check("max_abs_data", r.max_data, cfg["solver.data_tol"])
    rep.check("restricted_sigma_ratio", r.restricted_ratio, cfg["solver.sigma_threshold"], ">")
    rep.check("reconstruction_norm", r.reconstruction_norm, 1e-6)
    rep.add("t1", r.t1)
    if s.field.flat:
        rep.add("t1_closed_form", r.t1_exact)
        rep.check("t1_error", abs(r.t1 - r.t1_exact), r.path_step, "<=")
    write_csv(out / "contact.csv", ["t", "contact"], zip(r.t_grid, r.contact.astype(int)))
    _write_singular(out, r.singular.values)
    write_field_csv(out / "reconstruction.csv", r.reconstruction)
    return rep


def cmd_invert(cfg, out: Path, **_):
    s = Setup(cfg)
    rng = np.random.default_rng(cfg["seed"])
    if cfg["io.field"]:
        f0 = read_field_csv(cfg["io.field"], s.domain, s.grid)
    else:
        f0 = VoxelField.sample(s.domain, s.grid, _smooth_field(s.domain, rng))
    fam = s.family()
    A = assemble_forward(s.field, s.grid, fam, s.h)
    x0 = A.unknowns(f0)
    sol = solve_tikhonov(A, A.matrix @ x0, cfg["solver.lambda"], cfg["solver.iters"],
                         cfg["solver.tol"])
    rep = _report("invert", cfg)
    rep.add("rows", A.shape[0])
    rep.add("columns", A.shape[1])
    rep.add("cgls_iterations", sol.iterations)
    norm = np.linalg.norm(x0)
    err = float(np.linalg.norm(sol.x - x0) / norm) if norm > 0 else float(np.linalg.norm(sol.x))
    rep.check("relative_error", err, cfg["solver.recon_tol"])
    write_field_csv(out / "reconstruction.csv", A.field(sol.x, s.domain), A.voxels)
    write_csv(out / "residuals.csv", ["iteration", "objective"], enumerate(sol.residuals))
    _write_singular(out, smallest_singular_value(A).values)
    return rep


DISPATCH = {
    "forward": cmd_forward,
    "adjoint-test": cmd_adjoint_test,
    "spanning": cmd_spanning,
    "inject-probe": cmd_inject_probe,
    "dim2-probe": cmd_dim2_probe,
    "support-exp": cmd_support_exp,
    "invert": cmd_invert,
}


def run_command(name: str, cfg: ExperimentConfig, out, **options) -> RunReport:
    if name not in DISPATCH:
        raise ConfigError([f"unknown command {name!r}; choose from {', '.join(COMMANDS)}"])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rep = DISPATCH[name](cfg, out, **options)
    rep.write(out / "report.csv")
    return rep
