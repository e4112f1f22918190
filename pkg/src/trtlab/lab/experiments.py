"""Experiment drivers: injectivity probe, 2-D kernel probe, support experiments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, ParameterError
from ..fields import ClosedFormField, VoxelField, VoxelGrid
from ..geodesic import find_crossings, iter_chunks, march_inner, tangent_frame, unit_direction
from ..metric import MetricField, outer_normal
from ..tensors import n_components
from .assembly import ForwardMatrix, assemble_forward, forward_closed_form
from .family import (ChartBox, DeformationPath, RayFamily, chart_to_ray, cone_family,
                     path_min_distance)
from .solvers import SingularReport, smallest_singular_value, solve_tikhonov

NEAR_NULL_REL = 1e-8


def near_null_count(sv: SingularReport, rel: float = NEAR_NULL_REL) -> int:
    return int(np.sum(sv.values <= rel * sv.sigma_max))


@dataclass
class InjectivityReport:
    sigma_min: float
    sigma_max: float
    ratio: float
    threshold: float
    coverage_min: int
    coverage_needed: int
    deficient_voxels: int
    near_null: int
    shape: tuple
    passed: bool
    operator: Optional[ForwardMatrix] = field(default=None, repr=False)


def injectivity_probe(field: MetricField, grid: VoxelGrid, family: RayFamily, h: float,
                      threshold: float = 1e-6) -> InjectivityReport:
    """Assemble the operator and compare ``sigma_min / sigma_max`` against ``threshold``.

    Coverage is checked first: every active voxel should be touched by at
    least ``n(n+1)/2`` geodesics, else the probe is reported as failed.
    """
    A = assemble_forward(field, grid, family, h)
    need = n_components(field.n)
    hits = A.voxel_hits()
    deficient = int(np.sum(hits < need))
    if deficient:
        warnings.warn(f"{deficient} of {len(hits)} voxels are hit by fewer than {need} "
                      f"geodesics; the family cannot determine the field there", RuntimeWarning)
    sv = smallest_singular_value(A)
    passed = deficient == 0 and sv.ratio > threshold
    return InjectivityReport(sv.sigma_min, sv.sigma_max, sv.ratio, threshold, int(hits.min()),
                             need, deficient, near_null_count(sv), A.shape, bool(passed), A)


def synthetic_inversion(A: ForwardMatrix, f0: VoxelField, lam: float = 1e-10,
                        iters: int = 5000, tol: float = 1e-13):
    """Recover ``f0`` from its own noiseless data; returns (relative L2 error, solve result)."""
    x0 = A.unknowns(f0)
    sol = solve_tikhonov(A, A.matrix @ x0, lam, iters=iters, tol=tol)
    return float(np.linalg.norm(sol.x - x0) / np.linalg.norm(x0)), sol


# -- the plane ----------------------------------------------------------------------

def potential_field_2d(field: MetricField, B, c):
    """Field ``J^T (dv) J`` whose 2-D transverse data vanish.

    ``v = (rho^2 - |x|^2)^2 (B x + c)`` is a covector vanishing on the
    boundary, ``dv`` its symmetrised covariant derivative and ``J`` the
    g-rotation by a right angle, so ``f(J v, J v) = dv(v, v)`` integrates to
    zero along every geodesic.
    """
    B = np.asarray(B, dtype=float)
    c = np.asarray(c, dtype=float)
    domain = field.domain
    rho2 = domain.rho ** 2
    R = np.array([[0.0, -1.0], [1.0, 0.0]])

    def func(x):
        s = rho2 - np.sum(x ** 2, axis=-1)
        q = s ** 2
        dq = -4 * s[..., None] * x
        vec = x @ B.T + c
        v = q[..., None] * vec
        # grad[i, j] = d_i v_j
        grad = dq[..., :, None] * vec[..., None, :] + q[..., None, None] * B.T
        cov = grad - np.einsum("...kij,...k->...ij", field.christoffel(x), v)
        dv = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        Lt = np.swapaxes(np.linalg.cholesky(field.g(x)), -1, -2)
        J = np.linalg.solve(Lt, R @ Lt)
        return np.swapaxes(J, -1, -2) @ dv @ J

    return ClosedFormField(domain, func)


def rotated_ray_transform(f, field: MetricField, family: RayFamily, h: float, chunk: int = 2048):
    """Ray transform of the rotated-index field ``J^T f J`` along each 2-D geodesic."""
    domain = field.domain
    out = np.zeros(family.n_rays)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    for sl in iter_chunks(family.n_rays, chunk):
        xs = family.ray_x[sl]
        v0 = unit_direction(field, xs, family.ray_dir[sl])
        cr = find_crossings(field, domain, xs, v0, h)
        acc = np.zeros(len(xs))

        def visit(k, rays, z, v, E, w):
            L = np.linalg.cholesky(field.g(z))
            J = np.linalg.solve(np.swapaxes(L, 1, 2), R @ np.swapaxes(L, 1, 2))
            F = np.swapaxes(J, 1, 2) @ f.raw(z) @ J
            acc[rays] += w * np.einsum("rij,ri,rj->r", F, v, v)

        march_inner(field, xs, v0, None, cr, h, visit)
        out[sl] = acc
    return out


@dataclass
class Dim2Report:
    near_null: int
    columns: int
    rows: int
    sigma_max: float
    identity_error: float
    potential_ratio: float
    passed: bool


def dim2_kernel_probe(field: MetricField, grid: VoxelGrid, family: RayFamily, h: float,
                      test_field=None, potential_coeffs=None) -> Dim2Report:
    """Near-null singular values of the 2-D operator, plus the two 2-D identities.

    Row-wise, the transverse datum equals the ray transform of the
    rotated-index field; a potential-type field built from a generator
    vanishing on the boundary produces (numerically) zero data.
    """
    if field.n != 2:
        raise ParameterError("the 2-D probe needs n = 2")
    domain = field.domain
    A = assemble_forward(field, grid, family, h)
    sv = smallest_singular_value(A)
    nn = near_null_count(sv)
    if test_field is None:
        def test_func(x):
            a = 1 + x[..., 0] ** 2
            b = 0.5 * np.sin(x[..., 1])
            c = 0.8 + x[..., 0] * x[..., 1]
            return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)
        test_field = ClosedFormField(domain, test_func)
    trt = forward_closed_form(test_field, field, family, h)
    rot = rotated_ray_transform(test_field, field, family, h)
    ident = float(np.max(np.abs(trt - rot) / (1 + np.abs(rot))))
    B, c = potential_coeffs or (np.array([[0.3, -0.2], [0.5, 0.1]]), np.array([0.4, -0.7]))
    pot = potential_field_2d(field, B, c)
    data = forward_closed_form(pot, field, family, h)
    centers = grid.centers()[grid.active(domain)]
    field_rms = math.sqrt(np.mean(np.sum(pot.value(centers) ** 2, axis=(1, 2))))
    data_rms = math.sqrt(np.mean(data ** 2))
    ratio = data_rms / field_rms
    passed = nn >= 1 and ident < 1e-8 and ratio < 1e-6
    return Dim2Report(nn, A.shape[1], A.shape[0], sv.sigma_max, ident, ratio, bool(passed))


# -- support experiments ---------------------------------------------------------------

@dataclass
class SupportReport:
    max_data: float
    dropped_members: int
    mask_voxels: int
    restricted_ratio: float
    reconstruction_norm: float
    t1: float
    t1_exact: float
    path_step: float
    contact: np.ndarray
    passed: dict
    t_grid: Optional[np.ndarray] = None
    singular: Optional[SingularReport] = None
    reconstruction: Optional[VoxelField] = None


def direction_chart(field: MetricField, x, target):
    """Tilt and tangent angle of the straight direction from boundary point ``x`` to ``target``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(target, dtype=float) - x
    u = u / np.linalg.norm(u)
    nu, _ = outer_normal(field, x, np.linalg.norm(x))
    T = tangent_frame(field, x, nu)
    c = -(u @ nu)
    tau = u + c * nu
    alpha = math.atan2(np.linalg.norm(tau), c)
    coords = T @ tau
    if len(x) == 2:
        return alpha * np.sign(coords[0]), np.zeros(0)
    if len(x) == 3:
        return alpha, np.array([math.atan2(coords[1], coords[0])])
    raise ParameterError("direction chart helper supports n = 2, 3")


def cone_sweep(field: MetricField, apex_angles, target, radius: float, aperture: float,
               count: int, steps: int, h: float, overshoot: float = 0.15):
    """Deform a cone from aiming at ``target`` until it clears the ball ``B(target, radius)``.

    The central direction tilts away from the target in the plane through the
    apex, the inward normal and the target.  Returns the path, the contact
    flags per step, the first-contact parameter
    ``t1 = inf{t : C_s misses the ball for all s > t}`` on the step grid, and
    its straight-line closed form.
    """
    domain = field.domain
    apex_angles = np.asarray(apex_angles, dtype=float)
    x_a, _ = chart_to_ray(field, domain, np.concatenate([apex_angles, [0.0] * (domain.n - 1)])[None])
    x_a = x_a[0]
    target = np.asarray(target, dtype=float)
    alpha_p, beta_p = direction_chart(field, x_a, target)
    D = np.linalg.norm(target - x_a)
    clear = aperture + math.asin(min(1.0, radius / D))
    alpha1 = alpha_p + clear + overshoot
    start = np.concatenate([apex_angles, [alpha_p], beta_p])
    end = np.concatenate([apex_angles, [alpha1], beta_p])
    path = DeformationPath(start, end, steps)
    xs, dirs = path.rays(field)
    contact = np.zeros(steps + 1, dtype=bool)
    for j in range(steps + 1):
        cone = cone_family(field, xs[j], dirs[j], aperture, count, toward=target - xs[j])
        dist = path_min_distance(field, domain, np.repeat(xs[j][None], len(cone), axis=0),
                                 cone.directions, h, target)
        contact[j] = bool(np.any(dist < radius))
    hit = np.flatnonzero(contact)
    t1 = float(path.t[hit[-1]]) if hit.size else 0.0
    t1_exact = clear / (alpha1 - alpha_p)
    return path, contact, t1, t1_exact


def support_experiment(field: MetricField, grid: VoxelGrid, center, box: ChartBox, counts,
                       h: float, support_radius: float = 0.2, avoid_radius: float = 0.25,
                       lam: float = 1e-10, iters: int = 3000, apex_angles=(1.2, 0.5),
                       aperture: float = 0.1, cone_count: int = 19, path_steps: int = 40,
                       data_tol: float = 1e-10, ratio_tol: float = 1e-6,
                       rec_tol: float = 1e-6) -> SupportReport:
    """Three desk-scale checks of local support recovery.

    1. A family avoiding ``B(center, avoid_radius)`` sees exactly zero data
       from a field supported in ``B(center, support_radius)``.
    2. Restricted to the voxels the family covers, the operator is
       well-conditioned and zero data reconstructs zero there.
    3. A cone deformed away from the support loses contact at the
       parameter predicted by straight-line geometry.
    """
    domain = field.domain
    center = np.asarray(center, dtype=float)
    f_true = ClosedFormField.bump(domain, center, support_radius)
    fam = RayFamily.sample(field, box, counts[0], counts[1], avoid=(center, avoid_radius), h=h)
    data = forward_closed_form(f_true, field, fam, h)
    max_data = float(np.max(np.abs(data)))

    A = assemble_forward(field, grid, fam, h, coverage=True)
    mask = A.coverage_mask
    if not np.any(mask):
        raise ConfigError(["family covers no voxel of M; the M_A mask is empty"])
    Ar = A.restrict(mask)
    sv = smallest_singular_value(Ar)
    sol = solve_tikhonov(Ar, data, lam, iters=iters)
    rec = float(np.linalg.norm(sol.x))

    path, contact, t1, t1_exact = cone_sweep(field, apex_angles, center, support_radius,
                                             aperture, cone_count, path_steps, h)
    step = 1.0 / path_steps
    passed = {
        "zero_data": max_data < data_tol,
        "restricted_ratio": sv.ratio > ratio_tol,
        "zero_reconstruction": rec < rec_tol,
    }
    if field.flat:
        # the closed form assumes straight geodesics
        passed["first_contact"] = abs(t1 - t1_exact) <= step
    return SupportReport(max_data, fam.dropped, int(mask.sum()), sv.ratio, rec, t1, t1_exact,
                         step, contact, passed, path.t, sv, Ar.field(sol.x, domain))
