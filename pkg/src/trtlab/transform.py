"""Transverse ray transform: projector, scalar and tensor-valued transforms, adjoint.

Tensor values are covariant matrices.  A 2-tensor is carried along a
geodesic by transporting a g-orthonormal frame ``E`` and conjugating:
in frame coordinates ``M = E^T F E`` the transported tensor is constant,
and at the base point it reads ``L M L^T`` with ``g = L L^T``.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ParameterError
from .fields import SymTensorField2, VoxelGrid
from .geodesic import (GeodesicPath, TransportedVector, find_crossings, influx_sample,
                       iter_chunks, march_inner, shoot_geodesics, transport_many,
                       unit_direction)
from .metric import MetricField, orthonormal_basis
from .quadrature import simpson_weights, sphere_rule
from .tensors import pair_g


def project_transverse(field: MetricField, x, v, f_val):
    """``P_v f = A f A^T`` with ``A = I - (g v) v^T / |v|_g^2``; batched over leading axes."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    f_val = np.asarray(f_val, dtype=float)
    g = field.g(x)
    gv = np.einsum("...ij,...j->...i", g, v)
    vv = np.einsum("...i,...i->...", gv, v)
    if np.any(vv == 0):
        raise ParameterError("projector needs a nonzero velocity")
    n = v.shape[-1]
    A = np.eye(n) - gv[..., :, None] * v[..., None, :] / vv[..., None, None]
    return A @ f_val @ np.swapaxes(A, -1, -2)


def trt_scalar(f: SymTensorField2, path: GeodesicPath, eta: TransportedVector) -> float:
    """Simpson quadrature of ``f(eta, eta)`` over the part of the path inside M."""
    if len(eta.eta) != len(path):
        raise ParameterError(f"transported vector has {len(eta.eta)} samples, path has {len(path)}")
    if not path.meets:
        return 0.0
    sl = path.inner
    m = path.i_out - path.i_in
    w = simpson_weights(m, (path.t[path.i_out] - path.t[path.i_in]) / m)
    e = eta.eta[sl]
    vals = np.einsum("kij,ki,kj->k", f.raw(path.z[sl]), e, e)
    return float(w @ vals)


def trt_tensor(f: SymTensorField2, field: MetricField, x, theta, h: float, chunk: int = 4096):
    """``J~f(x, theta)``: integral of the projected field transported back to ``x``.

    Accepts one ray or a batch; returns ``(n, n)`` or ``(B, n, n)``.
    """
    domain = field.domain
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = domain.check_points(np.atleast_2d(x))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = domain.n
    out = np.zeros((len(x), n, n))
    eye = np.eye(n)
    for sl in iter_chunks(len(x), chunk):
        xs = x[sl]
        v0 = unit_direction(field, xs, theta[sl])
        E0, L0 = orthonormal_basis(field, xs)
        cr = find_crossings(field, domain, xs, v0, h, E0=E0)
        acc = np.zeros((len(xs), n, n))

        def visit(k, rays, z, v, E, w):
            F = f.raw(z)
            a = np.einsum("rji,rjk,rk->ri", E, field.g(z), v)
            a /= np.linalg.norm(a, axis=-1, keepdims=True)
            P = eye - a[:, :, None] * a[:, None, :]
            M = np.swapaxes(E, 1, 2) @ F @ E
            acc[rays] += w[:, None, None] * (P @ M @ P)

        march_inner(field, xs, v0, E0, cr, h, visit)
        out[sl] = L0 @ acc @ np.swapaxes(L0, 1, 2)
    return out[0] if single else out


def pairing_consistency(f: SymTensorField2, field: MetricField, x, theta, eta0, h: float):
    """Both sides of ``<J~f(x, theta), eta0 (x) eta0> = Jf(gamma, eta)``.

    The left side comes from :func:`trt_tensor`; the right side shoots the
    stored path, transports ``eta0`` along it and applies :func:`trt_scalar`.
    Batched; returns two arrays (or two floats for a single ray).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    eta0 = np.atleast_2d(np.asarray(eta0, dtype=float))
    g = field.g(x)
    dot = np.einsum("bij,bi,bj->b", g, eta0, theta)
    scale = (np.sqrt(np.einsum("bij,bi,bj->b", g, eta0, eta0))
             * np.sqrt(np.einsum("bij,bi,bj->b", g, theta, theta)))
    if np.any(np.abs(dot) > 1e-8 * np.maximum(scale, 1e-300)):
        raise ParameterError("eta0 must be g-orthogonal to theta")
    J = trt_tensor(f, field, x, theta, h)
    lhs = np.einsum("bij,bi,bj->b", J, eta0, eta0)
    paths = shoot_geodesics(field, field.domain, x, theta, h)
    etas = transport_many(field, paths, eta0)
    rhs = np.array([trt_scalar(f, p, TransportedVector(p, e, e0))
                    for p, e, e0 in zip(paths, etas, eta0)])
    if single:
        return float(lhs[0]), float(rhs[0])
    return lhs, rhs


class BoundaryTensorField:
    """Symmetric-matrix-valued function on the influx boundary, ``(x, theta) -> (.., n, n)``."""

    def __init__(self, func: Callable):
        self.func = func

    def __call__(self, x, theta):
        val = np.asarray(self.func(np.asarray(x, dtype=float), np.asarray(theta, dtype=float)),
                         dtype=float)
        return 0.5 * (val + np.swapaxes(val, -1, -2))

    def on(self, influx):
        return self(influx.x, influx.xi)

    @classmethod
    def constant(cls, matrix):
        matrix = np.asarray(matrix, dtype=float)
        return cls(lambda x, th: np.broadcast_to(matrix, np.shape(x)[:-1] + matrix.shape))


def adjoint_apply(phi: BoundaryTensorField, field: MetricField, x, sphere_count: int,
                  h: float, chunk: int = 4096):
    """``(J~)* phi`` at interior points: sphere integral of ``P_xi`` applied to ``phi#``.

    ``phi#(x, xi)`` is ``phi`` read where the geodesic through ``(x, xi)``
    enters the outer ball, transported to ``x``.  Returns ``(n, n)`` per point.
    """
    domain = field.domain
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if np.any(domain.defining(x) > domain.tol_boundary):
        raise ParameterError("adjoint is evaluated at points of M")
    n = domain.n
    u, wu = sphere_rule(n, sphere_count)
    S = len(wu)
    E0, L0 = orthonormal_basis(field, x)
    Pu = np.eye(n) - u[:, :, None] * u[:, None, :]
    out = np.zeros((len(x), n, n))
    total = len(x) * S
    for sl in iter_chunks(total, chunk):
        idx = np.arange(sl.start, sl.stop)
        ip, iu = idx // S, idx % S
        E = E0[ip]
        xi = np.einsum("bij,bj->bi", E, u[iu])
        # backward trace: entry point of the influx geodesic through (x, xi)
        cr = find_crossings(field, domain, x[ip], -xi, h, E0=E, inner=False)
        val = phi(cr.z_exit, -cr.v_exit)
        M = np.swapaxes(cr.E_exit, 1, 2) @ val @ cr.E_exit
        contrib = wu[iu][:, None, None] * (Pu[iu] @ M @ Pu[iu])
        np.add.at(out, ip, contrib)
    out = L0 @ out @ np.swapaxes(L0, 1, 2)
    return out[0] if single else out


def adjoint_duality(f: SymTensorField2, phi: BoundaryTensorField, field: MetricField,
                    counts, resolution: int, sphere_count: int, h: float):
    """Both sides of ``<J~f, phi>_{Gamma_-} = <f, (J~)* phi>_{L^2(M)}`` and their relative gap.

    The left side is a Santalo-weighted sum over the influx boundary of the
    outer ball; the right side is a voxel midpoint sum over M.
    """
    inf = influx_sample(field, field.domain, counts)
    J = trt_tensor(f, field, inf.x, inf.xi, h)
    lhs = float(np.sum(inf.measure * pair_g(field.g_inv(inf.x), J, phi.on(inf))))
    grid = VoxelGrid.covering(field.domain, resolution)
    c = grid.centers()
    fv = f.value(c)
    keep = np.any(np.abs(fv) > 0, axis=(1, 2))
    c, fv = c[keep], fv[keep]
    rhs = 0.0
    if len(c):
        adj = adjoint_apply(phi, field, c, sphere_count, h)
        dens = np.sqrt(np.linalg.det(field.g(c)))
        rhs = float(np.sum(dens * pair_g(field.g_inv(c), fv, adj)) * grid.voxel_volume)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    return lhs, rhs, rel
