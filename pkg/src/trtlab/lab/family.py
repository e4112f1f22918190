"""Ray families over a parameter box, geodesic cones and deformation paths."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError, ParameterError
from ..frames import SpanningSet, build_spanning_set
from ..geodesic import find_crossings, iter_chunks, rk4_step, segment_counts, tangent_frame
from ..metric import Domain, MetricField, orthonormal_basis, outer_normal, sphere_points


def hyperspherical(angles):
    """Unit vectors from ``(..., d)`` angles: ``d - 1`` polar angles then an azimuth."""
    angles = np.asarray(angles, dtype=float)
    d = angles.shape[-1]
    out = np.empty(angles.shape[:-1] + (d + 1,))
    s = np.ones(angles.shape[:-1])
    for i in range(d - 1):
        out[..., i] = s * np.cos(angles[..., i])
        s = s * np.sin(angles[..., i])
    out[..., d - 1] = s * np.cos(angles[..., d - 1])
    out[..., d] = s * np.sin(angles[..., d - 1])
    return out


@dataclass(frozen=True)
class ChartBox:
    """Parameter box for geodesics entering the outer ball.

    ``boundary`` holds ``(lo, hi)`` for the ``n - 1`` hyperspherical angles
    of the start point.  ``tilt`` bounds the angle between the direction and
    the inward normal (signed in 2-D); ``tangent`` bounds the ``n - 2`` angles
    fixing the direction's component along the boundary.
    """

    boundary: tuple
    tilt: tuple
    tangent: tuple = ()

    @classmethod
    def full(cls, n: int, tilt_max: float = 1.0, polar_max: float = math.pi,
             tilt_min: float = 0.0):
        """All boundary points (or a polar cap) and tilts in ``[tilt_min, tilt_max]``.

        In 2-D the tilt is signed and ``tilt_min`` is ignored.
        """
        boundary = tuple([(0.0, polar_max)] + [(0.0, math.pi)] * (n - 3) + [(0.0, 2 * math.pi)]) \
            if n >= 3 else ((0.0, 2 * math.pi),)
        if n == 2:
            return cls(boundary, (-tilt_max, tilt_max), ())
        tangent = tuple([(0.0, math.pi)] * (n - 3) + [(0.0, 2 * math.pi)])
        return cls(boundary, (tilt_min, tilt_max), tangent)

    @property
    def dims(self):
        return len(self.boundary) + 1 + len(self.tangent)

    def interior_samples(self, boundary_count: int, direction_count: int):
        """Midpoint product grid: strictly interior points of the box."""
        if boundary_count < 1 or direction_count < 1:
            raise ParameterError("sampling counts must be >= 1")
        axes = []
        for lo, hi in self.boundary:
            axes.append(lo + (hi - lo) * (np.arange(boundary_count) + 0.5) / boundary_count)
        for lo, hi in (self.tilt,) + tuple(self.tangent):
            axes.append(lo + (hi - lo) * (np.arange(direction_count) + 0.5) / direction_count)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def chart_to_ray(field: MetricField, domain: Domain, params):
    """Start points on the outer sphere and g-unit inward directions for chart parameters."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    n = domain.n
    nb = n - 1
    x = domain.rho_ext * hyperspherical(params[:, :nb])
    tilt = params[:, nb]
    dirs = np.empty_like(x)
    for i in range(len(x)):
        nu, _ = outer_normal(field, x[i], domain.rho_ext)
        T = tangent_frame(field, x[i], nu)
        if n == 2:
            tau = T[0]
        else:
            tau = hyperspherical(params[i, nb + 1:]) @ T
        dirs[i] = -math.cos(tilt[i]) * nu + math.sin(tilt[i]) * tau
    return x, dirs


def aligned_frames(field: MetricField, x, theta):
    """g-orthonormal frames whose last column is the g-unit ``theta``.

    A Householder reflection in orthonormal coordinates sends ``e_n`` to the
    direction, so the frame depends smoothly on ``(x, theta)``.
    """
    E, L = orthonormal_basis(field, x)
    a = np.einsum("bji,bj->bi", L, theta)
    a /= np.linalg.norm(a, axis=-1, keepdims=True)
    n = a.shape[-1]
    w = -a.copy()
    w[:, -1] += 1.0
    ww = np.einsum("bi,bi->b", w, w)
    H = np.broadcast_to(np.eye(n), w.shape + (n,)).copy()
    ok = ww > 1e-30
    H[ok] -= 2 * w[ok, :, None] * w[ok, None, :] / ww[ok, None, None]
    return E @ H


def rotate_quarter(field: MetricField, x, v):
    """2-D rotation by a right angle in g-orthonormal coordinates: ``L^{-T} R L^T v``."""
    E, L = orthonormal_basis(field, x)
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    return np.einsum("bij,jk,blk,bl->bi", E, R, L, v)


def segment_distance(p, a, b):
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting)."""
    ab = b - a
    den = np.sum(ab * ab, axis=-1)
    s = np.where(den > 0, np.sum((p - a) * ab, axis=-1) / np.where(den > 0, den, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    return np.linalg.norm(p - (a + s[..., None] * ab), axis=-1)


def path_min_distance(field: MetricField, domain: Domain, x, v, h: float, center,
                      chunk: int = 4096):
    """Smallest Euclidean distance from each geodesic (start to outer exit) to ``center``.

    Uses the polyline through uniformly re-integrated samples.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    center = np.asarray(center, dtype=float)
    out = np.empty(len(x))
    for sl in iter_chunks(len(x), chunk):
        xs, vs = x[sl], v[sl]
        if field.flat:
            cr = find_crossings(field, domain, xs, vs, h, inner=False)
            out[sl] = segment_distance(center, xs, cr.z_exit)
            continue
        cr = find_crossings(field, domain, xs, vs, h, inner=False)
        m = segment_counts(cr.t_exit, h)
        hs = cr.t_exit / np.maximum(m, 1)
        z, w = xs.copy(), vs.copy()
        best = np.linalg.norm(z - center, axis=-1)
        for k in range(1, int(m.max(initial=0)) + 1):
            z1, w, _ = rk4_step(field, z, w, None, np.where(k <= m, hs, 0.0))
            best = np.minimum(best, segment_distance(center, z, z1))
            z = z1
        out[sl] = best
    return out


@dataclass
class RayFamily:
    """Sampled open family of geodesics, expanded into the geodesics used for data.

    Each base member ``(x, theta)`` contributes one geodesic per transverse
    direction: in ``n >= 3`` the spanning set is carried to the member by a
    g-orthonormal frame aligned with ``theta``, giving geodesics from ``x``
    along the mapped witness directions with the mapped members as initial
    transverse vectors; in 2-D the single transverse vector is the rotated
    direction.  Rows of the forward operator follow ``(member, k)`` order.
    """

    field: MetricField
    box: ChartBox
    counts: tuple
    x: np.ndarray
    theta: np.ndarray
    ray_x: np.ndarray
    ray_dir: np.ndarray
    ray_eta: np.ndarray
    member: np.ndarray
    k: np.ndarray
    per_member: int
    avoid: Optional[tuple] = None
    dropped: int = 0
    spanning: Optional[SpanningSet] = None

    @property
    def domain(self):
        return self.field.domain

    def __len__(self):
        return len(self.x)

    @property
    def n_rays(self):
        return len(self.ray_x)

    @classmethod
    def sample(cls, field: MetricField, box: ChartBox, boundary_count: int, direction_count: int,
               avoid=None, spanning: Optional[SpanningSet] = None, h: float = 0.02,
               avoid_tol: Optional[float] = None):
        domain = field.domain
        n = domain.n
        params = box.interior_samples(boundary_count, direction_count)
        x, theta = chart_to_ray(field, domain, params)
        if n >= 3:
            spanning = spanning or build_spanning_set(n)
            F = aligned_frames(field, x, theta)
            wit = np.einsum("bij,kj->bki", F, spanning.witnesses)
            eta = np.einsum("bij,kj->bki", F, spanning.eta)
            N = len(spanning)
        else:
            wit = theta[:, None, :]
            eta = rotate_quarter(field, x, theta)[:, None, :]
            N = 1
        R = len(x)
        rx = np.repeat(x, N, axis=0)
        rd = wit.reshape(R * N, n)
        re = eta.reshape(R * N, n)
        member = np.repeat(np.arange(R), N)
        kk = np.tile(np.arange(N), R)
        dropped = 0
        if avoid is not None:
            center, radius = np.asarray(avoid[0], dtype=float), float(avoid[1])
            tol = domain.tol_boundary if avoid_tol is None else avoid_tol
            dist = path_min_distance(field, domain, rx, rd, h, center)
            bad = np.zeros(R, dtype=bool)
            np.logical_or.at(bad, member, dist < radius + tol)
            keep = ~bad
            dropped = int(bad.sum())
            if not np.any(keep):
                raise ConfigError([f"every sampled geodesic meets the avoidance ball "
                                   f"{center.tolist()} r={radius}"])
            rows = keep[member]
            x, theta = x[keep], theta[keep]
            remap = np.cumsum(keep) - 1
            rx, rd, re, member, kk = rx[rows], rd[rows], re[rows], remap[member[rows]], kk[rows]
            avoid = (center, radius)
        return cls(field, box, (boundary_count, direction_count), x, theta, rx, rd, re,
                   member, kk, N, avoid, dropped, spanning if n >= 3 else None)


# -- cones and deformations ---------------------------------------------------------

@dataclass(frozen=True)
class ConeFamily:
    apex: np.ndarray
    center_dir: np.ndarray
    aperture: float
    directions: np.ndarray

    def __len__(self):
        return len(self.directions)

    def angles(self, field: MetricField):
        """g-angles between members and the central direction at the apex."""
        g = field.g(self.apex)
        c = self.center_dir / math.sqrt(self.center_dir @ g @ self.center_dir)
        d = self.directions
        cos = (d @ g @ c) / np.sqrt(np.einsum("bi,ij,bj->b", d, g, d))
        return np.arccos(np.clip(cos, -1.0, 1.0))


def cone_family(field: MetricField, apex, center_dir, aperture: float, count: int,
                toward=None) -> ConeFamily:
    """Central direction plus hexagonal rings of directions within ``aperture``.

    Ring ``j`` of ``R`` sits at angle ``aperture * j / R`` with ``6 j`` members
    (two in 2-D), so ``count`` is rounded down to ``1 + 3 R (R + 1)``.  One
    member of each ring points along ``toward`` (projected transverse to the
    axis), or along the first frame vector when it is not given.
    """
    if not aperture > 0:
        raise ParameterError("cone aperture must be positive")
    if count < 1:
        raise ParameterError("cone member count must be >= 1")
    apex = np.asarray(apex, dtype=float)
    n = len(apex)
    F = aligned_frames(field, apex[None], np.asarray(center_dir, dtype=float)[None])[0]
    c = F[:, -1]
    if toward is not None:
        g = field.g(apex)
        t = np.asarray(toward, dtype=float)
        t = t - (t @ g @ c) * c
        F = F.copy()
        # rotate the transverse columns so the first one points along ``toward``
        coords = np.linalg.solve(F, t)[:-1]
        if np.linalg.norm(coords) > 1e-12:
            a = coords / np.linalg.norm(coords)
            w = -a.copy()
            w[0] += 1.0
            if w @ w > 1e-30:
                H = np.eye(n - 1) - 2 * np.outer(w, w) / (w @ w)
                F[:, :-1] = F[:, :-1] @ H
    if n == 2:
        rings = max(0, (count - 1) // 2)
        azim = [np.array([[1.0], [-1.0]])] * rings
    else:
        rings = 0
        while 1 + 3 * (rings + 1) * (rings + 2) <= count:
            rings += 1
        azim = []
        for j in range(1, rings + 1):
            m = 6 * j
            if n == 3:
                ang = 2 * np.pi * np.arange(m) / m
                azim.append(np.stack([np.cos(ang), np.sin(ang)], axis=-1))
            else:
                pts = sphere_points(n - 1, m)
                pts[0] = np.eye(n - 1)[0]
                azim.append(pts)
    dirs = [c]
    for j, az in enumerate(azim, start=1):
        beta = aperture * j / rings
        for a in az:
            dirs.append(math.cos(beta) * c + math.sin(beta) * (F[:, :-1] @ a))
    return ConeFamily(apex.copy(), c.copy(), float(aperture), np.array(dirs))


@dataclass(frozen=True)
class DeformationPath:
    """Linear interpolation between two chart points ``(boundary angles, direction angles)``."""

    start: np.ndarray
    end: np.ndarray
    steps: int

    @property
    def t(self):
        return np.linspace(0.0, 1.0, self.steps + 1)

    @property
    def params(self):
        t = self.t[:, None]
        return (1 - t) * self.start + t * self.end

    def rays(self, field: MetricField):
        return chart_to_ray(field, field.domain, self.params)

    def step_bound(self):
        return float(np.max(np.linalg.norm(np.diff(self.params, axis=0), axis=-1)))

    def final_misses(self, field: MetricField, h: float) -> bool:
        x, d = chart_to_ray(field, field.domain, self.end[None])
        return not bool(find_crossings(field, field.domain, x, d, h).meets[0])
