"""Geodesic and parallel-transport integration on a ball domain.

The integrator is classical fixed-step RK4 on the coupled system

    z' = v,   v'^k = -Gamma^k_ij v^i v^j,   E'^k = -Gamma^k_ij v^i E^j,

where ``E`` holds any number of vectors transported along the geodesic.  All
routines run a whole batch of rays in lockstep; a ray that has finished a
segment keeps stepping with ``h = 0``, which RK4 maps to the identity.

A ray is traced in two passes.  The first pass steps with the nominal ``h``
and locates the crossings of ``dM`` and ``dM~`` by bisection on partial RK4
steps.  The second pass re-integrates each segment (before M, inside M,
after M) with its own uniform step so that boundary crossings are nodes and
Simpson's rule applies on the inner segment.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import DivergenceError, ParameterError
from .metric import Domain, MetricField, g_norm, outer_normal, sphere_points
from .quadrature import (hemisphere_cos_rule, simpson_node_weight, sphere_area, sphere_rule,
                         sphere_rule_order)

BISECTION_ITERS = 60
GRAZE_ITERS = 60


# -- RK4 on the coupled system ------------------------------------------------

def _derivs(field: MetricField, z, v, E):
    dv = -field.gamma_contract(z, v, v)
    dE = None if E is None else -field.gamma_contract(z, v, E)
    return dv, dE


def rk4_step(field: MetricField, z, v, E, h):
    """One RK4 step of size ``h`` (scalar or per-ray array) for a batch of rays."""
    h = np.asarray(h, dtype=float)
    hv = h[..., None] if h.ndim else h
    if field.flat:
        return z + hv * v, v, E
    hE = h[..., None, None] if h.ndim else h
    k1v, k1E = _derivs(field, z, v, E)
    k1z = v
    z2, v2 = z + 0.5 * hv * k1z, v + 0.5 * hv * k1v
    E2 = None if E is None else E + 0.5 * hE * k1E
    k2v, k2E = _derivs(field, z2, v2, E2)
    k2z = v2
    z3, v3 = z + 0.5 * hv * k2z, v + 0.5 * hv * k2v
    E3 = None if E is None else E + 0.5 * hE * k2E
    k3v, k3E = _derivs(field, z3, v3, E3)
    k3z = v3
    z4, v4 = z + hv * k3z, v + hv * k3v
    E4 = None if E is None else E + hE * k3E
    k4v, k4E = _derivs(field, z4, v4, E4)
    k4z = v4
    zn = z + hv / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
    vn = v + hv / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    En = None if E is None else E + hE / 6 * (k1E + 2 * k2E + 2 * k3E + k4E)
    return zn, vn, En


def geodesic_flow(field: MetricField, z, v, h: float, steps: int, E=None):
    """Integrate ``steps`` fixed RK4 steps; returns the final ``(z, v, E)``."""
    if h <= 0:
        raise ParameterError(f"step must be positive, got {h}")
    z = np.array(z, dtype=float)
    v = np.array(v, dtype=float)
    for _ in range(int(steps)):
        z, v, E = rk4_step(field, z, v, E, h)
    return z, v, E


def unit_direction(field: MetricField, x, theta):
    theta = np.asarray(theta, dtype=float)
    nrm = g_norm(field, x, theta)
    if np.any(nrm == 0):
        raise ParameterError("direction must be nonzero")
    return theta / nrm[..., None]


# -- pass 1: crossings ----------------------------------------------------------

def _bisect(field, fn, z, v, E, lo, hi):
    """Root of ``fn(z(s))`` for ``s`` in ``[lo, hi]`` along partial RK4 steps."""
    flo = fn(rk4_step(field, z, v, None, lo)[0]) if np.any(lo) else fn(z)
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        fm = fn(rk4_step(field, z, v, None, mid)[0])
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def _graze_min(field, fn, z, v, h):
    """Golden-section search for the minimum of ``fn`` over a step."""
    g = (math.sqrt(5) - 1) / 2
    a = np.zeros_like(h)
    b = h.copy()
    for _ in range(GRAZE_ITERS):
        c = b - g * (b - a)
        d = a + g * (b - a)
        fc = fn(rk4_step(field, z, v, None, c)[0])
        fd = fn(rk4_step(field, z, v, None, d)[0])
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    s = 0.5 * (a + b)
    return s, fn(rk4_step(field, z, v, None, s)[0])


@dataclass
class Crossings:
    t_in: np.ndarray
    t_out: np.ndarray
    t_exit: np.ndarray
    z_exit: np.ndarray
    v_exit: np.ndarray
    E_exit: Optional[np.ndarray]

    @property
    def meets(self):
        return ~np.isnan(self.t_in)


def find_crossings(field: MetricField, domain: Domain, z0, v0, h: float, E0=None,
                   max_steps_factor: float = 4.0, inner: bool = True) -> Crossings:
    """March a batch of rays until each leaves the outer ball.

    Records the parameters where each ray enters and leaves ``M`` (NaN if it
    misses) and the exit state from the outer ball, carrying ``E0`` along.
    Crossing steps are collected during the march and refined by bisection
    afterwards, all events of one kind in a single batch.  With
    ``inner=False`` only the exit from the outer ball is located.
    """
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    z = np.array(z0, dtype=float)
    v = np.array(v0, dtype=float)
    E = None if E0 is None else np.array(E0, dtype=float)
    B = len(z)
    t = np.zeros(B)
    b = domain.defining(z)
    be = domain.defining_ext(z)
    t_in = np.where(b < 0, 0.0, np.nan)
    t_out = np.full(B, np.nan)
    alive = np.ones(B, dtype=bool)
    max_steps = int(math.ceil(max_steps_factor * domain.rho_ext / h))
    tol_ext = domain.tol_boundary * (domain.rho_ext / domain.rho) ** 2
    # step-start states of crossing events: (rays, t, z, v[, E])
    enter, leave, graze, leave_ext = [], [], [], []

    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        zs, vs = z[idx], v[idx]
        Es = None if E is None else E[idx]
        z1, v1, E1 = rk4_step(field, zs, vs, Es, h)
        be0, be1 = be[idx], domain.defining_ext(z1)
        slope0 = np.einsum("ij,ij->i", zs, vs)

        if inner:
            b0, b1 = b[idx], domain.defining(z1)
            open_in = np.isnan(t_in[idx])
            j = np.flatnonzero((b0 > 0) & (b1 <= 0) & open_in)
            if j.size:
                enter.append((idx[j], t[idx[j]], zs[j], vs[j]))
                t_in[idx[j]] = np.inf
            j = np.flatnonzero((b0 <= 0) & (b1 > 0) & np.isnan(t_out[idx]))
            if j.size:
                leave.append((idx[j], t[idx[j]], zs[j], vs[j]))
                t_out[idx[j]] = np.inf
            # a chord of M shorter than one step leaves no sample inside M
            slope1 = np.einsum("ij,ij->i", z1, v1)
            j = np.flatnonzero((b0 > 0) & (b1 > 0) & (slope0 < 0) & (slope1 > 0)
                               & (b0 < -2 * slope0 * h) & (b1 < 2 * slope1 * h) & open_in)
            if j.size:
                graze.append((idx[j], t[idx[j]], zs[j], vs[j]))
            b[idx] = b1

        out = ((be0 <= 0) & (be1 > 0)) | (be1 > tol_ext) & (be0 > -tol_ext) & (slope0 > 0)
        j = np.flatnonzero(out)
        if j.size:
            leave_ext.append((idx[j], t[idx[j]], zs[j], vs[j], None if Es is None else Es[j]))
            alive[idx[j]] = False

        z[idx], v[idx] = z1, v1
        if E is not None:
            E[idx] = E1
        be[idx] = be1
        t[idx] += h

    if np.any(alive):
        k = np.flatnonzero(alive)[0]
        raise DivergenceError(
            f"geodesic from x={np.asarray(z0)[k].tolist()} theta={np.asarray(v0)[k].tolist()} "
            f"did not leave the outer ball within {max_steps} steps of h={h}")

    fb = domain.defining
    for events, target in ((enter, t_in), (leave, t_out)):
        if events:
            k, t0, zs, vs = (np.concatenate(a) for a in zip(*events))
            target[k] = t0 + _bisect(field, fb, zs, vs, None, np.zeros(k.size), np.full(k.size, h))
    if graze:
        k, t0, zs, vs = (np.concatenate(a) for a in zip(*graze))
        hs = np.full(k.size, h)
        s_min, b_min = _graze_min(field, fb, zs, vs, hs)
        hit = b_min < 0
        if np.any(hit):
            k, t0, zs, vs, sm = k[hit], t0[hit], zs[hit], vs[hit], s_min[hit]
            t_in[k] = t0 + _bisect(field, fb, zs, vs, None, np.zeros(k.size), sm)
            t_out[k] = t0 + _bisect(field, fb, zs, vs, None, sm, np.full(k.size, h))

    k = np.concatenate([e[0] for e in leave_ext])
    t0 = np.concatenate([e[1] for e in leave_ext])
    zs = np.concatenate([e[2] for e in leave_ext])
    vs = np.concatenate([e[3] for e in leave_ext])
    Es = None if E is None else np.concatenate([e[4] for e in leave_ext])
    s = _bisect(field, domain.defining_ext, zs, vs, None, np.zeros(k.size), np.full(k.size, h))
    ze, ve, Ee = rk4_step(field, zs, vs, Es, s)
    t_exit = np.full(B, np.nan)
    z_exit = np.full_like(z, np.nan)
    v_exit = np.full_like(v, np.nan)
    E_exit = None if E is None else np.full_like(E, np.nan)
    t_exit[k] = t0 + s
    z_exit[k], v_exit[k] = ze, ve
    if E is not None:
        E_exit[k] = Ee
    if inner:
        # a ray still inside M when it leaves M~ cannot happen; guard anyway
        t_out = np.where(~np.isnan(t_in) & np.isnan(t_out), t_exit, t_out)
    return Crossings(t_in, t_out, t_exit, z_exit, v_exit, E_exit)


# -- pass 2: uniform re-integration of segments ----------------------------------

def segment_counts(length, h, even=False):
    """Step count per segment; inner (Simpson) segments get an even count >= 2."""
    length = np.nan_to_num(np.asarray(length, dtype=float))
    m = np.ceil(length / h - 1e-9).astype(int)
    m = np.maximum(m, 0)
    if even:
        m = np.where(length > 0, np.maximum(m + (m % 2), 2), 0)
    else:
        m = np.where(length > 0, np.maximum(m, 1), 0)
    return m


VisitFn = Callable[[int, np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray], np.ndarray], None]


def march_inner(field: MetricField, z0, v0, E0, crossings: Crossings, h: float,
                visit: VisitFn):
    """Re-integrate the part of each ray inside M and visit every Simpson node.

    ``visit(k, rays, z, v, E, w)`` receives node index ``k``, the indices of
    rays meeting M, their states and Simpson weights (0 past a ray's end).
    """
    meets = crossings.meets
    rays = np.flatnonzero(meets)
    if rays.size == 0:
        return
    z = np.array(z0, dtype=float)[rays]
    v = np.array(v0, dtype=float)[rays]
    E = None if E0 is None else np.array(E0, dtype=float)[rays]
    t_in = crossings.t_in[rays]
    t_out = crossings.t_out[rays]
    m_a = segment_counts(t_in, h)
    h_a = np.where(m_a > 0, t_in / np.maximum(m_a, 1), 0.0)
    for k in range(1, int(m_a.max(initial=0)) + 1):
        z, v, E = rk4_step(field, z, v, E, np.where(k <= m_a, h_a, 0.0))
    m_b = segment_counts(t_out - t_in, h, even=True)
    m_b = np.maximum(m_b, 2)
    h_b = (t_out - t_in) / m_b
    visit(0, rays, z, v, E, simpson_node_weight(0, m_b, h_b))
    for k in range(1, int(m_b.max(initial=0)) + 1):
        z, v, E = rk4_step(field, z, v, E, np.where(k <= m_b, h_b, 0.0))
        visit(k, rays, z, v, E, simpson_node_weight(k, m_b, h_b))


def iter_chunks(total: int, size: int) -> Iterator[slice]:
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


# -- stored single paths -----------------------------------------------------------

@dataclass(frozen=True)
class GeodesicPath:
    """Sampled geodesic from its start point until it leaves the outer ball.

    Samples are uniform within each of the segments before, inside and after
    M; ``inner`` selects the samples inside M (empty when ``meets`` is False).
    """

    x0: np.ndarray
    theta0: np.ndarray
    h: float
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    meets: bool
    t_in: float
    t_out: float
    t_exit: float
    i_in: int
    i_out: int

    @property
    def inner(self) -> slice:
        return slice(self.i_in, self.i_out + 1) if self.meets else slice(0, 0)

    @property
    def chord_length(self) -> float:
        return float(self.t_out - self.t_in) if self.meets else 0.0

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        n = self.z.shape[1]
        header = ["t"] + [f"z{i + 1}" for i in range(n)] + [f"zeta{i + 1}" for i in range(n)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for ti, zi, vi in zip(self.t, self.z, self.v):
                w.writerow([format(float(x), ".17g") for x in (ti, *zi, *vi)])


def shoot_geodesics(field: MetricField, domain: Domain, x, theta, h: float,
                    max_steps_factor: float = 4.0) -> list:
    """Batch version of :func:`shoot_geodesic`; returns one path per row of ``x``."""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = domain.check_points(np.atleast_2d(np.asarray(x, dtype=float)))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape != x.shape:
        raise ParameterError("x and theta must have matching shapes")
    v0 = unit_direction(field, x, theta)
    cr = find_crossings(field, domain, x, v0, h, max_steps_factor=max_steps_factor)
    meets = cr.meets
    t_in = np.where(meets, cr.t_in, 0.0)
    t_out = np.where(meets, cr.t_out, 0.0)
    lens = np.stack([t_in, t_out - t_in, cr.t_exit - t_out], axis=1)
    counts = np.stack([segment_counts(lens[:, 0], h),
                       np.where(meets, np.maximum(segment_counts(lens[:, 1], h, even=True), 2), 0),
                       segment_counts(lens[:, 2], h)], axis=1)
    steps = np.where(counts > 0, lens / np.maximum(counts, 1), 0.0)
    total = counts.sum(axis=1)
    L = int(total.max()) + 1
    B = len(x)
    Z = np.empty((B, L, domain.n))
    V = np.empty((B, L, domain.n))
    T = np.empty((B, L))
    z, v, t = x.copy(), v0.copy(), np.zeros(B)
    Z[:, 0], V[:, 0], T[:, 0] = z, v, t
    pos = np.zeros(B, dtype=int)
    for p in range(3):
        for k in range(1, int(counts[:, p].max(initial=0)) + 1):
            active = k <= counts[:, p]
            hk = np.where(active, steps[:, p], 0.0)
            z, v, _ = rk4_step(field, z, v, None, hk)
            t = t + hk
            pos = pos + active
            rows = np.flatnonzero(active)
            Z[rows, pos[rows]] = z[rows]
            V[rows, pos[rows]] = v[rows]
            T[rows, pos[rows]] = t[rows]
    paths = []
    for i in range(B):
        m = total[i] + 1
        i_in = int(counts[i, 0])
        paths.append(GeodesicPath(
            x0=x[i].copy(), theta0=v0[i].copy(), h=float(h), t=T[i, :m].copy(),
            z=Z[i, :m].copy(), v=V[i, :m].copy(), meets=bool(meets[i]),
            t_in=float(cr.t_in[i]), t_out=float(cr.t_out[i]), t_exit=float(cr.t_exit[i]),
            i_in=i_in, i_out=i_in + int(counts[i, 1])))
    return paths


def shoot_geodesic(field: MetricField, domain: Domain, x, theta, h: float,
                   max_steps_factor: float = 4.0) -> GeodesicPath:
    """Integrate the geodesic from ``x`` in direction ``theta`` until it leaves the outer ball."""
    return shoot_geodesics(field, domain, x, theta, h, max_steps_factor)[0]


# -- transport along stored samples --------------------------------------------------

@dataclass(frozen=True)
class TransportedVector:
    path: GeodesicPath
    eta: np.ndarray
    eta0: np.ndarray


def _transport_padded(field, Z, V, T, W, reverse):
    """Transport ``W`` (B, n, m) along padded sample arrays; returns (B, L, n, m)."""
    B, L, n = Z.shape
    out = np.empty((B, L) + W.shape[1:])
    order = range(L - 1, 0, -1) if reverse else range(0, L - 1)
    first = L - 1 if reverse else 0
    out[:, first] = W
    for i in order:
        j = i - 1 if reverse else i + 1
        dt = T[:, j] - T[:, i]
        # RK4 stages of the geodesic started from the stored sample give the
        # half-step positions and velocities for the transport equation
        _, _, W = rk4_step(field, Z[:, i], V[:, i], W, dt)
        out[:, j] = W
    return out


def transport_many(field: MetricField, paths: Sequence[GeodesicPath], eta, reverse=False):
    """Transport one vector (or an ``(n, m)`` block) per path; returns padded arrays.

    With ``reverse`` the initial value is attached to each path's last sample.
    Returns a list of arrays, one per path, shaped like the path samples.
    """
    eta = np.asarray(eta, dtype=float)
    B = len(paths)
    vec = eta.ndim == 2
    if vec:
        eta = eta[..., None]
    n = paths[0].z.shape[1]
    if eta.shape[:2] != (B, n):
        raise ParameterError(f"expected {B} vectors of dimension {n}, got shape {eta.shape}")
    L = max(len(p) for p in paths)
    Z = np.empty((B, L, n))
    V = np.empty((B, L, n))
    T = np.empty((B, L))
    for b, p in enumerate(paths):
        m = len(p)
        if reverse:
            # right-align so every path starts at index L-1 together
            Z[b, L - m:], V[b, L - m:], T[b, L - m:] = p.z, p.v, p.t
            Z[b, :L - m], V[b, :L - m], T[b, :L - m] = p.z[0], p.v[0], p.t[0]
        else:
            Z[b, :m], V[b, :m], T[b, :m] = p.z, p.v, p.t
            Z[b, m:], V[b, m:], T[b, m:] = p.z[-1], p.v[-1], p.t[-1]
    out = _transport_padded(field, Z, V, T, eta, reverse)
    res = []
    for b, p in enumerate(paths):
        m = len(p)
        a = out[b, L - m:] if reverse else out[b, :m]
        res.append(a[..., 0] if vec else a)
    return res


def parallel_transport(field: MetricField, path: GeodesicPath, eta0,
                       reverse: bool = False) -> TransportedVector:
    """Parallel-transport ``eta0`` along ``path``.

    ``eta0`` is attached at the first sample, or at the last one when
    ``reverse`` is set (integration then runs backwards in the parameter).
    """
    if len(path) < 2:
        raise ParameterError("path needs at least two samples")
    eta0 = np.asarray(eta0, dtype=float)
    if eta0.shape != (path.z.shape[1],):
        raise ParameterError(f"vector dimension {eta0.shape} does not match path dimension "
                             f"{path.z.shape[1]}")
    eta = transport_many(field, [path], eta0[None], reverse=reverse)[0]
    return TransportedVector(path, eta, eta0.copy())


# -- influx boundary -----------------------------------------------------------------

@dataclass(frozen=True)
class InfluxSample:
    x: np.ndarray
    xi: np.ndarray
    santalo: float
    weight: float


@dataclass(frozen=True)
class InfluxSet:
    """Quadrature nodes on the influx boundary.

    ``santalo`` is ``|<xi, nu>|``; ``weight`` is the product surface-times-sphere
    weight, so ``sum(santalo * weight * F)`` approximates the integral of ``F``
    against the Santalo measure.
    """

    x: np.ndarray
    xi: np.ndarray
    santalo: np.ndarray
    weight: np.ndarray
    radius: float

    @property
    def measure(self):
        return self.santalo * self.weight

    def __len__(self):
        return len(self.weight)

    def __getitem__(self, i) -> InfluxSample:
        return InfluxSample(self.x[i], self.xi[i], float(self.santalo[i]), float(self.weight[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def tangent_frame(field: MetricField, x, nu):
    """g-orthonormal basis of the hyperplane g-orthogonal to ``nu`` at one point, (n-1, n)."""
    g = field.g(x)
    basis = []
    for e in np.eye(len(x)):
        w = e - (e @ g @ nu) * nu
        for b in basis:
            w = w - (w @ g @ b) * b
        nw = math.sqrt(max(w @ g @ w, 0.0))
        if nw > 1e-8:
            basis.append(w / nw)
        if len(basis) == len(x) - 1:
            break
    return np.array(basis)


def influx_sample(field: MetricField, domain: Domain, counts, surface: str = "outer") -> InfluxSet:
    """Deterministic product quadrature on the influx boundary of ``dM~`` (or ``dM``)."""
    boundary_count, direction_count = counts
    if boundary_count < 1 or direction_count < 1:
        raise ParameterError("sampling counts must be >= 1")
    n = domain.n
    radius = domain.rho_ext if surface == "outer" else domain.rho
    u, wu = sphere_rule_order(n, boundary_count)
    x = radius * u
    cos_a, sin_a, tang, wd = hemisphere_cos_rule(n, direction_count)
    xs, xis, sant, wts = [], [], [], []
    for xb, wb in zip(x, wu):
        nu, db = outer_normal(field, xb, radius)
        g = field.g(xb)
        # induced surface element: sqrt(det g) |db|_{g^-1} / |db| times the Euclidean one
        area = (math.sqrt(np.linalg.det(g)) * math.sqrt(db @ np.linalg.solve(g, db))
                / np.linalg.norm(db)) * radius ** (n - 1) * wb
        T = tangent_frame(field, xb, nu)
        dirs = -cos_a[:, None] * nu + sin_a[:, None] * (tang @ T)
        xs.append(np.broadcast_to(xb, dirs.shape))
        xis.append(dirs)
        sant.append(cos_a)
        wts.append(area * wd / cos_a)
    return InfluxSet(np.concatenate(xs), np.concatenate(xis), np.concatenate(sant),
                     np.concatenate(wts), radius)


def volume_g(field: MetricField, domain: Domain, order: int = 24, density=None) -> float:
    """Riemannian volume of M (or the integral of ``density``) by Gauss quadrature in polar coordinates."""
    n = domain.n
    r, wr = np.polynomial.legendre.leggauss(order)
    r = 0.5 * domain.rho * (r + 1)
    wr = 0.5 * domain.rho * wr
    u, wu = sphere_rule_order(n, order)
    pts = r[:, None, None] * u[None]
    dens = np.sqrt(np.linalg.det(field.g(pts)))
    if density is not None:
        dens = dens * density(pts)
    return float(np.einsum("r,s,rs->", wr * r ** (n - 1), wu, dens))


def santalo_volume_check(field: MetricField, domain: Domain, counts, h: float,
                         chunk: int = 4096, density=None):
    """Integrate ray integrals over the influx boundary of ``dM~``.

    Santalo's formula equates the influx integral of the ray integral of a
    function with ``|S^{n-1}|`` times its integral over M.  Without ``density``
    the function is 1 and the ray integral is the chord length, whose kink at
    grazing rays limits the convergence rate; a smooth density vanishing on
    ``dM`` converges fast.  Returns ``(quadrature value, exact value)``.
    """
    inf = influx_sample(field, domain, counts)
    total = 0.0
    for sl in iter_chunks(len(inf), chunk):
        cr = find_crossings(field, domain, inf.x[sl], inf.xi[sl], h)
        if density is None:
            ray = np.where(cr.meets, cr.t_out - cr.t_in, 0.0)
        else:
            ray = np.zeros(len(cr.t_in))

            def visit(k, rays, z, v, E, w):
                ray[rays] += w * density(z)

            v0 = unit_direction(field, inf.x[sl], inf.xi[sl])
            march_inner(field, inf.x[sl], v0, None, cr, h, visit)
        total += float(np.sum(inf.measure[sl] * ray))
    return total, sphere_area(domain.n) * volume_g(field, domain, density=density)


def sphere_directions(field: MetricField, x, count: int):
    """g-unit sphere quadrature at one point: directions ``(m, n)`` and weights."""
    u, w = sphere_rule(field.n, count)
    E = np.linalg.inv(np.linalg.cholesky(field.g(x))).T
    return u @ E.T, w


__all__ = [
    "Crossings", "GeodesicPath", "InfluxSample", "InfluxSet", "TransportedVector",
    "find_crossings", "geodesic_flow", "influx_sample", "march_inner", "parallel_transport",
    "rk4_step", "santalo_volume_check", "shoot_geodesic", "shoot_geodesics", "sphere_points",
    "transport_many", "unit_direction", "volume_g",
]
