"""Ball domains and analytic metrics on them.

All evaluators are vectorised: a point array of shape ``(..., n)`` yields
metric arrays of shape ``(..., n, n)`` and derivative/Christoffel arrays of
shape ``(..., n, n, n)``.  Christoffel symbols are indexed ``[k, i, j]`` for
``Gamma^k_ij`` and metric derivatives ``[k, i, j]`` for ``d_k g_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError, ParameterError, SingularMetricError


@dataclass(frozen=True)
class Domain:
    """Closed ball ``M`` of radius ``rho`` inside the extension ball of radius ``rho_ext``."""

    n: int = 3
    rho: float = 1.0
    rho_ext: float = 1.5

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"dimension must be an integer >= 2, got {self.n}")
        if not self.rho > 0:
            raise ParameterError(f"rho must be positive, got {self.rho}")
        if not self.rho_ext > self.rho:
            raise ParameterError(
                f"rho_ext ({self.rho_ext}) must exceed rho ({self.rho})")

    @property
    def tol_boundary(self) -> float:
        return 1e-9 * self.rho ** 2

    def defining(self, x):
        """Boundary defining function ``|x|^2 - rho^2`` of M."""
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,...i->...", x, x) - self.rho ** 2

    def defining_ext(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,...i->...", x, x) - self.rho_ext ** 2

    def classify(self, x) -> str:
        b = float(self.defining(x))
        if abs(b) <= self.tol_boundary:
            return "boundary"
        return "interior" if b < 0 else "exterior"

    def check_points(self, x):
        """Raise :class:`DomainError` if any point lies outside the outer ball."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ParameterError(f"expected points of dimension {self.n}, got shape {x.shape}")
        bad = self.defining_ext(x) > self.tol_boundary * (self.rho_ext / self.rho) ** 2
        if np.any(bad):
            worst = x.reshape(-1, self.n)[np.argmax(bad.reshape(-1))]
            raise DomainError(f"point {worst.tolist()} lies outside the outer ball "
                              f"of radius {self.rho_ext}")
        return x


class MetricField:
    """Base class for a smooth metric on the outer ball of a :class:`Domain`.

    Subclasses implement :meth:`g` and usually :meth:`dg`; the default
    :meth:`dg` uses central differences of :meth:`g`.
    """

    kind = "custom-analytic"
    flat = False

    def __init__(self, domain: Domain, fd_step: Optional[float] = None):
        self.domain = domain
        self.n = domain.n
        self.fd_step = 1e-5 * domain.rho if fd_step is None else fd_step

    # -- evaluators (no domain checks; use the module functions for checked access)
    def g(self, x):
        raise NotImplementedError

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        h = self.fd_step
        out = np.empty(x.shape + (self.n, self.n))
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            out[..., k, :, :] = (self.g(x + e) - self.g(x - e)) / (2 * h)
        return out

    def g_inv(self, x):
        return np.linalg.inv(self.g(x))

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dg(x)
        # t[i, j, l] = d_i g_jl + d_j g_il - d_l g_ij
        t = d + np.swapaxes(d, -3, -2) - np.moveaxis(d, -3, -1)
        return 0.5 * np.einsum("...kl,...ijl->...kij", self.g_inv(x), t)

    def gamma_contract(self, x, u, w):
        """``Gamma^k_ij u^i w^j``; ``w`` may carry a trailing axis of extra vectors."""
        gam = self.christoffel(x)
        if w.ndim == u.ndim:
            return np.einsum("...kij,...i,...j->...k", gam, u, w)
        return np.einsum("...kij,...i,...jm->...km", gam, u, w)

    def describe(self) -> dict:
        return {"kind": self.kind}


class EuclideanMetric(MetricField):
    kind = "euclidean"
    flat = True

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.n), x.shape[:-1] + (self.n, self.n)).copy()

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.n, self.n))

    def g_inv(self, x):
        return self.g(x)

    def christoffel(self, x):
        return self.dg(x)

    def gamma_contract(self, x, u, w):
        return np.zeros_like(w, dtype=float)


class ConformalMetric(MetricField):
    """``g_ij = c(x)^2 delta_ij`` with ``c(x) = 1 + a |x|^2``."""

    kind = "conformal"

    def __init__(self, domain: Domain, a: float = 0.1):
        super().__init__(domain)
        self.a = float(a)
        cmin = 1 + min(0.0, self.a) * domain.rho_ext ** 2
        if cmin <= 0:
            raise ParameterError(f"conformal factor not positive on the outer ball for a={a}")

    def factor(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.a * np.einsum("...i,...i->...", x, x)

    def g(self, x):
        c = self.factor(x)
        return (c ** 2)[..., None, None] * np.eye(self.n)

    def g_inv(self, x):
        c = self.factor(x)
        return (c ** -2)[..., None, None] * np.eye(self.n)

    def dg(self, x):
        x = np.asarray(x, dtype=float)
        c = self.factor(x)
        # d_k (c^2) = 4 a c x_k
        dc2 = 4 * self.a * c[..., None] * x
        return dc2[..., :, None, None] * np.eye(self.n)

    def _grad_log(self, x):
        return 2 * self.a * x / self.factor(x)[..., None]

    def christoffel(self, x):
        x = np.asarray(x, dtype=float)
        du = self._grad_log(x)
        eye = np.eye(self.n)
        # Gamma^k_ij = delta_ik du_j + delta_jk du_i - delta_ij du_k
        return (eye[:, :, None] * du[..., None, None, :]
                + eye[:, None, :] * du[..., None, :, None]
                - du[..., :, None, None] * eye[None, :, :])

    def gamma_contract(self, x, u, w):
        du = self._grad_log(x)
        du_u = np.einsum("...i,...i->...", du, u)
        if w.ndim == u.ndim:
            return (du_u[..., None] * w + np.einsum("...i,...i->...", du, w)[..., None] * u
                    - np.einsum("...i,...i->...", u, w)[..., None] * du)
        return (du_u[..., None, None] * w
                + u[..., :, None] * np.einsum("...i,...im->...m", du, w)[..., None, :]
                - du[..., :, None] * np.einsum("...i,...im->...m", u, w)[..., None, :])

    def describe(self):
        return {"kind": self.kind, "conformal_a": self.a}


class CustomMetric(MetricField):
    """User-supplied closed-form components.

    ``g_func`` maps points ``(..., n)`` to ``(..., n, n)``; ``dg_func`` (optional)
    returns ``d_k g_ij`` indexed ``[..., k, i, j]``.  Without it derivatives come
    from central differences.
    """

    kind = "custom-analytic"

    def __init__(self, domain: Domain, g_func: Callable, dg_func: Optional[Callable] = None,
                 fd_step: Optional[float] = None):
        super().__init__(domain, fd_step)
        self._g = g_func
        self._dg = dg_func

    def g(self, x):
        gx = np.asarray(self._g(np.asarray(x, dtype=float)), dtype=float)
        return 0.5 * (gx + np.swapaxes(gx, -1, -2))

    def dg(self, x):
        if self._dg is None:
            return super().dg(x)
        d = np.asarray(self._dg(np.asarray(x, dtype=float)), dtype=float)
        return 0.5 * (d + np.swapaxes(d, -1, -2))


def make_metric(domain: Domain, kind: str = "euclidean", conformal_a: float = 0.1) -> MetricField:
    if kind == "euclidean":
        return EuclideanMetric(domain)
    if kind == "conformal":
        return ConformalMetric(domain, conformal_a)
    raise ParameterError(f"unknown metric kind {kind!r}; custom metrics are built in code")


# -- checked operations -------------------------------------------------------

def eval_metric(field: MetricField, x):
    x = field.domain.check_points(x)
    return field.g(x)


def _require_positive(field, x):
    eig = np.linalg.eigvalsh(field.g(x))
    if np.any(eig[..., 0] <= 0):
        raise SingularMetricError(
            f"metric not positive definite; smallest eigenvalue {eig[..., 0].min():.3e}",
            eigenvalues=eig)


def eval_christoffel(field: MetricField, x):
    x = field.domain.check_points(x)
    _require_positive(field, x)
    return field.christoffel(x)


def inner_product(field: MetricField, x, u, v):
    x = field.domain.check_points(x)
    return np.einsum("...ij,...i,...j->...", field.g(x), np.asarray(u, float), np.asarray(v, float))


def g_norm(field, x, v):
    return np.sqrt(np.einsum("...ij,...i,...j->...", field.g(x), v, v))


def orthonormal_basis(field: MetricField, x):
    """Columns of ``L^{-T}`` where ``g = L L^T``: a g-orthonormal basis at each point.

    Returns ``(E, L)``; the dual (covector) basis is ``L`` itself.
    """
    L = np.linalg.cholesky(field.g(x))
    E = np.swapaxes(np.linalg.inv(L), -1, -2)
    return E, L


def outer_normal(field: MetricField, x, radius: float):
    """Unit outward g-normal to the sphere ``|x| = radius`` through ``x``; also returns db."""
    x = np.asarray(x, dtype=float)
    db = 2 * x
    gi = field.g_inv(x)
    raised = np.einsum("...ij,...j->...i", gi, db)
    norm = np.sqrt(np.einsum("...i,...i->...", raised, db))
    return raised / norm[..., None], db


def sphere_points(n: int, count: int, radius: float = 1.0):
    """Deterministic quasi-uniform points on the sphere of the given radius."""
    if n == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (3 - np.sqrt(5)) * i
        r = np.sqrt(1 - z ** 2)
        return radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    u = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    y = ndtri(u)
    return radius * y / np.linalg.norm(y, axis=-1, keepdims=True)


@dataclass
class ConvexityReport:
    minimum: float
    worst_point: np.ndarray
    worst_direction: np.ndarray
    sample_count: int
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(self.minimum > 0)


def check_boundary_convexity(field: MetricField, domain: Domain, sample_count: int,
                             step: float = 1e-5) -> ConvexityReport:
    """Smallest eigenvalue of the second fundamental form of ``dM`` over sample points.

    At each sample the full form ``<nabla_xi nu, xi>`` is evaluated on a
    g-orthonormal tangent basis, so the minimum covers every tangent direction.
    """
    if sample_count < 1:
        raise ParameterError("sample_count must be >= 1")
    n = domain.n
    pts = sphere_points(n, sample_count, domain.rho)
    best = (np.inf, None, None)
    for x in pts:
        nu, _ = outer_normal(field, x, domain.rho)
        g = field.g(x)
        # g-orthonormal tangent basis by Gram-Schmidt against nu
        basis = []
        for e in np.eye(n):
            w = e - (e @ g @ nu) * nu
            for b in basis:
                w = w - (w @ g @ b) * b
            nw = np.sqrt(w @ g @ w)
            if nw > 1e-8:
                basis.append(w / nw)
            if len(basis) == n - 1:
                break
        T = np.array(basis)
        form = np.empty((n - 1, n - 1))
        for a in range(n - 1):
            xi = T[a]
            dnu = (outer_normal(field, x + step * xi, domain.rho)[0]
                   - outer_normal(field, x - step * xi, domain.rho)[0]) / (2 * step)
            cov = dnu + field.gamma_contract(x, xi, nu)
            for c in range(n - 1):
                form[a, c] = cov @ g @ T[c]
        form = 0.5 * (form + form.T)
        lam, vec = np.linalg.eigh(form)
        if lam[0] < best[0]:
            best = (float(lam[0]), x.copy(), vec[:, 0] @ T)
    return ConvexityReport(best[0], best[1], best[2], sample_count)
