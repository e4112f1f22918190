"""Transverse direction systems: the analytic map xi -> theta(xi), Gram-Schmidt
normal frames, and spanning sets of n(n+1)/2 transverse directions whose
squares determine a symmetric 2-tensor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConditioningError, ConstructionError, ParameterError, RankError
from .metric import MetricField
from .tensors import n_components, quad_coeffs, to_matrix

CASE_TOL = 1e-12


def theta_of_xi(xi):
    """Direction orthogonal to the covector ``xi`` with last component 1.

    Defined near ``xi = e_{n-1}``; requires ``xi_{n-1} != 0``.  Works on
    batches with the covector along the last axis.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[-1]
    if n < 2:
        raise ParameterError("need dimension >= 2")
    pivot = xi[..., n - 2]
    if np.any(pivot == 0):
        raise ParameterError("theta(xi) is singular where xi_{n-1} = 0")
    head = xi[..., : n - 2]
    theta = np.empty_like(xi)
    theta[..., : n - 2] = head
    theta[..., n - 2] = -(np.sum(head ** 2, axis=-1) + xi[..., n - 1]) / pivot
    theta[..., n - 1] = 1.0
    return theta


def gram_schmidt_frame(field: MetricField, x, theta, seeds: Optional[Sequence] = None,
                       tol: float = 1e-10):
    """g-orthonormal vectors ``eta_1 .. eta_{n-1}`` g-orthogonal to ``theta`` at ``x``.

    Seeds are used in order; a seed whose residual after projection has
    g-norm below ``tol`` (relative to its own norm) is skipped and the
    canonical basis vectors fill in afterwards.  Returns an ``(n-1, n)`` array.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    g = field.g(x)
    theta = np.asarray(theta, dtype=float)
    tn = np.sqrt(theta @ g @ theta)
    if tn == 0:
        raise ParameterError("theta must be nonzero")
    span = [theta / tn]
    seeds = list(np.eye(n)[: n - 1]) if seeds is None else [np.asarray(s, float) for s in seeds]
    candidates = seeds + list(np.eye(n))
    out = []
    for s in candidates:
        sn = np.sqrt(s @ g @ s)
        if sn == 0:
            continue
        w = s / sn
        for _ in range(2):  # re-orthogonalise once for stability
            for b in span:
                w = w - (w @ g @ b) * b
        wn = np.sqrt(w @ g @ w)
        if wn < tol:
            continue
        w = w / wn
        span.append(w)
        out.append(w)
        if len(out) == n - 1:
            return np.array(out)
    raise RankError(f"seeds {[list(map(float, s)) for s in seeds]} with theta "
                    f"{theta.tolist()} do not span the tangent space")


@dataclass
class SpanMember:
    eta: np.ndarray
    witness: np.ndarray
    p: int
    q: int
    case: str
    a_p: float
    a_q: float
    eps: float


@dataclass
class SpanningSet:
    """``N = n(n+1)/2`` unit vectors, each transverse to its witness direction."""

    n: int
    theta0: np.ndarray
    xi0: np.ndarray
    members: list
    eps: float
    delta: float
    x0: Optional[np.ndarray] = None
    gram: np.ndarray = field(init=False)
    gram_eigenvalues: np.ndarray = field(init=False)
    rank: int = field(init=False)

    def __post_init__(self):
        eta = self.eta
        self.gram = (eta @ eta.T) ** 2
        self.gram_eigenvalues = np.linalg.eigvalsh(self.gram)
        top = self.gram_eigenvalues[-1]
        tol = len(eta) * np.finfo(float).eps * top
        self.rank = int(np.sum(self.gram_eigenvalues > tol))

    @property
    def eta(self):
        return np.array([m.eta for m in self.members])

    @property
    def witnesses(self):
        return np.array([m.witness for m in self.members])

    def __len__(self):
        return len(self.members)

    def design_matrix(self):
        return quad_coeffs(self.eta)

    def mapped(self, frame):
        """Members and witnesses expressed in ``frame``: columns are the images of e_1..e_n.

        For a g-orthonormal frame whose last two columns are the ray direction
        and the covector direction, the images are g-unit and transverse to
        the mapped witnesses.
        """
        frame = np.asarray(frame, dtype=float)
        return self.eta @ frame.T, self.witnesses @ frame.T


def _angle(a, b):
    c = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


class _Escape(Exception):
    pass


def _canonical(n, eps, delta):
    e = np.eye(n)
    theta0 = e[n - 1]
    members = []
    for i in range(n - 1):
        members.append(SpanMember(e[i].copy(), theta0.copy(), i, i, "base", 1.0, 0.0, eps))
    v = eps * e[0] + e[n - 1]
    if _angle(v, theta0) > delta:
        raise _Escape
    u = e[0] - eps * e[n - 1]
    members.append(SpanMember(u / np.linalg.norm(u), v / np.linalg.norm(v), n - 1, n - 1,
                              "base", 1.0, 0.0, eps))
    base = list(members)
    for p in range(n):
        for q in range(p + 1, n):
            ep, tp = base[p].eta, base[p].witness
            eq, tq = base[q].eta, base[q].witness
            a = tq @ ep
            b = tp @ eq
            if abs(a) < CASE_TOL and abs(b) < CASE_TOL:
                comb, wit, case, ap, aq, em = ep + eq, tp, "1", 1.0, 1.0, eps
            elif abs(a) < CASE_TOL:
                comb, wit, case, ap, aq, em = ep + eq, tq, "2", 1.0, 1.0, eps
            elif abs(b) < CASE_TOL:
                comb, wit, case, ap, aq, em = ep + eq, tp, "2", 1.0, 1.0, eps
            else:
                em = eps
                while True:
                    wit = tp + em * tq
                    if _angle(wit, theta0) <= delta:
                        break
                    em /= 2
                    if em < 1e-8:
                        raise ConstructionError(
                            f"no witness for pair ({p + 1}, {q + 1}) within {delta} of theta0")
                # <theta_p + em theta_q, eta_p + a_q eta_q> = 0
                ap, aq = 1.0, -em * a / b
                comb, case = ep + aq * eq, "3"
            members.append(SpanMember(comb / np.linalg.norm(comb), wit / np.linalg.norm(wit),
                                      p, q, case, ap, aq, em))
    return members


def _frame_from(theta0, xi0):
    n = len(theta0)
    t = theta0 / np.linalg.norm(theta0)
    s = xi0 / np.linalg.norm(xi0)
    if abs(t @ s) > 1e-12:
        raise ParameterError("theta0 must be orthogonal to xi0")
    cols = [s, t]
    rest = []
    for e in np.eye(n):
        w = e.copy()
        for c in cols + rest:
            w -= (w @ c) * c
        if np.linalg.norm(w) > 1e-8:
            rest.append(w / np.linalg.norm(w))
        if len(rest) == n - 2:
            break
    return np.column_stack(rest + [s, t])


def build_spanning_set(n: int, theta0=None, xi0=None, delta: float = 0.3, eps: float = 0.1,
                       x0=None) -> SpanningSet:
    """Spanning set built in the frame ``theta0 = e_n``, ``xi0 = e_{n-1}``.

    For other ``(theta0, xi0)`` the canonical set is carried over by the
    orthogonal map sending ``e_n -> theta0`` and ``e_{n-1} -> xi0``.
    """
    if n < 3:
        raise ParameterError("spanning sets need n >= 3")
    e = np.eye(n)
    theta0 = e[n - 1] if theta0 is None else np.asarray(theta0, dtype=float)
    xi0 = e[n - 2] if xi0 is None else np.asarray(xi0, dtype=float)
    Q = _frame_from(theta0, xi0)
    while True:
        try:
            members = _canonical(n, eps, delta)
            break
        except _Escape:
            eps /= 2
            if eps < 1e-8:
                raise ConstructionError(f"base witness cannot stay within {delta} of theta0")
    if not np.allclose(Q, np.eye(n)):
        for m in members:
            m.eta = Q @ m.eta
            m.witness = Q @ m.witness
    s = SpanningSet(n, Q[:, n - 1].copy(), Q[:, n - 2].copy(), members, eps, delta,
                    None if x0 is None else np.asarray(x0, dtype=float))
    if len(s) != n_components(n):
        raise ConstructionError(f"built {len(s)} members, expected {n_components(n)}")
    return s


def recover_tensor_from_quadratic_values(spanning: SpanningSet, values, max_cond: float = 1e12):
    """Symmetric ``f`` with ``f(eta_k, eta_k) = values_k`` for every member."""
    values = np.asarray(values, dtype=float)
    A = spanning.design_matrix()
    cond = np.linalg.cond(A)
    if not cond <= max_cond:
        raise ConditioningError(f"quadratic-value system has condition number {cond:.3e}")
    comps = np.linalg.solve(A, values)
    return to_matrix(comps, spanning.n)
