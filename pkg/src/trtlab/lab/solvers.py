"""Damped least squares and extreme singular values for the forward operator."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import svdvals
from scipy.sparse.linalg import LinearOperator, eigsh, splu


@dataclass
class SolveResult:
    x: np.ndarray
    residuals: np.ndarray
    iterations: int
    converged: bool


def solve_tikhonov(A, d, lam: float, iters: int = 2000, tol: float = 1e-12) -> SolveResult:
    """Minimise ``|A x - d|^2 + lam |x|^2`` by CGLS (CG on the normal equations).

    ``residuals`` records ``sqrt(|A x - d|^2 + lam |x|^2)`` per iterate, which
    CGLS never increases.  Stops once the normal-equation residual falls to
    ``tol`` times its initial value.
    """
    if lam < 0:
        raise ValueError("regularisation weight must be >= 0")
    A = A.matrix if hasattr(A, "matrix") else A
    d = np.asarray(d, dtype=float)
    if A.shape[0] != d.shape[0]:
        raise ValueError(f"operator has {A.shape[0]} rows, data has {d.shape[0]}")
    x = np.zeros(A.shape[1])
    r = d.copy()
    s = A.T @ r
    p = s.copy()
    gamma = s @ s
    stop = tol ** 2 * gamma
    hist = [np.sqrt(r @ r)]
    converged = gamma <= stop or gamma == 0
    it = 0
    while not converged and it < iters:
        q = A @ p
        delta = q @ q + lam * (p @ p)
        if delta == 0:
            break
        alpha = gamma / delta
        x += alpha * p
        r -= alpha * q
        s = A.T @ r - lam * x
        g_new = s @ s
        p = s + (g_new / gamma) * p
        gamma = g_new
        it += 1
        hist.append(np.sqrt(r @ r + lam * (x @ x)))
        converged = gamma <= stop
    if not converged:
        warnings.warn(f"CGLS stopped after {it} iterations with normal residual "
                      f"{np.sqrt(gamma):.3e} and objective {hist[-1]:.3e}", RuntimeWarning)
    return SolveResult(x, np.array(hist), it, bool(converged))


@dataclass
class SingularReport:
    sigma_min: float
    sigma_max: float
    method: str
    values: np.ndarray

    @property
    def ratio(self):
        return self.sigma_min / self.sigma_max if self.sigma_max > 0 else 0.0


def smallest_singular_value(A, dense_limit: int = 3 * 10 ** 7, gram_limit: int = 8000):
    """Extreme singular values of ``A``.

    Dense SVD when the matrix is small enough, else eigenvalues of the dense
    Gram matrix, else shift-invert Lanczos on ``A^T A`` (an inverse iteration
    with a sparse LU factorisation).
    """
    A = A.matrix if hasattr(A, "matrix") else A
    m, k = A.shape
    if k == 0:
        raise ValueError("operator has no columns")
    if m * k <= dense_limit:
        dense = A.toarray() if sparse.issparse(A) else np.asarray(A)
        s = svdvals(dense)
        if m < k:
            s = np.concatenate([s, np.zeros(k - m)])
        return SingularReport(float(s.min()), float(s.max()), "dense-svd", np.sort(s)[::-1])
    AtA = (A.T @ A)
    if k <= gram_limit:
        ev = np.linalg.eigvalsh(AtA.toarray() if sparse.issparse(AtA) else AtA)
        s = np.sqrt(np.clip(ev, 0, None))[::-1]
        return SingularReport(float(s[-1]), float(s[0]), "gram-eigh", s)
    AtA = sparse.csc_matrix(AtA)
    top = eigsh(AtA, k=1, which="LA", return_eigenvectors=False)[0]
    lu = splu(AtA)
    op = LinearOperator(AtA.shape, matvec=lu.solve, dtype=float)
    low = eigsh(op, k=1, which="LA", return_eigenvectors=False)[0]
    smin = np.sqrt(1.0 / low) if low > 0 else 0.0
    return SingularReport(float(smin), float(np.sqrt(top)), "shift-invert",
                          np.array([np.sqrt(top), smin]))
