"""Component bookkeeping for symmetric 2-tensors (upper-triangular order)."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def sym_pairs(n: int):
    """Index pairs ``(i, j)``, ``i <= j``, in the order f11, f12, ..., f1n, f22, ..., fnn."""
    return tuple((i, j) for i in range(n) for j in range(i, n))


def n_components(n: int) -> int:
    return n * (n + 1) // 2


def to_matrix(comps, n: int):
    comps = np.asarray(comps, dtype=float)
    out = np.empty(comps.shape[:-1] + (n, n))
    for c, (i, j) in enumerate(sym_pairs(n)):
        out[..., i, j] = comps[..., c]
        out[..., j, i] = comps[..., c]
    return out


def to_components(mat):
    mat = np.asarray(mat, dtype=float)
    n = mat.shape[-1]
    idx_i, idx_j = np.array(sym_pairs(n)).T
    return 0.5 * (mat[..., idx_i, idx_j] + mat[..., idx_j, idx_i])


def quad_coeffs(eta):
    """Coefficients ``c`` with ``f(eta, eta) = c . components(f)`` (off-diagonals doubled)."""
    eta = np.asarray(eta, dtype=float)
    n = eta.shape[-1]
    idx_i, idx_j = np.array(sym_pairs(n)).T
    return eta[..., idx_i] * eta[..., idx_j] * np.where(idx_i == idx_j, 1.0, 2.0)


def pair_g(ginv, a, b):
    """Frobenius pairing of covariant 2-tensors with indices raised by ``g``."""
    return np.einsum("...ij,...jk,...kl,...li->...", ginv, a, ginv, b)
