"""Symmetric 2-tensor fields: closed-form callables and voxel grids.

Both kinds expose ``raw(x)``, the unmasked value, and ``value(x)``, which
additionally extends the field by zero outside M.  Ray integrals evaluate
``raw`` on nodes that are inside M by construction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ParameterError
from .metric import Domain
from .tensors import n_components, to_matrix


class SymTensorField2:
    n: int
    domain: Domain

    def raw(self, x):
        raise NotImplementedError

    def value(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.domain.defining(x) <= 0
        return np.where(inside[..., None, None], self.raw(x), 0.0)


class ClosedFormField(SymTensorField2):
    """Field given by a vectorised callable ``(..., n) -> (..., n, n)``."""

    representation = "closed-form"

    def __init__(self, domain: Domain, func: Callable):
        self.domain = domain
        self.n = domain.n
        self.func = func

    def raw(self, x):
        val = np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)
        return 0.5 * (val + np.swapaxes(val, -1, -2))

    @classmethod
    def zero(cls, domain):
        return cls(domain, lambda x: np.zeros(np.shape(x)[:-1] + (domain.n, domain.n)))

    @classmethod
    def constant(cls, domain, matrix):
        matrix = np.asarray(matrix, dtype=float)
        return cls(domain, lambda x: np.broadcast_to(matrix, np.shape(x)[:-1] + matrix.shape))

    @classmethod
    def bump(cls, domain, center, radius, matrix=None, power: int = 6):
        """``(1 - |x-c|^2/r^2)^power * matrix`` inside the ball, exactly zero outside."""
        center = np.asarray(center, dtype=float)
        n = domain.n
        matrix = np.eye(n) if matrix is None else np.asarray(matrix, dtype=float)

        def func(x):
            s = np.sum((x - center) ** 2, axis=-1) / radius ** 2
            amp = np.where(s < 1, np.clip(1 - s, 0, None) ** power, 0.0)
            return amp[..., None, None] * matrix

        f = cls(domain, func)
        f.support = (center, float(radius))
        return f


@dataclass(frozen=True)
class VoxelGrid:
    """Regular grid of ``resolution`` voxels per axis on ``[lo, hi]^n``."""

    n: int
    resolution: tuple
    lo: float
    hi: float

    @classmethod
    def covering(cls, domain: Domain, resolution: Union[int, Sequence[int]]):
        if np.isscalar(resolution):
            resolution = (int(resolution),) * domain.n
        resolution = tuple(int(r) for r in resolution)
        if len(resolution) != domain.n or min(resolution) < 1:
            raise ParameterError(f"resolution must give {domain.n} positive counts")
        return cls(domain.n, resolution, -domain.rho, domain.rho)

    @property
    def spacing(self):
        return np.array([(self.hi - self.lo) / r for r in self.resolution])

    @property
    def size(self):
        return int(np.prod(self.resolution))

    @property
    def voxel_volume(self):
        return float(np.prod(self.spacing))

    def indices(self):
        return np.array(list(itertools.product(*[range(r) for r in self.resolution])))

    def centers(self):
        return self.lo + (self.indices() + 0.5) * self.spacing

    def active(self, domain: Domain):
        """Voxels whose centres lie in M."""
        return domain.defining(self.centers()) < 0

    def flat_index(self, idx):
        return np.ravel_multi_index(tuple(np.moveaxis(np.asarray(idx), -1, 0)), self.resolution)

    def interp_weights(self, x):
        """Multilinear interpolation between voxel centres with zero ghost voxels.

        Returns ``(index, weight)`` arrays of shape ``(P, 2^n)``; index -1
        marks a ghost voxel outside the grid.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = (x - self.lo) / self.spacing - 0.5
        i0 = np.floor(u).astype(int)
        fr = u - i0
        res = np.array(self.resolution)
        idx_list, w_list = [], []
        for bits in itertools.product((0, 1), repeat=self.n):
            bits = np.array(bits)
            ii = i0 + bits
            w = np.prod(np.where(bits == 1, fr, 1 - fr), axis=-1)
            ok = np.all((ii >= 0) & (ii < res), axis=-1)
            flat = np.where(ok, np.ravel_multi_index(tuple(np.clip(ii, 0, res - 1).T), self.resolution), -1)
            idx_list.append(flat)
            w_list.append(np.where(ok, w, 0.0))
        return np.stack(idx_list, axis=-1), np.stack(w_list, axis=-1)


class VoxelField(SymTensorField2):
    """Per-voxel component values, interpolated multilinearly between centres."""

    representation = "voxel-grid"

    def __init__(self, domain: Domain, grid: VoxelGrid, components, support=None):
        self.domain = domain
        self.n = domain.n
        self.grid = grid
        comps = np.asarray(components, dtype=float).reshape(grid.size, n_components(self.n))
        self.support = (grid.active(domain) if support is None
                        else np.asarray(support, dtype=bool).reshape(grid.size))
        self.components = np.where(self.support[:, None], comps, 0.0)

    @classmethod
    def zeros(cls, domain, grid):
        return cls(domain, grid, np.zeros((grid.size, n_components(domain.n))))

    @classmethod
    def sample(cls, domain, grid, source: SymTensorField2):
        """Voxel field holding ``source`` evaluated at the active centres."""
        from .tensors import to_components
        comps = to_components(source.value(grid.centers()))
        return cls(domain, grid, comps)

    def raw_components(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        idx, w = self.grid.interp_weights(x.reshape(-1, self.n))
        vals = self.components[np.clip(idx, 0, None)] * w[..., None]
        return vals.sum(axis=1).reshape(shape + (n_components(self.n),))

    def raw(self, x):
        return to_matrix(self.raw_components(x), self.n)
