"""Sparse discretisation of the transverse ray transform on a voxel grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from ..fields import SymTensorField2, VoxelField, VoxelGrid
from ..geodesic import find_crossings, iter_chunks, march_inner, unit_direction
from ..tensors import n_components, quad_coeffs, to_components
from .family import RayFamily, segment_distance


@dataclass
class ForwardMatrix:
    """Rows are ``(member, k)`` geodesics; columns are ``(active voxel, component)``."""

    matrix: sparse.csr_matrix
    grid: VoxelGrid
    voxels: np.ndarray
    ncomp: int
    member: np.ndarray
    k: np.ndarray
    zero_rows: np.ndarray
    coverage_mask: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.matrix.shape

    def unknowns(self, f: VoxelField):
        """Unknown vector holding ``f``'s components on the active voxels."""
        return f.components[self.voxels].ravel()

    def field(self, x, domain, support=None) -> VoxelField:
        comps = np.zeros((self.grid.size, self.ncomp))
        comps[self.voxels] = np.asarray(x).reshape(len(self.voxels), self.ncomp)
        if support is None:
            support = np.zeros(self.grid.size, dtype=bool)
            support[self.voxels] = True
        return VoxelField(domain, self.grid, comps, support=support)

    def apply(self, f: VoxelField):
        return self.matrix @ self.unknowns(f)

    def restrict(self, voxel_mask):
        """Operator on the voxels selected by a grid-sized mask (columns removed)."""
        keep_vox = voxel_mask[self.voxels]
        cols = (np.flatnonzero(keep_vox)[:, None] * self.ncomp + np.arange(self.ncomp)).ravel()
        A = self.matrix[:, cols].tocsr()
        zero = np.diff(A.indptr) == 0
        return ForwardMatrix(A, self.grid, self.voxels[keep_vox], self.ncomp, self.member,
                             self.k, zero, self.coverage_mask)

    def voxel_hits(self):
        """Number of rows touching each active voxel."""
        S = sparse.kron(sparse.eye(len(self.voxels), format="csr"),
                        np.ones((self.ncomp, 1)), format="csr")
        touched = (abs(self.matrix) @ S).tocsc()
        touched.data[:] = 1.0
        return np.asarray(touched.sum(axis=0)).ravel().astype(int)


def _mask_offsets(n, spacing, h):
    reach = 0.5 + 0.5 * np.sqrt(n) + h / (2 * spacing.min())
    r = int(np.floor(reach))
    return np.array(list(itertools.product(range(-r, r + 1), repeat=n)))


def assemble_forward(field, grid: VoxelGrid, family: RayFamily, h: float, chunk: int = 1024,
                     coverage: bool = False) -> ForwardMatrix:
    """Simpson weight x interpolation weight x ``eta^i eta^j`` accumulated per row.

    With ``coverage`` also builds the mask of active voxels whose centres lie
    within half a voxel diagonal of some geodesic segment inside M.
    """
    domain = field.domain
    n = domain.n
    nc = n_components(n)
    active = grid.active(domain)
    voxels = np.flatnonzero(active)
    colmap = np.full(grid.size, -1)
    colmap[voxels] = np.arange(len(voxels))
    res = np.array(grid.resolution)
    spacing = grid.spacing
    half_diag = 0.5 * np.linalg.norm(spacing)
    offsets = _mask_offsets(n, spacing, h) if coverage else None
    mask = np.zeros(grid.size, dtype=bool) if coverage else None
    blocks = []
    G = family.n_rays
    for sl in iter_chunks(G, chunk):
        xs = family.ray_x[sl]
        v0 = unit_direction(field, xs, family.ray_dir[sl])
        eta0 = family.ray_eta[sl][:, :, None]
        cr = find_crossings(field, domain, xs, v0, h)
        rows, cols, vals = [], [], []
        prev = {}

        def visit(k, rays, z, v, E, w):
            idx, iw = grid.interp_weights(z)
            col = np.where(idx >= 0, colmap[np.clip(idx, 0, None)], -1)
            q = quad_coeffs(E[:, :, 0])
            live = (w > 0)[:, None] & (col >= 0) & (iw > 0)
            r_i, c_i = np.nonzero(live)
            if r_i.size:
                base = w[r_i] * iw[r_i, c_i]
                rows.append(np.repeat(rays[r_i], nc))
                cols.append((col[r_i, c_i][:, None] * nc + np.arange(nc)).ravel())
                vals.append((base[:, None] * q[r_i]).ravel())
            if mask is not None:
                if k > 0:
                    a = prev["z"]
                    seg = w > 0
                    if np.any(seg):
                        _mark(mask, grid, res, offsets, half_diag, active, a[seg], z[seg])
                prev["z"] = z.copy()

        march_inner(field, xs, v0, eta0, cr, h, visit)
        if rows:
            r = np.concatenate(rows)
            c = np.concatenate(cols)
            d = np.concatenate(vals)
        else:
            r = c = np.zeros(0, dtype=int)
            d = np.zeros(0)
        blocks.append(sparse.coo_matrix((d, (r, c)), shape=(sl.stop - sl.start, len(voxels) * nc))
                      .tocsr())
    A = sparse.vstack(blocks, format="csr") if blocks else sparse.csr_matrix((0, len(voxels) * nc))
    A.sum_duplicates()
    zero = np.diff(A.indptr) == 0
    return ForwardMatrix(A, grid, voxels, nc, family.member.copy(), family.k.copy(), zero, mask)


def _mark(mask, grid, res, offsets, half_diag, active, a, b):
    mid = 0.5 * (a + b)
    i0 = np.floor((mid - grid.lo) / grid.spacing).astype(int)
    cand = i0[:, None, :] + offsets[None]
    ok = np.all((cand >= 0) & (cand < res), axis=-1)
    cidx = np.clip(cand, 0, res - 1)
    centers = grid.lo + (cidx + 0.5) * grid.spacing
    d = segment_distance(centers, a[:, None, :], b[:, None, :])
    hit = ok & (d <= half_diag)
    flat = np.ravel_multi_index(tuple(np.moveaxis(cidx[hit], -1, 0)), grid.resolution)
    mask[flat[active[flat]]] = True


def forward_closed_form(f: SymTensorField2, field, family: RayFamily, h: float,
                        chunk: int = 2048):
    """Data of a closed-form field on every geodesic of the family, in row order."""
    domain = field.domain
    out = np.zeros(family.n_rays)
    for sl in iter_chunks(family.n_rays, chunk):
        xs = family.ray_x[sl]
        v0 = unit_direction(field, xs, family.ray_dir[sl])
        eta0 = family.ray_eta[sl][:, :, None]
        cr = find_crossings(field, domain, xs, v0, h)
        acc = np.zeros(len(xs))

        def visit(k, rays, z, v, E, w):
            e = E[:, :, 0]
            acc[rays] += w * np.einsum("rij,ri,rj->r", f.raw(z), e, e)

        march_inner(field, xs, v0, eta0, cr, h, visit)
        out[sl] = acc
    return out


def sample_voxel_field(field, grid: VoxelGrid, f: SymTensorField2) -> VoxelField:
    return VoxelField(field.domain, grid, to_components(f.value(grid.centers())))
