"""Bit-stable CSV output (UTF-8, LF, 17 significant digits) and voxel field files."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from ..fields import VoxelField, VoxelGrid
from ..tensors import n_components, sym_pairs


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def component_names(n: int):
    return [f"f{i + 1}{j + 1}" for i, j in sym_pairs(n)]


def write_field_csv(path, f: VoxelField, voxels=None):
    """One row per voxel: index tuple then upper-triangular components."""
    n = f.n
    grid = f.grid
    voxels = np.flatnonzero(f.support) if voxels is None else np.asarray(voxels)
    idx = np.array(np.unravel_index(voxels, grid.resolution)).T
    header = [f"i{k + 1}" for k in range(n)] + component_names(n)
    write_csv(path, header, ([*map(int, i), *c] for i, c in zip(idx, f.components[voxels])))


def read_field_csv(path, domain, grid: VoxelGrid) -> VoxelField:
    n = domain.n
    nc = n_components(n)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParameterError(f"{path}: empty field file")
    expected = [f"i{k + 1}" for k in range(n)] + component_names(n)
    if [h.strip() for h in rows[0]] != expected:
        raise ParameterError(f"{path}: header must be {','.join(expected)}")
    comps = np.zeros((grid.size, nc))
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != n + nc:
            raise ParameterError(f"{path}:{line}: expected {n + nc} columns, got {len(row)}")
        idx = tuple(int(v) for v in row[:n])
        if any(not 0 <= i < r for i, r in zip(idx, grid.resolution)):
            raise ParameterError(f"{path}:{line}: voxel index {idx} outside grid {grid.resolution}")
        comps[np.ravel_multi_index(idx, grid.resolution)] = [float(v) for v in row[n:]]
    return VoxelField(domain, grid, comps)


@dataclass
class Metric:
    name: str
    value: object
    threshold: object = ""
    relation: str = ""
    passed: object = ""


@dataclass
class RunReport:
    command: str
    config_hash: str
    metrics: list = field(default_factory=list)
    defaults: tuple = ()
    seconds: float = 0.0

    def add(self, name, value):
        self.metrics.append(Metric(name, value))

    def check(self, name, value, threshold, relation="<"):
        """Record a measured value against its threshold; returns whether it passed."""
        ops = {"<": value < threshold, "<=": value <= threshold, ">": value > threshold,
               ">=": value >= threshold, "==": value == threshold}
        ok = bool(ops[relation])
        self.metrics.append(Metric(name, value, threshold, relation, ok))
        return ok

    @property
    def passed(self) -> bool:
        return all(m.passed is not False for m in self.metrics)

    def rows(self):
        yield ("command", self.command, "", "", "")
        yield ("config_hash", self.config_hash, "", "", "")
        for key, text in self.defaults:
            yield (f"default:{key}", text, "", "", "")
        for m in self.metrics:
            yield (m.name, m.value, m.threshold, m.relation, m.passed)
        yield ("all_passed", self.passed, "", "", "")

    def write(self, path):
        write_csv(path, ["metric", "value", "threshold", "relation", "passed"], self.rows())
