"""Line-oriented experiment configuration: ``section.key = value`` with ``#`` comments."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from ..errors import ConfigError


def _floats(text: str):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    kind: Callable
    default: Any
    check: Optional[Callable] = None
    rule: str = ""
    choices: tuple = ()


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _atleast1(v):
    return v >= 1


SCHEMA: dict = {
    "seed": Key(int, 0),
    "domain.n": Key(int, 3, lambda v: v >= 2, "must be >= 2"),
    "domain.rho": Key(float, 1.0, _pos, "must be > 0"),
    "domain.rho_ext": Key(float, 1.5, _pos, "must be > 0"),
    "metric.kind": Key(str, "euclidean", choices=("euclidean", "conformal")),
    "metric.conformal_a": Key(float, 0.1),
    "ode.h": Key(float, 0.02, _pos, "must be > 0"),
    "ode.max_steps_factor": Key(float, 4.0, _pos, "must be > 0"),
    "sampling.boundary_count": Key(int, 8, _atleast1, "must be >= 1"),
    "sampling.direction_count": Key(int, 6, _atleast1, "must be >= 1"),
    "sampling.sphere_count": Key(int, 26, _atleast1, "must be >= 1"),
    "grid.resolution": Key(int, 8, _atleast1, "must be >= 1"),
    "family.tilt_min": Key(float, 0.0, _nonneg, "must be >= 0"),
    "family.tilt_max": Key(float, 0.7, lambda v: 0 < v < math.pi / 2, "must lie in (0, pi/2)"),
    "family.polar_max": Key(float, math.pi, lambda v: 0 < v <= math.pi, "must lie in (0, pi]"),
    "family.avoid_center": Key(_floats, (0.55, 0.3, 0.2)),
    "family.avoid_radius": Key(float, 0.25, _pos, "must be > 0"),
    "family.support_radius": Key(float, 0.2, _pos, "must be > 0"),
    "family.apex_angles": Key(_floats, (1.2, 0.5)),
    "family.cone_aperture": Key(float, 0.1, _pos, "must be > 0"),
    "family.cone_count": Key(int, 19, _atleast1, "must be >= 1"),
    "family.path_steps": Key(int, 40, _atleast1, "must be >= 1"),
    "solver.lambda": Key(float, 1e-10, _nonneg, "must be >= 0"),
    "solver.iters": Key(int, 5000, _atleast1, "must be >= 1"),
    "solver.tol": Key(float, 1e-13, _pos, "must be > 0"),
    "solver.sigma_threshold": Key(float, 1e-6, _pos, "must be > 0"),
    "solver.duality_tol": Key(float, 1e-2, _pos, "must be > 0"),
    "solver.data_tol": Key(float, 1e-10, _pos, "must be > 0"),
    "solver.recon_tol": Key(float, 1e-3, _pos, "must be > 0"),
    "io.field": Key(str, ""),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: Mapping
    defaulted: tuple = field(default=(), compare=False)

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name: str) -> dict:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def replace(self, **updates):
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = v
        return ExperimentConfig(vals, self.defaulted)

    def serialize(self) -> str:
        lines = []
        current = None
        for key in SCHEMA:
            sec = key.split(".")[0] if "." in key else ""
            if sec != current and sec:
                lines.append("")
                lines.append(f"# {sec}")
            current = sec
            lines.append(f"{key} = {_fmt(self.values[key])}")
        return "\n".join(lines).lstrip("\n") + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()[:16]


def default_config() -> ExperimentConfig:
    return parse_config("")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem with its line."""
    errors = []
    invalid = set()
    seen: dict = {}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = lineno
        entry = SCHEMA[key]
        try:
            v = entry.kind(val)
        except ValueError:
            invalid.add(key)
            errors.append(f"line {lineno}: {key} expects {getattr(entry.kind, '__name__', 'value')}"
                          f", got {val!r}")
            continue
        if entry.choices and v not in entry.choices:
            invalid.add(key)
            errors.append(f"line {lineno}: {key} must be one of {', '.join(entry.choices)}, got {v!r}")
            continue
        if entry.check is not None and not entry.check(v):
            invalid.add(key)
            errors.append(f"line {lineno}: {key} {entry.rule}, got {val}")
            continue
        values[key] = v
    defaulted = tuple(k for k in SCHEMA if k not in values)
    for k in defaulted:
        values[k] = SCHEMA[k].default

    def where(k):
        return f"line {seen[k]}" if k in seen else "default"

    if values["domain.rho_ext"] <= values["domain.rho"] and not invalid & {"domain.rho",
                                                                           "domain.rho_ext"}:
        errors.append(f"domain.rho_ext ({where('domain.rho_ext')}) = {values['domain.rho_ext']} "
                      f"must exceed domain.rho ({where('domain.rho')}) = {values['domain.rho']}")
    if values["family.tilt_min"] >= values["family.tilt_max"]:
        errors.append(f"family.tilt_min ({where('family.tilt_min')}) must be below "
                      f"family.tilt_max ({where('family.tilt_max')})")
    if values["metric.kind"] == "conformal":
        cmin = 1 + min(0.0, values["metric.conformal_a"]) * values["domain.rho_ext"] ** 2
        if cmin <= 0:
            errors.append(f"metric.conformal_a ({where('metric.conformal_a')}) makes the "
                          f"conformal factor vanish inside the outer ball")
    n = values["domain.n"]
    if len(values["family.avoid_center"]) != n and "family.avoid_center" in seen:
        errors.append(f"family.avoid_center ({where('family.avoid_center')}) needs {n} coordinates")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values, defaulted)
