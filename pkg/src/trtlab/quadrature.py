"""Deterministic quadrature rules: Simpson weights and sphere/hemisphere node sets."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import lebedev_rule
from scipy.special import roots_jacobi

from .errors import ParameterError

_LEBEDEV_ORDERS = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 35, 41, 47,
                   53, 59, 65, 71, 77, 83, 89, 95, 101, 107, 113, 119, 125, 131)


def sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^{n-1}`` in ``R^n``."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights for ``m`` (even) intervals of width ``h``."""
    if m < 2 or m % 2:
        raise ParameterError(f"Simpson needs an even interval count >= 2, got {m}")
    w = np.full(m + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


def simpson_node_weight(k, m, h):
    """Vectorised Simpson weight of node ``k`` out of ``m`` intervals (0 past the end)."""
    k = np.asarray(k)
    w = np.where(k % 2 == 1, 4.0, 2.0)
    w = np.where((k == 0) | (k == m), 1.0, w)
    w = np.where(k > m, 0.0, w)
    return w * h / 3.0


def _jacobi01(count: int, beta: float):
    """Gauss rule on [0, 1] for the weight ``s^beta``."""
    y, w = roots_jacobi(count, 0.0, beta)
    return 0.5 * (y + 1), w * 0.5 ** (beta + 1)


@lru_cache(maxsize=None)
def _product_sphere(n: int, order: int):
    if n == 2:
        m = max(1, 2 * order)
        ang = 2 * np.pi * (np.arange(m) + 0.5) / m
        return (np.stack([np.cos(ang), np.sin(ang)], axis=-1),
                np.full(m, 2 * np.pi / m))
    # cos(polar) = s on [-1, 1] with weight (1 - s^2)^((n-3)/2)
    a = (n - 3) / 2
    s, ws = roots_jacobi(order, a, a)
    sub_x, sub_w = _product_sphere(n - 1, order)
    r = np.sqrt(1 - s ** 2)
    nodes = np.concatenate([np.column_stack([np.full(len(sub_x), si), ri * sub_x])
                            for si, ri in zip(s, r)])
    weights = np.concatenate([wi * sub_w for wi in ws])
    return nodes, weights


def sphere_rule(n: int, count: int):
    """Nodes ``(m, n)`` and weights on ``S^{n-1}`` with at least ``count`` nodes.

    Weights sum to the sphere area.  ``n == 3`` uses the smallest Lebedev
    rule with enough nodes; other dimensions use a Gauss-Jacobi product rule.
    """
    if count < 1:
        raise ParameterError("sphere node count must be >= 1")
    if n == 3:
        for order in _LEBEDEV_ORDERS:
            x, w = lebedev_rule(order)
            if x.shape[1] >= count:
                return np.ascontiguousarray(x.T), w
        return np.ascontiguousarray(x.T), w
    order = 1
    while True:
        x, w = _product_sphere(n, order)
        if len(w) >= count:
            return x.copy(), w.copy()
        order += 1


def sphere_rule_order(n: int, order: int):
    """Product rule on ``S^{n-1}`` with ``order`` polar nodes per level."""
    if order < 1:
        raise ParameterError("quadrature order must be >= 1")
    x, w = _product_sphere(n, order)
    return x.copy(), w.copy()


def hemisphere_cos_rule(n: int, order: int):
    """Inward-hemisphere rule with the cosine weight folded in.

    Returns ``(cos_a, sin_a, tangent_dirs, weights)``: the direction of node
    ``q`` is ``cos_a[q] * inward + sin_a[q] * tangent_dirs[q]`` (tangent
    directions live on ``S^{n-2}`` in ``R^{n-1}``), and
    ``sum(weights * F)`` approximates the integral of ``F * cos`` over the
    hemisphere.  ``n == 2`` uses the two tangent directions ``(+1, -1)``.
    """
    s, ws = _jacobi01(order, n - 2)
    if n == 2:
        sub_x, sub_w = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    else:
        sub_x, sub_w = sphere_rule_order(n - 1, order)
    sin_a = np.repeat(s, len(sub_w))
    cos_a = np.sqrt(1 - sin_a ** 2)
    tang = np.tile(sub_x, (len(s), 1))
    weights = np.outer(ws, sub_w).ravel()
    return cos_a, sin_a, tang, weights
