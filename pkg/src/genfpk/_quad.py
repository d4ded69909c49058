"""Gauss-Legendre quadrature helpers shared by coefficient integrals,
assembly and oracles."""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Tuple

import numpy as np

__all__ = ["gl_rule", "panel_rule", "integrate_panels", "trapz"]

# numpy renamed trapz to trapezoid in 2.0
trapz = getattr(np, "trapezoid", None) or np.trapz


@lru_cache(maxsize=None)
def gl_rule(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the order-point Gauss-Legendre rule on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_rule(a: float, b: float, cell_width: float, order: int):
    """Composite Gauss-Legendre nodes/weights on [a, b] with panels no wider
    than ``cell_width``."""
    if b <= a:
        return np.empty(0), np.empty(0)
    n_cells = max(1, math.ceil((b - a) / cell_width))
    edges = np.linspace(a, b, n_cells + 1)
    x, w = gl_rule(order)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def integrate_panels(f, a: float, b: float, cell_width: float, order: int = 8) -> float:
    """Integrate a vectorized integrand over [a, b] by composite GL."""
    nodes, weights = panel_rule(a, b, cell_width, order)
    if nodes.size == 0:
        return 0.0
    return float(np.dot(weights, f(nodes)))
