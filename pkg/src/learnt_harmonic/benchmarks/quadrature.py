"""Tensor-product Gauss-Legendre integration of ln-densities over a box."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp


class QuadratureError(RuntimeError):
    """Refinement did not converge within the allowed number of levels."""


@dataclass(frozen=True)
class QuadratureResult:
    ln_z: float
    panels: int
    delta: float
    history: tuple[float, ...]


def _axis_rule(lo: float, hi: float, panels: int, order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, np.log(weights)


def tensor_ln_integral(
    ln_fn: Callable[[np.ndarray], np.ndarray],
    bounds,
    panels: int,
    order: int = 8,
    chunk: int = 1 << 20,
) -> float:
    """ln of the composite Gauss-Legendre integral of ``exp(ln_fn)`` on a box.

    ``ln_fn`` maps an ``(n, d)`` array to ``(n,)`` values; the sum is
    accumulated in log space chunk by chunk so nothing overflows.
    """
    bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    rules = [_axis_rule(lo, hi, panels, order) for lo, hi in bounds]
    d = len(rules)
    if d == 1:
        nodes, lw = rules[0]
        v = np.asarray(ln_fn(nodes[:, None]), dtype=np.float64) + lw
        return float(logsumexp(v))
    # outer axes iterated, the last two vectorised as a plane
    gx, gy = np.meshgrid(rules[-2][0], rules[-1][0], indexing="ij")
    plane = np.column_stack([gx.ravel(), gy.ravel()])
    plane_lw = (rules[-2][1][:, None] + rules[-1][1][None, :]).ravel()
    parts = []
    outer = [list(zip(*r)) for r in rules[:-2]]
    for combo in itertools.product(*outer) if outer else [()]:
        prefix = np.array([c[0] for c in combo])
        prefix_lw = float(sum(c[1] for c in combo))
        for start in range(0, plane.shape[0], chunk):
            pts = plane[start : start + chunk]
            X = np.column_stack([np.broadcast_to(prefix, (pts.shape[0], prefix.size)), pts]) if prefix.size else pts
            v = np.asarray(ln_fn(X), dtype=np.float64) + plane_lw[start : start + chunk] + prefix_lw
            parts.append(logsumexp(v))
    return float(logsumexp(parts))


def quadrature_ln_z(
    ln_fn: Callable[[np.ndarray], np.ndarray],
    bounds,
    *,
    order: int = 8,
    start_panels: int = 16,
    tol: float = 1e-4,
    max_panels: int = 1024,
    max_points: int = 64_000_000,
) -> QuadratureResult:
    """Integrate ``exp(ln_fn)`` over ``bounds`` with dyadic panel refinement.

    Panels per axis double until successive estimates of ``ln z`` differ by
    less than ``tol``.

    Raises:
        QuadratureError: if ``max_panels`` or ``max_points`` is reached first.
    """
    bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("quadrature needs finite, non-empty bounds")
    d = bounds.shape[0]
    panels = start_panels
    history = [tensor_ln_integral(ln_fn, bounds, panels, order)]
    while True:
        panels *= 2
        if panels > max_panels or (panels * order) ** d > max_points:
            raise QuadratureError(
                f"no convergence to {tol} by {panels // 2} panels per axis: history {history}"
            )
        history.append(tensor_ln_integral(ln_fn, bounds, panels, order))
        delta = abs(history[-1] - history[-2])
        if not math.isfinite(history[-1]):
            raise QuadratureError("integral is not finite")
        if delta < tol:
            return QuadratureResult(history[-1], panels, delta, tuple(history))
