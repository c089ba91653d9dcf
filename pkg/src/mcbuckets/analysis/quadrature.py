"""Adaptive Gauss-Legendre integration against p-value densities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..buckets import BucketSet
from ..errors import QuadratureNotConverged
from .density import DensitySpec
from .effort import StoppingPredicate
from .lower_bounds import LowerBoundConfig, lower_bound_improved

ORDER = 8
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(ORDER)


@dataclass(frozen=True)
class QuadratureResult:
    """Integral estimate.

    Attributes:
        value: Estimated integral.
        error: Sum over accepted panels of ``|coarse - refined|``.
        n_evals: Number of distinct integrand evaluations.
        n_panels: Number of accepted panels.
    """

    value: float
    error: float
    n_evals: int
    n_panels: int


class MemoFunction:
    """Vectorised function with a per-point cache.

    Integrating one integrand against several densities revisits the same
    nodes, so values are kept across calls.
    """

    def __init__(self, f: Callable[[np.ndarray], np.ndarray]):
        self.f = f
        self.cache: dict[float, float] = {}

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        missing = np.array([v for v in dict.fromkeys(flat.tolist()) if v not in self.cache])
        if len(missing):
            for v, y in zip(missing.tolist(), np.asarray(self.f(missing), dtype=float).tolist()):
                self.cache[v] = y
        return np.array([self.cache[v] for v in flat.tolist()]).reshape(x.shape)


def base_panels(breaks, n_geometric: int = 24, smallest: float = 1e-12) -> np.ndarray:
    """Panel edges through every break point, geometric toward 0."""
    edges = np.unique(np.clip(np.concatenate([[0.0, 1.0], np.asarray(breaks, dtype=float)]), 0.0, 1.0))
    first = edges[1]
    geo = np.geomspace(first * smallest, first, n_geometric + 1)[:-1]
    return np.unique(np.concatenate([edges, geo]))


def _gl(f, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    mid, half = (a + b) / 2, (b - a) / 2
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    return half * (f(x) @ _WEIGHTS)


def adaptive_integrate(
    f: Callable[[np.ndarray], np.ndarray],
    edges: np.ndarray,
    rtol: float = 1e-4,
    max_depth: int = 40,
) -> QuadratureResult:
    """Integrate a vectorised ``f`` over ``[edges[0], edges[-1]]``.

    Every panel is compared with the sum over its two halves. A panel is
    accepted when the difference is below ``rtol`` relative to the panel
    or below ``rtol * 1e-3`` of the running total; otherwise both halves
    are refined. All pending panels are evaluated in one vectorised call.

    Args:
        f: Function mapping an array of points to an array of values.
        edges: Sorted initial panel edges.
        rtol: Relative tolerance.
        max_depth: Bisection limit per initial panel.

    Returns:
        The estimate with its error.
    """
    evals = 0
    a, b = np.asarray(edges[:-1], float), np.asarray(edges[1:], float)
    coarse = _gl(f, a, b)
    evals += coarse.size * ORDER
    scale = abs(float(np.sum(coarse)))
    value = error = 0.0
    n_panels = 0
    for depth in range(max_depth + 1):
        if len(a) == 0:
            break
        m = (a + b) / 2
        halves = _gl(f, np.concatenate([a, m]), np.concatenate([m, b]))
        evals += halves.size * ORDER
        left, right = halves[: len(a)], halves[len(a) :]
        fine = left + right
        diff = np.abs(fine - coarse)
        scale = max(scale, abs(value + float(np.sum(fine))))
        ok = (diff <= rtol * np.abs(fine)) | (diff <= rtol * 1e-3 * scale) | (depth == max_depth)
        value += float(np.sum(fine[ok]))
        error += float(np.sum(diff[ok]))
        n_panels += int(np.sum(ok))
        keep = ~ok
        a, b = np.concatenate([a[keep], m[keep]]), np.concatenate([m[keep], b[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    return QuadratureResult(value, error, evals, n_panels)


def _against(g, density: DensitySpec, breaks, rtol: float) -> QuadratureResult:
    edges = base_panels(list(breaks) + density.breakpoints)
    res = adaptive_integrate(lambda x: g(x) * density.pdf(x), edges, rtol=rtol)
    if not np.isfinite(res.value) or res.error > 0.01 * abs(res.value):
        raise QuadratureNotConverged(res.value, res.error)
    return res


def effort_curve(predicate: StoppingPredicate) -> MemoFunction:
    """Cached expected effort as a function of ``p``."""
    table = predicate.exit_table
    return MemoFunction(lambda ps: table.effort(ps))


def lower_bound_curve(bset: BucketSet, config: LowerBoundConfig) -> MemoFunction:
    """Cached improved lower bound as a function of ``p``."""
    return MemoFunction(lambda ps: np.array([lower_bound_improved(p, bset, config) for p in ps]))


def integrated_effort(
    density: DensitySpec,
    predicate: StoppingPredicate,
    rtol: float = 1e-4,
    curve: MemoFunction | None = None,
) -> QuadratureResult:
    """Expected effort averaged over a p-value density.

    Panels are split at the bucket boundaries and the density break points
    and refined geometrically toward 0.

    Args:
        density: Distribution of the true p-value.
        predicate: Stopping rule.
        rtol: Relative tolerance per panel.
        curve: Optional cached effort curve to share between densities.

    Raises:
        QuadratureNotConverged: If the error estimate exceeds 1% of the value.
    """
    g = curve if curve is not None else effort_curve(predicate)
    return _against(g, density, predicate.bset.boundary_points, rtol)


def integrated_lower_bound(
    density: DensitySpec,
    bset: BucketSet,
    config: LowerBoundConfig,
    rtol: float = 1e-4,
    curve: MemoFunction | None = None,
) -> QuadratureResult:
    """Improved lower bound averaged over a p-value density.

    Raises:
        QuadratureNotConverged: If the error estimate exceeds 1% of the value.
    """
    g = curve if curve is not None else lower_bound_curve(bset, config)
    return _against(g, density, bset.boundary_points, rtol)
