"""Wald-type lower bounds on the expected number of samples.

Any algorithm that reports a bucket with risk at most ``eps`` acts as a
sequential test between the true ``p`` and every ``q`` outside the union
of buckets containing ``p``. Wald's inequality bounds the expected sample
size of such a test. The improved bound also uses the split of decisions
between two overlapping buckets, ``eta`` being the probability of
reporting the first one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from ..buckets import Bucket, BucketSet, Interval
from ..errors import DegenerateAlternative


@dataclass(frozen=True)
class LowerBoundConfig:
    """Settings for :func:`lower_bound_improved`.

    Attributes:
        eps: Risk bound of the algorithm.
        delta: Width of the ``eta`` grid. The second test is evaluated at
            ``eta + delta`` so that the grid minimum stays a valid bound.
    """

    eps: float
    delta: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if not 0.0 < self.delta <= 0.1:
            raise ValueError("delta must lie in (0, 0.1]")


def bernoulli_kl(a, b) -> np.ndarray:
    """``KL(Bernoulli(a) || Bernoulli(b))`` with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(a, a) - special.xlogy(a, b) + special.xlogy(1 - a, 1 - a) - special.xlogy(1 - a, 1 - b)
    return out


def _wald(p0, p1, type1, type2) -> np.ndarray:
    """Vectorised bound; type-1 values outside [0, 1] give 0."""
    p0, p1, type1, type2 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p0, p1, type1, type2)))
    valid = (type1 >= 0.0) & (type1 <= 1.0)
    t1 = np.clip(type1, 0.0, 1.0)
    num = bernoulli_kl(1.0 - t1, type2)
    den = bernoulli_kl(p0, p1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    # den = 0 only when p0 = p1; a vanishing numerator still means no bound
    ratio = np.where(den == 0.0, np.where(num > 1e-12, np.inf, 0.0), ratio)
    return np.where(valid & (num > 0.0), ratio, 0.0)


def wald_bound(p0: float, p1: float, type1: float, type2: float) -> float:
    """Wald's lower bound on the expected sample size under ``p0``.

    A test of ``Bernoulli(p0)`` against ``Bernoulli(p1)`` with error
    probabilities ``type1`` (rejecting ``p0`` when true) and ``type2``
    needs on average at least
    ``KL(Bern(1 - type1) || Bern(type2)) / KL(Bern(p0) || Bern(p1))``
    samples when ``p0`` holds.

    Args:
        p0: Success probability under the null.
        p1: Success probability under the alternative.
        type1: Type-I error probability.
        type2: Type-II error probability.

    Returns:
        The bound, clipped below at 0.

    Raises:
        DegenerateAlternative: If ``p0 == p1``.
    """
    if p0 == p1:
        raise DegenerateAlternative(f"p0 and p1 are both {p0}")
    for x in (p0, p1, type1, type2):
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"{x} is not a probability")
    return float(_wald(p0, p1, type1, type2))


def _hull(buckets: list[Bucket]) -> Interval:
    lo = min(b.lo for b in buckets)
    hi = max(b.hi for b in buckets)
    lo_closed = any(b.lo_closed for b in buckets if b.lo == lo)
    hi_closed = any(b.hi_closed for b in buckets if b.hi == hi)
    return Interval(lo, hi, lo_closed, hi_closed)


def _outside_points(iv: Interval) -> list[float]:
    """Endpoints of ``iv`` that are limits of points outside it."""
    pts = []
    if iv.lo > 0.0 or not iv.lo_closed:
        pts.append(iv.lo)
    if iv.hi < 1.0 or not iv.hi_closed:
        pts.append(iv.hi)
    return pts


def _side_bound(p: float, iv: Interval, type1, type2: float) -> np.ndarray:
    """``max over q outside iv`` of the Wald bound, vectorised in ``type1``."""
    type1 = np.asarray(type1, dtype=float)
    best = np.zeros_like(type1)
    for q in _outside_points(iv):
        if q != p:
            best = np.maximum(best, _wald(p, q, type1, type2))
    return best


def lower_bound_basic(p: float, bset: BucketSet, eps: float) -> float:
    """Lower bound from testing ``p`` against the nearest excluded values.

    Args:
        p: True p-value.
        bset: Bucket set.
        eps: Risk bound.

    Returns:
        ``max over q outside J~`` of ``wald_bound(p, q, eps, eps)`` where
        ``J~`` is the union of the buckets containing ``p``; 0 when that
        union is [0, 1].
    """
    hull = _hull([bset[i] for i in bset.containing(p)])
    return float(_side_bound(p, hull, eps, eps))


def lower_bound_improved(p: float, bset: BucketSet, config: LowerBoundConfig) -> float:
    """Lower bound that accounts for the split between two buckets.

    When ``p`` lies in exactly two buckets ``J1`` and ``J2``, let ``eta``
    be the probability of reporting ``J1``. Treating the algorithm as a
    test of ``p`` against values outside ``J1`` gives type-I error
    ``1 - eta``. Against values outside ``J2`` it gives ``eta + eps``. The
    bound is the minimum over ``eta`` of the larger of the two. Both
    labellings of the pair are tried and the larger result is kept.

    Args:
        p: True p-value.
        bset: Bucket set.
        config: Risk bound and ``eta`` grid width.

    Returns:
        A value at least :func:`lower_bound_basic`.
    """
    eps, delta = config.eps, config.delta
    basic = lower_bound_basic(p, bset, eps)
    idx = bset.containing(p)
    if len(idx) != 2:
        return basic
    eta = np.arange(0.0, 1.0 + delta / 2, delta)
    pair = [bset[i] for i in idx]
    best = 0.0
    for j1, j2 in (pair, pair[::-1]):
        b1 = _side_bound(p, j1, 1.0 - eta, eps)
        b2 = _side_bound(p, j2, eta + delta + eps, eps)
        best = max(best, float(np.min(np.maximum(b1, b2))))
    return max(basic, best)
