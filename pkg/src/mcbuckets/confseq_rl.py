"""Robbins-Lai confidence sequence for a Bernoulli parameter.

After ``n`` draws with ``S`` exceedances the interval is
``I_n = {p : (n+1) * b(n, p, S) > eps}`` where ``b`` is the binomial
pmf. The map ``p -> b(n, p, S)`` is unimodal with mode ``S/n``, so
containment of ``I_n`` in a bucket ``J`` reduces to the value and slope
of the pmf at the two ends of ``J``; no root finding is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import optimize

from .buckets import BucketSet, Interval, fit_width
from .errors import OverflowGuard

#: Largest sample count for which float arithmetic on counts stays exact.
MAX_COUNT = 2**53


@numba.njit(cache=True)
def _log_scaled_pmf(n, s, p, lc):
    # log((n+1) * b(n, p, s)) given lc = log((n+1) * C(n, s))
    if p == 0.0:
        return lc if s == 0 else -np.inf
    if p == 1.0:
        return lc if s == n else -np.inf
    return lc + s * math.log(p) + (n - s) * math.log1p(-p)


@numba.njit(cache=True)
def _log_coef(n, s):
    return math.log(n + 1.0) + math.lgamma(n + 1.0) - math.lgamma(s + 1.0) - math.lgamma(n - s + 1.0)


@numba.njit(cache=True)
def left_ok(n, s, log_eps, lo, lo_closed):
    """True if I_n has no point below ``lo`` (respecting closure)."""
    if lo == 0.0:
        return not (s == 0 and not lo_closed)
    if s / lo - (n - s) / (1.0 - lo) < 0.0:
        return False
    return _log_scaled_pmf(n, s, lo, _log_coef(n, s)) <= log_eps


@numba.njit(cache=True)
def right_ok(n, s, log_eps, hi, hi_closed):
    """True if I_n has no point above ``hi`` (respecting closure)."""
    if hi == 1.0:
        return not (s == n and not hi_closed)
    if s / hi - (n - s) / (1.0 - hi) > 0.0:
        return False
    return _log_scaled_pmf(n, s, hi, _log_coef(n, s)) <= log_eps


@numba.njit(cache=True)
def contained_kernel(n, s, log_eps, lo, hi, lo_closed, hi_closed):
    return left_ok(n, s, log_eps, lo, lo_closed) and right_ok(n, s, log_eps, hi, hi_closed)


@numba.njit(cache=True)
def advance_stop_ranges(n, log_eps, lo, hi, lo_closed, hi_closed, s1, s2):
    """Update per-bucket stopping ranges from ``n-1`` to ``n`` in place.

    For bucket ``k`` the counts ``s`` with ``I_n`` inside the bucket form
    the range ``s1[k] <= s <= s2[k]`` because ``left_ok`` is monotone
    false-to-true and ``right_ok`` true-to-false in ``s``. Each range is
    found by walking from its previous value, amortized O(1) per step.
    """
    for k in range(lo.shape[0]):
        x = min(s1[k], n + 1)
        if x > n or left_ok(n, x, log_eps, lo[k], lo_closed[k]):
            while x > 0 and left_ok(n, x - 1, log_eps, lo[k], lo_closed[k]):
                x -= 1
        else:
            while x <= n and not left_ok(n, x, log_eps, lo[k], lo_closed[k]):
                x += 1
        s1[k] = x
        y = min(s2[k], n)
        if y < 0 or right_ok(n, y, log_eps, hi[k], hi_closed[k]):
            while y < n and right_ok(n, y + 1, log_eps, hi[k], hi_closed[k]):
                y += 1
        else:
            while y >= 0 and not right_ok(n, y, log_eps, hi[k], hi_closed[k]):
                y -= 1
        s2[k] = y


def bucket_arrays(bset: BucketSet) -> tuple[np.ndarray, ...]:
    """Endpoint and closure arrays of ``bset`` in tie-break order."""
    order = bset.tie_break_order
    bs = [bset[i] for i in order]
    return (
        np.array([b.lo for b in bs], dtype=np.float64),
        np.array([b.hi for b in bs], dtype=np.float64),
        np.array([b.lo_closed for b in bs], dtype=np.bool_),
        np.array([b.hi_closed for b in bs], dtype=np.bool_),
        np.array(order, dtype=np.int64),
    )


@dataclass(frozen=True)
class RLState:
    """Counts after ``n`` draws together with the risk bound.

    Attributes:
        n: Number of draws.
        S: Number of exceedances among them.
        eps: Risk bound of the confidence sequence.
    """

    n: int = 0
    S: int = 0
    eps: float = 1e-3

    def __post_init__(self) -> None:
        if not 0 <= self.S <= self.n:
            raise ValueError(f"need 0 <= S <= n, got S={self.S}, n={self.n}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.n > MAX_COUNT:
            raise OverflowGuard(f"n={self.n} exceeds {MAX_COUNT}")


def rl_update(state: RLState, exceedances: int, batch: int) -> RLState:
    """Add a batch of ``batch`` draws containing ``exceedances`` hits."""
    if batch < 0 or not 0 <= exceedances <= batch:
        raise ValueError(f"invalid batch: {exceedances} exceedances in {batch} draws")
    if state.n + batch > MAX_COUNT:
        raise OverflowGuard(f"n={state.n + batch} exceeds {MAX_COUNT}")
    return RLState(state.n + batch, state.S + exceedances, state.eps)


def rl_contained(state: RLState, bucket: Interval) -> bool:
    """Decide ``I_n ⊆ bucket`` exactly from pmf values and slopes."""
    return bool(
        contained_kernel(
            state.n,
            state.S,
            math.log(state.eps),
            float(bucket.lo),
            float(bucket.hi),
            bool(bucket.lo_closed),
            bool(bucket.hi_closed),
        )
    )


def rl_select(state: RLState, bset: BucketSet) -> int | None:
    """Index of the preferred bucket containing ``I_n``, or None."""
    for i in bset.tie_break_order:
        if rl_contained(state, bset[i]):
            return i
    return None


def _log_excess(n: int, s: int, eps: float):
    lc = math.log(n + 1) + math.lgamma(n + 1) - math.lgamma(s + 1) - math.lgamma(n - s + 1)
    le = math.log(eps)
    return lambda p: lc + s * math.log(p) + (n - s) * math.log1p(-p) - le


def rl_interval(state: RLState) -> Interval:
    """The interval ``I_n`` with its open ends.

    The one-root cases ``S = 0`` and ``S = n`` have closed forms. Otherwise
    the roots on both sides of the mode are bracketed and refined to
    1e-13 absolute tolerance.
    """
    n, s, eps = state.n, state.S, state.eps
    if n == 0:
        return Interval(0.0, 1.0, True, True)
    if s == 0:
        return Interval(0.0, -math.expm1(math.log(eps / (n + 1)) / n), True, False)
    if s == n:
        return Interval(math.exp(math.log(eps / (n + 1)) / n), 1.0, False, True)
    f = _log_excess(n, s, eps)
    mode = s / n
    lo = optimize.brentq(f, 1e-300, mode, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    hi = optimize.brentq(f, mode, 1.0 - 1e-16, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    return Interval(lo, hi, False, False)


def rl_length_bound(n: int, eps: float) -> float:
    """Upper bound ``sqrt(2/n * log((n+1)/eps))`` on the length of ``I_n``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return math.sqrt(2.0 / n * math.log((n + 1) / eps))


def rl_stop_bound(bset: BucketSet, eps: float) -> int | None:
    """A sample count by which the Robbins-Lai rule has surely stopped.

    Smallest ``n`` with :func:`rl_length_bound` below
    :func:`~mcbuckets.buckets.fit_width`; None if the set has no overlap.
    """
    c = fit_width(bset)
    if c <= 0.0:
        return None
    hi = 1
    while rl_length_bound(hi, eps) >= c:
        hi *= 2
    lo = hi // 2
    # the bound decreases in n from n = 1 on
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rl_length_bound(mid, eps) < c:
            hi = mid
        else:
            lo = mid
    return hi
