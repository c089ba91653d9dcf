"""Simctest stopping boundaries and the confidence interval they induce.

For a threshold ``alpha`` the boundaries ``(L_n, U_n)`` are built so that a
walk with exceedance probability exactly ``alpha`` crosses ``U`` (or ``L``)
before time ``n`` with probability at most ``eps_n``. Crossing ``U`` shows
``p > alpha``; crossing ``L`` shows ``p <= alpha``. Intersecting these
statements over all bucket boundaries gives an interval with joint coverage
``1 - 2*rho`` provided the boundaries are ordered across thresholds.

Boundaries may be built on every sample or on an arbitrary checkpoint grid,
for example the cumulative sizes of a geometric batch schedule. The grid
version advances the sub-probability vector by a binomial convolution.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from scipy import signal, stats

from .buckets import BucketSet, Interval
from .errors import (
    InconsistentDecisions,
    InvalidConfig,
    NMaxTooSmall,
    NotClosed,
    NotFound,
)

UNDECIDED, BELOW, ABOVE = 0, -1, 1


@dataclass(frozen=True)
class SpendingSequence:
    """Cumulative error budget ``eps_n`` spent up to time ``n``.

    The default kind is ``rho * n / (n + k)``. A custom kind takes a table of
    ``eps_1, eps_2, ...`` and holds its last value beyond the table.
    """

    rho: float
    k: float = 1000.0
    table: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.table is not None:
            t = np.asarray(self.table, dtype=float)
            if np.any(np.diff(t) < 0) or np.any(t < 0) or np.any(t > self.rho):
                raise ValueError("custom spending must be non-decreasing within [0, rho]")
        elif self.k <= 0:
            raise ValueError("k must be positive")

    @property
    def kind(self) -> str:
        return "default" if self.table is None else "custom"

    def __call__(self, n):
        n_arr = np.asarray(n, dtype=float)
        if self.table is None:
            out = self.rho * n_arr / (n_arr + self.k)
        else:
            t = np.concatenate([[0.0], np.asarray(self.table, dtype=float)])
            idx = np.minimum(n_arr.astype(np.int64), len(t) - 1)
            out = t[idx]
        return out if np.ndim(n) else float(out)


def spending_eval(spending: SpendingSequence, n: int) -> float:
    """Budget ``eps_n`` spent up to time ``n``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return float(spending(n))


@dataclass(frozen=True, eq=False)
class BoundaryTable:
    """Boundaries of one threshold on a checkpoint grid.

    Row ``i`` refers to the sample count ``n[i]``. ``spent_lower[i]`` and
    ``spent_upper[i]`` are the probabilities under ``p = alpha`` of having
    crossed the lower or upper boundary at some checkpoint up to and
    including ``n[i]``.
    """

    alpha: float
    rho: float
    n: np.ndarray
    L: np.ndarray
    U: np.ndarray
    eps: np.ndarray
    spent_lower: np.ndarray
    spent_upper: np.ndarray

    @property
    def n_max(self) -> int:
        return int(self.n[-1]) if len(self.n) else 0

    @property
    def per_sample(self) -> bool:
        return bool(len(self.n) == self.n_max and (len(self.n) == 0 or self.n[0] == 1))

    def index(self, n: int) -> int:
        """Row of sample count ``n``."""
        if n > self.n_max:
            raise NMaxTooSmall(f"table for alpha={self.alpha} ends at n={self.n_max}, asked {n}")
        i = n - 1 if self.per_sample else int(np.searchsorted(self.n, n))
        if i < 0 or self.n[i] != n:
            raise KeyError(f"n={n} is not a checkpoint of the table")
        return i

    def bounds(self, n: int) -> tuple[int, int]:
        i = self.index(n)
        return int(self.L[i]), int(self.U[i])

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "L_n", "U_n", "eps_n", "spent_lower", "spent_upper"])
        for row in zip(self.n, self.L, self.U, self.eps, self.spent_lower, self.spent_upper):
            n, lo, hi, e, sl, su = row
            w.writerow([int(n), int(lo), int(hi), repr(float(e)), repr(float(sl)), repr(float(su))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path, alpha: float, rho: float) -> BoundaryTable:
        text = str(source)
        if not text.startswith("n,"):
            text = Path(source).read_text()
        rows = list(csv.DictReader(io.StringIO(text)))
        col = lambda key, dt: np.array([dt(r[key]) for r in rows], dtype=dt)  # noqa: E731
        return cls(
            alpha,
            rho,
            col("n", np.int64),
            col("L_n", np.int64),
            col("U_n", np.int64),
            col("eps_n", float),
            col("spent_lower", float),
            col("spent_upper", float),
        )


@numba.njit(cache=True)
def _per_sample_kernel(alpha, eps, n_max):
    # eps[n] is the budget at time n, eps[0] unused
    L = np.empty(n_max, np.int64)
    U = np.empty(n_max, np.int64)
    spl = np.empty(n_max)
    spu = np.empty(n_max)
    cap = 64
    w = np.zeros(cap)
    w[0] = 1.0
    base = 0
    width = 1
    sum_l = 0.0
    comp_l = 0.0
    sum_u = 0.0
    comp_u = 0.0
    q = 1.0 - alpha
    for n in range(1, n_max + 1):
        if width + 1 > cap:
            w2 = np.zeros(cap * 2)
            w2[:width] = w[:width]
            w = w2
            cap *= 2
        w[width] = 0.0
        for i in range(width, 0, -1):
            w[i] = w[i] * q + w[i - 1] * alpha
        w[0] = w[0] * q
        width += 1
        e = eps[n]
        if n == 1:
            u = 2
            lo = -1
        else:
            tail = 0.0
            u = base + width
            for i in range(width - 1, -1, -1):
                t2 = tail + w[i]
                if t2 + sum_u <= e:
                    tail = t2
                    u = base + i
                else:
                    break
            if u < 1:
                u = 1
            head = 0.0
            lo = base - 1
            for i in range(width):
                h2 = head + w[i]
                if h2 + sum_l <= e:
                    head = h2
                    lo = base + i
                else:
                    break
        i_lo = lo - base + 1
        i_hi = u - base - 1
        # compensated accumulation of the removed tails
        for i in range(0, max(i_lo, 0)):
            y = w[i] - comp_l
            t = sum_l + y
            comp_l = (t - sum_l) - y
            sum_l = t
        for i in range(width - 1, max(i_hi, -1), -1):
            y = w[i] - comp_u
            t = sum_u + y
            comp_u = (t - sum_u) - y
            sum_u = t
        nw = i_hi - i_lo + 1
        for i in range(nw):
            w[i] = w[i_lo + i]
        base = lo + 1
        width = nw
        L[n - 1] = lo
        U[n - 1] = u
        spl[n - 1] = sum_l
        spu[n - 1] = sum_u
    return L, U, spl, spu


class _GridRecursion:
    """Boundary recursion for one threshold on an arbitrary checkpoint grid."""

    def __init__(self, alpha: float, spending: SpendingSequence):
        self.alpha = alpha
        self.spending = spending
        self.w = np.ones(1)
        self.base = 0
        self.n = 0
        self.sum_l = 0.0
        self.sum_u = 0.0
        self._removed_l: list[float] = []
        self._removed_u: list[float] = []
        self.rows: list[tuple] = []

    def _kernel(self, batch: int) -> tuple[int, np.ndarray]:
        a = self.alpha
        mu = batch * a
        sd = math.sqrt(batch * a * (1 - a))
        k0 = max(0, int(mu - 40 * sd) - 5)
        k1 = min(batch, int(mu + 40 * sd) + 6)
        ks = np.arange(k0, k1 + 1)
        return k0, stats.binom.pmf(ks, batch, a)

    def step(self, batch: int) -> tuple[int, int]:
        if batch == 1:
            # same operation order as the per-sample kernel
            k0 = 0
            w = np.append(self.w * (1.0 - self.alpha), 0.0)
            w[1:] += self.w * self.alpha
        else:
            k0, ker = self._kernel(batch)
            w = signal.convolve(self.w, ker, method="auto")
            np.maximum(w, 0.0, out=w)
        self.base += k0
        self.n += batch
        n = self.n
        e = float(self.spending(n))
        if n == 1:
            lo, u = -1, 2
        else:
            tail = np.cumsum(w[::-1])[::-1] + self.sum_u
            ok = np.nonzero(tail > e)[0]
            u = self.base + (ok[-1] + 1 if len(ok) else 0)
            u = max(u, 1)
            head = np.cumsum(w) + self.sum_l
            bad = np.nonzero(head > e)[0]
            first_bad = bad[0] if len(bad) else len(w)
            lo = self.base + first_bad - 1
        i_lo = max(lo - self.base + 1, 0)
        i_hi = min(u - self.base - 1, len(w) - 1)
        self._removed_l.append(float(np.sum(w[:i_lo])) if i_lo > 0 else 0.0)
        self._removed_u.append(float(np.sum(w[i_hi + 1 :])) if i_hi + 1 < len(w) else 0.0)
        self.sum_l = math.fsum(self._removed_l)
        self.sum_u = math.fsum(self._removed_u)
        if i_hi < i_lo:
            self.w = np.zeros(0)
        else:
            self.w = w[i_lo : i_hi + 1].copy()
        self.base = lo + 1
        self.rows.append((n, lo, u, e, self.sum_l, self.sum_u))
        return lo, u

    def table(self, rho: float) -> BoundaryTable:
        if not self.rows:
            arr = [np.zeros(0, np.int64)] * 3 + [np.zeros(0)] * 3
        else:
            cols = list(zip(*self.rows))
            arr = [np.array(cols[i], dtype=np.int64) for i in range(3)]
            arr += [np.array(cols[i], dtype=float) for i in range(3, 6)]
        return BoundaryTable(self.alpha, rho, *arr)


def build_boundaries(
    alpha: float,
    spending: SpendingSequence,
    n_max: int,
    grid: Sequence[int] | None = None,
) -> BoundaryTable:
    """Simctest boundaries for threshold ``alpha``.

    Args:
        alpha: Threshold in (0, 1).
        spending: Error budget per side.
        n_max: Last sample count to cover.
        grid: Increasing checkpoint sample counts. Defaults to every sample
            ``1..n_max``.

    Returns:
        The boundary table. At every checkpoint ``U_n`` is the smallest
        ``j >= 1`` and ``L_n`` the largest ``j`` such that the probability of
        crossing the respective boundary by time ``n`` stays within
        ``eps_n``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if grid is None:
        eps = np.asarray(spending(np.arange(n_max + 1)), dtype=float)
        L, U, spl, spu = _per_sample_kernel(float(alpha), eps, int(n_max))
        ns = np.arange(1, n_max + 1, dtype=np.int64)
        return BoundaryTable(alpha, spending.rho, ns, L, U, eps[1:].copy(), spl, spu)
    rec = _GridRecursion(alpha, spending)
    prev = 0
    for n in grid:
        if n > n_max:
            break
        if n <= prev:
            raise ValueError("grid must be strictly increasing")
        rec.step(int(n) - prev)
        prev = int(n)
    return rec.table(spending.rho)


def check_monotone(tables: Sequence[BoundaryTable], N: int) -> bool:
    """True if boundaries are ordered across adjacent thresholds for ``n < N``.

    Rows are compared where both tables are defined.
    """
    ts = list(tables)
    if len({t.rho for t in ts}) > 1:
        raise ValueError("tables must share the same rho")
    for a, b in zip(ts[:-1], ts[1:]):
        if a.alpha > b.alpha:
            raise ValueError("tables must be sorted by alpha")
        ns, ia, ib = np.intersect1d(a.n, b.n, return_indices=True)
        keep = ns < N
        ia, ib = ia[keep], ib[keep]
        if np.any(a.L[ia] > b.L[ib]) or np.any(a.U[ia] > b.U[ib]):
            return False
    return True


def compute_n0(alpha: float, alpha_prime: float, spending: SpendingSequence) -> int:
    """Smallest ``n0`` from which the two thresholds' boundaries separate.

    Scans ``g(n) = 2 * (Delta_n + 1) / n`` with
    ``Delta_n = sqrt(-n * log(eps_n - eps_{n-1}) / 2)`` upward from 2 and
    returns the first ``n0`` with ``g(n) <= alpha_prime - alpha`` on the
    whole scanned range ``[n0, 10 * n0]``. For the default spending ``g`` is
    eventually decreasing, so the condition persists beyond.

    Raises:
        ValueError: If ``alpha >= alpha_prime`` or ``rho > 1/4``.
        NotFound: If no ``n0 <= 1e8`` qualifies.
    """
    if not alpha < alpha_prime:
        raise ValueError("need alpha < alpha_prime")
    if spending.rho > 0.25:
        raise ValueError("rho must not exceed 1/4")
    gap = alpha_prime - alpha
    limit = 10**8
    chunk = 1 << 20
    start = 2
    cand = 2
    while True:
        ns = np.arange(start, start + chunk, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.asarray(spending(ns)) - np.asarray(spending(ns - 1))
            delta = np.sqrt(-ns * np.log(d) / 2)
            g = 2 * (delta + 1) / ns
        bad = np.nonzero(~(g <= gap))[0]
        if len(bad):
            cand = int(ns[bad[-1]]) + 1
        if cand > limit:
            raise NotFound(f"no n0 <= {limit} separates {alpha} and {alpha_prime}")
        start += chunk
        if start > 10 * cand:
            return cand


# --- joint state across thresholds --------------------------------------


def decision_table(bset: BucketSet) -> np.ndarray:
    """Bucket chosen in each decision mode, -1 if none contains the interval.

    Mode ``(a, b)`` means the ``a`` smallest thresholds were crossed
    upward and the ``b`` largest downward, giving the interval
    ``(alpha_{a-1}, alpha_{m-b}]`` with ``[0`` when ``a = 0`` and ``1]``
    when ``b = 0``.
    """
    th = bset.boundary_points
    m = len(th)
    dec = -np.ones((m + 1, m + 1), dtype=np.int64)
    for a in range(m + 1):
        for b in range(m + 1 - a):
            k = bset.select(mode_interval(th, a, b))
            if k is not None:
                dec[a, b] = k
    return dec


def mode_interval(thresholds: Sequence[float], a: int, b: int) -> Interval:
    m = len(thresholds)
    lo = 0.0 if a == 0 else float(thresholds[a - 1])
    hi = 1.0 if b == 0 else float(thresholds[m - b])
    return Interval(lo, hi, a == 0, True)


@dataclass(frozen=True)
class SimctestState:
    """Counts and per-threshold decisions.

    Attributes:
        n: Number of draws.
        S: Number of exceedances.
        status: Per threshold ``-1`` (below), ``0`` (undecided) or ``1`` (above).
        hit_time: Sample count at which each threshold was decided, 0 if not.
    """

    n: int
    S: int
    status: tuple[int, ...]
    hit_time: tuple[int, ...]

    @classmethod
    def initial(cls, m: int) -> SimctestState:
        return cls(0, 0, (UNDECIDED,) * m, (0,) * m)


def simctest_update(state: SimctestState, tables: Sequence[BoundaryTable], exceedances: int, batch: int) -> SimctestState:
    """Add a batch and record boundary crossings at the new checkpoint."""
    if batch < 0 or not 0 <= exceedances <= batch:
        raise ValueError(f"invalid batch: {exceedances} exceedances in {batch} draws")
    n = state.n + batch
    S = state.S + exceedances
    status = list(state.status)
    times = list(state.hit_time)
    for j, tab in enumerate(tables):
        if status[j] != UNDECIDED:
            continue
        lo, hi = tab.bounds(n)
        if S >= hi:
            status[j], times[j] = ABOVE, n
        elif S <= lo:
            status[j], times[j] = BELOW, n
    return SimctestState(n, S, tuple(status), tuple(times))


def simctest_interval(state: SimctestState, thresholds: Sequence[float]) -> Interval:
    """Intersection of the per-threshold intervals.

    A crossing above ``alpha`` gives ``(alpha, 1]``; below gives ``[0, alpha]``.

    Raises:
        InconsistentDecisions: If some threshold decided above exceeds or
            equals one decided below.
    """
    above = [a for a, s in zip(thresholds, state.status) if s == ABOVE]
    below = [a for a, s in zip(thresholds, state.status) if s == BELOW]
    lo = max(above) if above else 0.0
    hi = min(below) if below else 1.0
    if above and below and lo >= hi:
        raise InconsistentDecisions(f"above {lo} but below {hi}")
    return Interval(float(lo), float(hi), not above, True)


# --- exact sweep over (n, s, mode) ---------------------------------------


@numba.njit(cache=True)
def sweep_kernel(L, U, dec, n_buckets, N, W, p, urn, structural, trim, record):
    """Forward pass over alive states ``(n, s, mode)`` up to ``N``.

    ``L[j, n]``, ``U[j, n]`` hold the boundaries of threshold ``j`` at
    time ``n``. Transition weights are ``(1-p, p)`` or, with ``urn``, the
    path-counting weights ``((n-s)/n, s/n)`` under which the value at
    ``(n, s)`` is the fraction of the ``C(n, s)`` paths still alive. With
    ``structural`` every reachable state carries value 1.

    Returns records of stopping mass (if ``record``), the effort and
    per-bucket stopping mass, the mass left alive at the end, the first
    ``n`` with no alive state (-1 if none up to ``N``), the final alive
    states and the dropped mass below ``trim``.
    """
    m = L.shape[0]
    mid = -np.ones((m + 1, m + 1), np.int64)
    na = 0
    for a in range(m + 1):
        for b in range(m + 1 - a):
            if dec[a, b] < 0:
                mid[a, b] = na
                na += 1
    ma = np.empty(na, np.int64)
    mb = np.empty(na, np.int64)
    for a in range(m + 1):
        for b in range(m + 1 - a):
            if mid[a, b] >= 0:
                ma[mid[a, b]] = a
                mb[mid[a, b]] = b
    cur = np.zeros((max(na, 1), W))
    nxt = np.zeros((max(na, 1), W))
    clo = np.ones(max(na, 1), np.int64)
    chi = np.zeros(max(na, 1), np.int64)
    nlo = np.zeros(max(na, 1), np.int64)
    nhi = np.zeros(max(na, 1), np.int64)
    cap = 1024
    rn = np.empty(cap, np.int64)
    rs = np.empty(cap, np.int64)
    rk = np.empty(cap, np.int64)
    ru = np.empty(cap)
    nr = 0
    probs = np.zeros(n_buckets)
    effort = 0.0
    dropped = 0.0
    closed_at = -1
    if na == 0:
        k = dec[0, 0]
        probs[k] = 1.0
        effort = 1.0
        if record:
            # both outcomes of the first draw stop; each is all of its C(1, s) paths
            for s in range(2):
                rn[s] = 1
                rs[s] = s
                rk[s] = k
                ru[s] = 1.0
            nr = 2
        return rn[:nr], rs[:nr], rk[:nr], ru[:nr], effort, probs, 0.0, 1, rn[:0], rs[:0], ru[:0], 0.0
    j0 = mid[0, 0]
    cur[j0, 0] = 1.0
    clo[j0] = 0
    chi[j0] = 0
    n_end = 0
    for n in range(1, N + 1):
        n_end = n
        for j in range(na):
            a = ma[j]
            top = m - mb[j] - 1
            lo = L[top, n] + 1
            hi = U[a, n] - 1
            if lo < 0:
                lo = 0
            if hi > n:
                hi = n
            nlo[j] = lo
            nhi[j] = hi
            if hi >= lo:
                nxt[j, : hi - lo + 1] = 0.0
        for j in range(na):
            if clo[j] > chi[j]:
                continue
            a = ma[j]
            b = mb[j]
            for s in range(clo[j], chi[j] + 1):
                x = cur[j, s - clo[j]]
                if x == 0.0:
                    continue
                for d in range(2):
                    sp = s + d
                    if structural:
                        y = 1.0
                    elif urn:
                        y = x * (sp / n) if d == 1 else x * ((n - sp) / n)
                    else:
                        y = x * p if d == 1 else x * (1.0 - p)
                    if y == 0.0:
                        continue
                    a2 = a
                    while a2 < m - b and sp >= U[a2, n]:
                        a2 += 1
                    b2 = b
                    while b2 < m - a2 and sp <= L[m - 1 - b2, n]:
                        b2 += 1
                    k = dec[a2, b2]
                    if k >= 0:
                        probs[k] += y
                        effort += n * y
                        if record:
                            if nr > 0 and rn[nr - 1] == n and rs[nr - 1] == sp and rk[nr - 1] == k:
                                ru[nr - 1] += y
                            else:
                                if nr == cap:
                                    cap *= 2
                                    t1 = np.empty(cap, np.int64)
                                    t1[:nr] = rn[:nr]
                                    rn = t1
                                    t2 = np.empty(cap, np.int64)
                                    t2[:nr] = rs[:nr]
                                    rs = t2
                                    t3 = np.empty(cap, np.int64)
                                    t3[:nr] = rk[:nr]
                                    rk = t3
                                    t4 = np.empty(cap)
                                    t4[:nr] = ru[:nr]
                                    ru = t4
                                rn[nr] = n
                                rs[nr] = sp
                                rk[nr] = k
                                ru[nr] = y
                                nr += 1
                    else:
                        j2 = mid[a2, b2]
                        if structural:
                            nxt[j2, sp - nlo[j2]] = 1.0
                        else:
                            nxt[j2, sp - nlo[j2]] += y
        alive = 0
        for j in range(na):
            lo = nlo[j]
            hi = nhi[j]
            if hi < lo:
                clo[j] = 1
                chi[j] = 0
                continue
            w = hi - lo + 1
            if trim > 0.0:
                for i in range(w):
                    if nxt[j, i] != 0.0 and nxt[j, i] < trim:
                        dropped += nxt[j, i]
                        nxt[j, i] = 0.0
            i0 = 0
            while i0 < w and nxt[j, i0] == 0.0:
                i0 += 1
            i1 = w - 1
            while i1 >= i0 and nxt[j, i1] == 0.0:
                i1 -= 1
            if i1 < i0:
                clo[j] = 1
                chi[j] = 0
                continue
            for i in range(i0, i1 + 1):
                cur[j, i - i0] = nxt[j, i]
            clo[j] = lo + i0
            chi[j] = lo + i1
            alive += i1 - i0 + 1
        if alive == 0:
            closed_at = n
            break
    # final alive states
    tot = 0
    for j in range(na):
        if clo[j] <= chi[j]:
            tot += chi[j] - clo[j] + 1
    fs = np.empty(tot, np.int64)
    fm = np.empty(tot, np.int64)
    fu = np.empty(tot)
    t = 0
    remain = 0.0
    for j in range(na):
        for s in range(clo[j], chi[j] + 1):
            fs[t] = s
            fm[t] = j
            fu[t] = cur[j, s - clo[j]]
            remain += fu[t]
            t += 1
    return rn[:nr], rs[:nr], rk[:nr], ru[:nr], effort, probs, remain, closed_at, fs, fm, fu, dropped


def stacked_bounds(tables: Sequence[BoundaryTable], N: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample boundaries as ``(m, N+1)`` arrays indexed by ``n``."""
    m = len(tables)
    L = np.full((m, N + 1), -1, dtype=np.int64)
    U = np.full((m, N + 1), 1, dtype=np.int64)
    for j, t in enumerate(tables):
        if not t.per_sample:
            raise ValueError("per-sample tables required")
        if t.n_max < N:
            raise NMaxTooSmall(f"table for alpha={t.alpha} ends at {t.n_max} < {N}")
        L[j, 1:] = t.L[:N]
        U[j, 1:] = t.U[:N]
    return L, U


def window_width(L: np.ndarray, U: np.ndarray) -> int:
    if L.shape[0] == 0:
        return 2
    return int(np.max(U - L)) + 2


def _check_modes(bset: BucketSet, dec: np.ndarray) -> None:
    m = dec.shape[0] - 1
    th = bset.boundary_points
    for a in range(m + 1):
        b = m - a
        if dec[a, b] < 0:
            raise InvalidConfig(
                f"decided interval {mode_interval(th, a, b)} lies in no bucket"
            )


def _closure_per_sample(bset: BucketSet, tables: Sequence[BoundaryTable], N: int) -> int:
    dec = decision_table(bset)
    _check_modes(bset, dec)
    L, U = stacked_bounds(tables, N)
    out = sweep_kernel(L, U, dec, len(bset), N, window_width(L, U), 0.5, False, True, 0.0, False)
    return int(out[7])


class _AliveTracker:
    """Exact reachable undecided states on a general grid, as s-intervals per mode."""

    def __init__(self, m: int, dec: np.ndarray):
        self.m = m
        self.dec = dec
        self.alive: dict[tuple[int, int], list[list[int]]] = {(0, 0): [[0, 0]]}
        if dec[0, 0] >= 0:
            self.alive = {}

    def needed(self) -> set[int]:
        out: set[int] = set()
        for a, b in self.alive:
            out.update(range(a, self.m - b))
        return out

    def advance(self, batch: int, L: dict[int, int], U: dict[int, int]) -> None:
        m, dec = self.m, self.dec
        new: dict[tuple[int, int], list[list[int]]] = defaultdict(list)
        for (a, b), ivs in self.alive.items():
            cuts = set()
            for j in range(a, m - b):
                cuts.add(U[j])
                cuts.add(L[j] + 1)
            for x, y in ivs:
                hi = y + batch
                pts = sorted(c for c in cuts if x < c <= hi)
                starts = [x, *pts]
                ends = [c - 1 for c in pts] + [hi]
                for s0, s1 in zip(starts, ends):
                    a2 = a
                    while a2 < m - b and s0 >= U[a2]:
                        a2 += 1
                    b2 = b
                    while b2 < m - a2 and s0 <= L[m - 1 - b2]:
                        b2 += 1
                    if dec[a2, b2] < 0:
                        new[(a2, b2)].append([s0, s1])
        merged = {}
        for key, ivs in new.items():
            ivs.sort()
            out = [ivs[0]]
            for s0, s1 in ivs[1:]:
                if s0 <= out[-1][1] + 1:
                    out[-1][1] = max(out[-1][1], s1)
                else:
                    out.append([s0, s1])
            merged[key] = out
        self.alive = merged

    @property
    def empty(self) -> bool:
        return not self.alive


def _closure_grid(bset: BucketSet, tables: Sequence[BoundaryTable]) -> int:
    dec = decision_table(bset)
    _check_modes(bset, dec)
    m = len(tables)
    tracker = _AliveTracker(m, dec)
    if tracker.empty:
        return 1
    grid = tables[0].n if m else np.arange(1, 2)
    prev = 0
    for i, n in enumerate(grid):
        need = tracker.needed()
        L = {}
        U = {}
        for j in need:
            t = tables[j]
            if i >= len(t.n) or t.n[i] != n:
                raise NMaxTooSmall(f"table for alpha={t.alpha} lacks checkpoint n={n}")
            L[j] = int(t.L[i])
            U[j] = int(t.U[i])
        tracker.advance(int(n) - prev, L, U)
        prev = int(n)
        if tracker.empty:
            return int(n)
    raise NotClosed(int(grid[-1]))


def closure_time(bset: BucketSet, tables: Sequence[BoundaryTable]) -> int:
    """First checkpoint at which every walk has stopped.

    Tracks the exact set of reachable undecided states. A state is undecided
    when the interval implied by its threshold decisions lies in no bucket.

    Raises:
        NotClosed: If undecided states remain at the end of the tables.
    """
    tables = list(tables)
    if len(tables) != len(bset.boundary_points):
        raise ValueError("need one table per boundary point of the set")
    if tables and all(t.per_sample for t in tables):
        N = min(t.n_max for t in tables)
        c = _closure_per_sample(bset, tables, N)
        if c < 0:
            raise NotClosed(N)
        return c
    return _closure_grid(bset, tables)


# --- designs: everything a run or an analysis needs -----------------------


@dataclass(eq=False)
class SimctestDesign:
    """Boundary tables for every threshold of a bucket set.

    Attributes:
        bset: The bucket set.
        spending: Per-side error budget.
        grid: Checkpoint sample counts, or None for every sample.
        tables: One table per boundary point of ``bset``.
        closure: First checkpoint with no undecided state, None if the
            tables end first.
        monotone: Whether boundaries are ordered across thresholds.
    """

    bset: BucketSet
    spending: SpendingSequence
    grid: np.ndarray | None
    tables: list[BoundaryTable]
    closure: int | None
    monotone: bool
    dec: np.ndarray = field(repr=False)

    @property
    def rho(self) -> float:
        return self.spending.rho

    @property
    def thresholds(self) -> np.ndarray:
        return self.bset.boundary_points

    @property
    def n_max(self) -> int:
        return max((t.n_max for t in self.tables), default=self.closure or 0)


def _design_per_sample(bset, spending, n_cap, n_start) -> SimctestDesign:
    th = bset.boundary_points
    dec = decision_table(bset)
    _check_modes(bset, dec)
    N = min(n_start, n_cap)
    while True:
        tables = [build_boundaries(float(a), spending, N) for a in th]
        mono = check_monotone(tables, N + 1)
        if not mono:
            return SimctestDesign(bset, spending, None, tables, None, False, dec)
        c = _closure_per_sample(bset, tables, N) if tables else 1
        if c > 0 or N >= n_cap:
            closure = c if c > 0 else None
            if closure is not None:
                tables = [_truncate(t, closure) for t in tables]
            return SimctestDesign(bset, spending, None, tables, closure, True, dec)
        N = min(2 * N, n_cap)


def _truncate(t: BoundaryTable, n: int) -> BoundaryTable:
    k = int(np.searchsorted(t.n, n, side="right"))
    return BoundaryTable(
        t.alpha, t.rho, t.n[:k], t.L[:k], t.U[:k], t.eps[:k], t.spent_lower[:k], t.spent_upper[:k]
    )


def _design_grid(bset, spending, grid) -> SimctestDesign:
    th = bset.boundary_points
    m = len(th)
    dec = decision_table(bset)
    _check_modes(bset, dec)
    recs = [_GridRecursion(float(a), spending) for a in th]
    tracker = _AliveTracker(m, dec)
    closure = 1 if tracker.empty else None
    prev = 0
    for n in grid if closure is None else []:
        batch = int(n) - prev
        prev = int(n)
        need = tracker.needed()
        L, U = {}, {}
        for j in sorted(need):
            L[j], U[j] = recs[j].step(batch)
        # keep every needed table on the same checkpoints
        tracker.advance(batch, L, U)
        if tracker.empty:
            closure = int(n)
            break
    tables = [r.table(spending.rho) for r in recs]
    mono = _monotone_where_defined(tables)
    return SimctestDesign(bset, spending, np.asarray(grid, dtype=np.int64), tables, closure, mono, dec)


def _monotone_where_defined(tables: Sequence[BoundaryTable]) -> bool:
    return check_monotone(tables, np.iinfo(np.int64).max)


def build_design(
    bset: BucketSet,
    spending: SpendingSequence,
    grid: Sequence[int] | None = None,
    n_cap: int = 10**7,
    n_start: int = 1 << 14,
) -> SimctestDesign:
    """Boundary tables for all thresholds of ``bset`` up to closure.

    With ``grid=None`` boundaries are built for every sample and the table
    length is doubled until no undecided state remains or ``n_cap`` is
    reached. With a checkpoint grid the recursion runs once and stops
    advancing a threshold as soon as no undecided state depends on it.

    Raises:
        InvalidConfig: If the fully decided interval for some pair of
            adjacent thresholds fits no bucket.
    """
    if grid is None:
        return _design_per_sample(bset, spending, int(n_cap), int(n_start))
    g = np.asarray([x for x in grid if x <= n_cap], dtype=np.int64)
    return _design_grid(bset, spending, g)
