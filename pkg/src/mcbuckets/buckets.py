"""Interval algebra for p-value buckets.

A bucket is a sub-interval of [0, 1] with explicit closure flags on both
ends. A :class:`BucketSet` is a finite family of buckets covering [0, 1].
The module also provides the overlap predicate, the extended star rating,
three generators for overlapping families and a Clopper-Pearson helper.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import (
    BucketNotInSet,
    CoverageGap,
    DegenerateBucket,
    OverlapCollision,
    RhoTooLarge,
)

CLASSICAL_THRESHOLDS = (0.001, 0.01, 0.05)


@dataclass(frozen=True)
class Interval:
    """A real interval with explicit endpoint closure.

    Attributes:
        lo: Lower endpoint.
        hi: Upper endpoint.
        lo_closed: Whether ``lo`` belongs to the interval.
        hi_closed: Whether ``hi`` belongs to the interval.
    """

    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = True

    def __contains__(self, p: float) -> bool:
        above = self.lo < p or (self.lo_closed and p == self.lo)
        below = p < self.hi or (self.hi_closed and p == self.hi)
        return above and below

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains_interior(self, p: float) -> bool:
        """Return True if ``p`` lies in the open interval ``(lo, hi)``."""
        return self.lo < p < self.hi

    def issubset(self, other: Interval) -> bool:
        """Return True if every point of ``self`` lies in ``other``."""
        left = other.lo < self.lo or (
            other.lo == self.lo and (other.lo_closed or not self.lo_closed)
        )
        right = self.hi < other.hi or (
            self.hi == other.hi and (other.hi_closed or not self.hi_closed)
        )
        return left and right

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        return f"{left}{self.lo:g}, {self.hi:g}{right}"


@dataclass(frozen=True)
class Bucket(Interval):
    """A p-value bucket: an interval of positive length inside [0, 1].

    Raises:
        DegenerateBucket: If ``lo >= hi``.
        ValueError: If an endpoint lies outside [0, 1].
    """

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo <= 1.0 and 0.0 <= self.hi <= 1.0):
            raise ValueError(f"bucket endpoints must lie in [0, 1], got {self}")
        if not self.lo < self.hi:
            raise DegenerateBucket(f"bucket {self} has non-positive length")

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Bucket:
        return cls(
            float(d["lo"]),
            float(d["hi"]),
            bool(d.get("lo_closed", False)),
            bool(d.get("hi_closed", True)),
        )


def _tie_key(b: Bucket) -> tuple:
    # smallest hi first, then largest lo, then the tighter closure
    return (b.hi, -b.lo, b.hi_closed, not b.lo_closed)


@dataclass(frozen=True)
class BucketSet:
    """A validated covering family of buckets, sorted by ``(lo, hi)``.

    Construct through :func:`validate`; the constructor itself does not
    check coverage.
    """

    buckets: tuple[Bucket, ...]
    name: str | None = None
    _order: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        order = sorted(range(len(self.buckets)), key=lambda i: _tie_key(self.buckets[i]))
        object.__setattr__(self, "_order", tuple(order))

    def __len__(self) -> int:
        return len(self.buckets)

    def __iter__(self):
        return iter(self.buckets)

    def __getitem__(self, i: int) -> Bucket:
        return self.buckets[i]

    @property
    def boundary_points(self) -> np.ndarray:
        """Sorted bucket endpoints other than 0 and 1."""
        pts = {b.lo for b in self.buckets} | {b.hi for b in self.buckets}
        return np.array(sorted(pts - {0.0, 1.0}), dtype=float)

    @property
    def tie_break_order(self) -> tuple[int, ...]:
        """Bucket indices in reporting preference order."""
        return self._order

    def index(self, bucket: Bucket) -> int:
        try:
            return self.buckets.index(bucket)
        except ValueError:
            raise BucketNotInSet(f"{bucket} is not a member of {self.name or 'the set'}") from None

    def containing(self, p: float) -> list[int]:
        """Indices of buckets that contain the point ``p``."""
        return [i for i, b in enumerate(self.buckets) if p in b]

    def select(self, interval: Interval) -> int | None:
        """Index of the preferred bucket containing ``interval``, or None.

        Preference is the smallest upper endpoint, then the largest lower
        endpoint.
        """
        for i in self._order:
            if interval.issubset(self.buckets[i]):
                return i
        return None

    def select_point(self, p: float) -> int:
        """Index of the preferred bucket containing the point ``p``."""
        return self.select(Interval(p, p, True, True))

    def to_dict(self) -> dict:
        return {"name": self.name, "buckets": [b.to_dict() for b in self.buckets]}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> BucketSet:
        return validate([Bucket.from_dict(b) for b in d["buckets"]], name=d.get("name"))

    @classmethod
    def from_json(cls, source: str | Path) -> BucketSet:
        """Parse a JSON document or read it from a file path."""
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        return cls.from_dict(json.loads(text))

    def __str__(self) -> str:
        inner = ", ".join(str(b) for b in self.buckets)
        return f"{self.name or 'BucketSet'}{{{inner}}}"


def validate(buckets: Iterable[Bucket], name: str | None = None) -> BucketSet:
    """Check that ``buckets`` cover [0, 1] and return them as a set.

    Coverage is decided exactly: every endpoint and every midpoint between
    consecutive endpoints must lie in some bucket, so two touching open ends
    leave a gap.

    Raises:
        ValueError: If the list is empty.
        CoverageGap: With the first uncovered point found.
        DegenerateBucket: If a bucket has ``lo >= hi``.
    """
    items = []
    for b in buckets:
        if not isinstance(b, Bucket):
            b = Bucket(b.lo, b.hi, b.lo_closed, b.hi_closed)
        items.append(b)
    if not items:
        raise ValueError("a bucket set needs at least one bucket")
    items.sort(key=lambda b: (b.lo, b.hi, not b.lo_closed, b.hi_closed))
    pts = sorted({0.0, 1.0} | {b.lo for b in items} | {b.hi for b in items})
    probes = list(pts) + [(a + c) / 2 for a, c in zip(pts[:-1], pts[1:])]
    for x in sorted(probes):
        if not any(x in b for b in items):
            raise CoverageGap(x)
    return BucketSet(tuple(items), name)


def is_overlapping(bset: BucketSet) -> bool:
    """Return True if every p in (0, 1) lies in some bucket's open interior."""
    pts = [0.0, *bset.boundary_points.tolist(), 1.0]
    probes = pts[1:-1] + [(a + c) / 2 for a, c in zip(pts[:-1], pts[1:])]
    return all(any(b.contains_interior(x) for b in bset) for x in probes)


def fit_width(bset: BucketSet) -> float:
    """Largest ``c`` such that every interval of length below ``c`` fits a bucket.

    Intervals are taken inside [0, 1]. Between consecutive endpoints the
    room to the right, ``max hi - x`` over buckets containing ``x``, only
    shrinks, so the infimum is attained at an endpoint or approached from
    its left. Zero for sets without overlap.
    """
    pts = [0.0, *bset.boundary_points.tolist(), 1.0]
    best = math.inf

    def room(x: float, members: list[Bucket]) -> float:
        # a bucket reaching a closed 1 holds any interval starting at x
        return max((math.inf if b.hi == 1.0 and b.hi_closed else b.hi - x for b in members), default=0.0)

    for t in pts[:-1]:
        best = min(best, room(t, [b for b in bset if t in b]))
    for a, t in zip(pts[:-1], pts[1:]):
        mid = (a + t) / 2
        best = min(best, room(t, [b for b in bset if mid in b]))
    return max(best, 0.0)


@dataclass(frozen=True)
class RatingCode:
    """Extended star rating of a reported bucket."""

    stars: int
    tilde: bool

    def __post_init__(self) -> None:
        if not 0 <= self.stars <= 3:
            raise ValueError("stars must lie in 0..3")

    def __str__(self) -> str:
        return "*" * self.stars + ("~" if self.tilde else "")


def star_rating(
    bset: BucketSet,
    decided: Bucket,
    classical_thresholds: Sequence[float] = CLASSICAL_THRESHOLDS,
) -> RatingCode:
    """Rating code for a reported bucket.

    The number of stars counts the classical thresholds that the whole
    bucket lies below. A tilde marks buckets straddling a classical
    threshold, i.e. with a threshold strictly inside.

    Raises:
        BucketNotInSet: If ``decided`` is not a member of ``bset``.
    """
    bset.index(decided)
    ts = sorted(classical_thresholds)
    straddles = any(decided.lo < t < decided.hi for t in ts)
    stars = sum(1 for t in ts if decided.hi <= t)
    return RatingCode(min(stars, 3), straddles)


def _classical(thresholds: Sequence[float]) -> list[Bucket]:
    ts = list(thresholds)
    if any(not 0.0 < t < 1.0 for t in ts):
        raise ValueError("thresholds must lie in (0, 1)")
    if any(a >= b for a, b in zip(ts[:-1], ts[1:])):
        raise ValueError("thresholds must be strictly increasing")
    edges = [0.0, *ts, 1.0]
    return [Bucket(lo, hi, lo == 0.0, True) for lo, hi in zip(edges[:-1], edges[1:])]


def _check_collisions(thresholds: Sequence[float], extra: Sequence[Bucket]) -> None:
    for t, b in zip(thresholds, extra):
        for other in thresholds:
            if other != t and b.lo <= other <= b.hi:
                raise OverlapCollision(f"overlap bucket {b} around {t} reaches threshold {other}")


def gen_proportional(thresholds: Sequence[float], rho: float, name: str | None = None) -> BucketSet:
    """Classical buckets plus ``(rho*t, t/rho]`` around each threshold.

    Raises:
        DegenerateBucket: If ``rho >= 1``.
        OverlapCollision: If an overlap bucket reaches another threshold.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    extra = [Bucket(rho * t, min(t / rho, 1.0), False, True) for t in thresholds]
    base = _classical(thresholds)
    _check_collisions(thresholds, extra)
    return validate(base + extra, name)


def gen_sqrt(thresholds: Sequence[float], rho: float, name: str | None = None) -> BucketSet:
    """Classical buckets plus ``[t - rho*sqrt(t), t + rho*sqrt(t)]``.

    Raises:
        RhoTooLarge: If a bucket would reach 0.
        OverlapCollision: If an overlap bucket reaches another threshold.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    extra = []
    for t in thresholds:
        half = rho * math.sqrt(t)
        if t - half <= 0:
            raise RhoTooLarge(t)
        extra.append(Bucket(t - half, min(t + half, 1.0), True, True))
    base = _classical(thresholds)
    _check_collisions(thresholds, extra)
    return validate(base + extra, name)


def gen_match_naive(
    thresholds: Sequence[float], n: int, eps: float, name: str | None = None
) -> BucketSet:
    """Overlap buckets matching the precision of an ``n``-sample test.

    For each threshold the smallest interval holding every Clopper-Pearson
    interval (one per ``S = 0..n``) that contains the threshold is added.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    cps = [clopper_pearson(s, n, eps) for s in range(n + 1)]
    extra = []
    for t in thresholds:
        hits = [iv for iv in cps if t in iv]
        extra.append(Bucket(min(iv.lo for iv in hits), max(iv.hi for iv in hits), True, True))
    return validate(_classical(thresholds) + extra, name)


def clopper_pearson(S: int, n: int, eps: float) -> Interval:
    """Equal-tailed Clopper-Pearson interval with coverage ``1 - eps``.

    Endpoints solve the binomial tail equations with tail mass ``eps/2``
    each, by bracketed root finding to 1e-13 absolute tolerance.
    """
    if not 0 <= S <= n:
        raise ValueError("need 0 <= S <= n")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    half = eps / 2
    if S == 0:
        lo = 0.0
    else:
        lo = optimize.brentq(lambda p: stats.binom.sf(S - 1, n, p) - half, 0.0, 1.0, xtol=1e-13)
    if S == n:
        hi = 1.0
    else:
        hi = optimize.brentq(lambda p: stats.binom.cdf(S, n, p) - half, 0.0, 1.0, xtol=1e-13)
    return Interval(lo, hi, True, True)


def _b(lo, hi, lo_closed=False, hi_closed=True) -> Bucket:
    return Bucket(lo, hi, lo_closed, hi_closed)


def _named() -> dict[str, BucketSet]:
    j0 = [_b(0.0, 1e-3, True), _b(1e-3, 0.01), _b(0.01, 0.05), _b(0.05, 1.0)]
    extra = [_b(5e-4, 2e-3), _b(0.008, 0.012), _b(0.045, 0.055)]
    js = [_b(0.0, 1e-7, True)] + [_b(float(f"1e{i - 2}"), float(f"1e{i}")) for i in range(-6, 1)]
    return {
        "J0": validate(j0, "J0"),
        "Jstar": validate(j0 + extra, "Jstar"),
        "Js": validate(js, "Js"),
        "single": validate([_b(0.0, 1.0, True)], "single"),
    }


NAMED_SETS = _named()


def load_bucket_set(spec: str) -> BucketSet:
    """Return a named set (``J0``, ``Jstar``, ``Js``, ``single``) or parse a JSON file."""
    if spec in NAMED_SETS:
        return NAMED_SETS[spec]
    if not Path(spec).is_file():
        raise ValueError(f"{spec!r} is neither a named set ({', '.join(NAMED_SETS)}) nor a file")
    return BucketSet.from_json(Path(spec))
