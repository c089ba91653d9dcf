"""Sequential bucket decisions from a stream of exceedance indicators.

A run draws batches from an :class:`ExceedanceStream`, updates a confidence
sequence after each batch and stops as soon as the current interval lies
inside some bucket. Two confidence sequences are available: the
Robbins-Lai interval (``"rl"``) and the intersection of simctest decisions
at every bucket boundary (``"simctest"``).
"""

from __future__ import annotations

import abc
import functools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .buckets import Bucket, BucketSet, RatingCode, star_rating
from .confseq_rl import RLState, rl_select, rl_update
from .confseq_simctest import (
    ABOVE,
    BELOW,
    SimctestDesign,
    SimctestState,
    SpendingSequence,
    build_design,
    simctest_interval,
    simctest_update,
)
from .errors import InvalidConfig, McBucketsError

METHODS = ("rl", "simctest")


# --- streams --------------------------------------------------------------


class ExceedanceStream(abc.ABC):
    """Source of exchangeable Bernoulli indicators, consumed in batches."""

    @abc.abstractmethod
    def next_batch(self, size: int) -> int:
        """Draw ``size`` indicators and return how many are 1."""

    @staticmethod
    def bernoulli(p: float, seed: int | np.random.SeedSequence) -> BernoulliStream:
        return BernoulliStream(p, seed)

    @staticmethod
    def callback(fn: Callable[[int], int]) -> CallbackStream:
        return CallbackStream(fn)

    @staticmethod
    def recorded(path: str | Path) -> RecordedStream:
        return RecordedStream.from_file(path)


class BernoulliStream(ExceedanceStream):
    """Pseudo-random Bernoulli(p) indicators.

    Uses the counter-based Philox generator. An integer seed or a spawned
    ``SeedSequence`` gives reproducible, independent streams.
    """

    def __init__(self, p: float, seed: int | np.random.SeedSequence):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        self.p = float(p)
        self.rng = np.random.Generator(np.random.Philox(seed))

    def next_batch(self, size: int) -> int:
        # the count of a batch of independent indicators is binomial
        return int(self.rng.binomial(size, self.p))


class CallbackStream(ExceedanceStream):
    """Wraps ``fn(size) -> count``, for example a permutation test."""

    def __init__(self, fn: Callable[[int], int]):
        self.fn = fn

    def next_batch(self, size: int) -> int:
        k = int(self.fn(size))
        if not 0 <= k <= size:
            raise ValueError(f"callback returned {k} exceedances for a batch of {size}")
        return k


class RecordedStream(ExceedanceStream):
    """Replays ``(batch_size, exceedances)`` pairs in order."""

    def __init__(self, batches: list[tuple[int, int]]):
        self.batches = list(batches)
        self.pos = 0

    @classmethod
    def from_file(cls, path: str | Path) -> RecordedStream:
        """Read lines ``batch_size,exceedances``."""
        out = []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if line:
                size, k = line.split(",")
                out.append((int(size), int(k)))
        return cls(out)

    def next_batch(self, size: int) -> int:
        if self.pos >= len(self.batches):
            raise EOFError("recorded stream is exhausted")
        rec_size, k = self.batches[self.pos]
        if rec_size != size:
            raise ValueError(f"recorded batch {self.pos} has size {rec_size}, requested {size}")
        self.pos += 1
        return k


class StreamRecorder(ExceedanceStream):
    """Passes batches through and keeps them for :meth:`write`."""

    def __init__(self, inner: ExceedanceStream):
        self.inner = inner
        self.batches: list[tuple[int, int]] = []

    def next_batch(self, size: int) -> int:
        k = self.inner.next_batch(size)
        self.batches.append((size, k))
        return k

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{s},{k}\n" for s, k in self.batches))


# --- batch schedules ------------------------------------------------------


@dataclass(frozen=True)
class BatchSchedule:
    """Geometric batch sizes ``round(a**i * b)``.

    Attributes:
        b: Initial batch size.
        a: Growth factor.
        cap: Largest single batch, or None.
    """

    b: int = 10
    a: float = 1.1
    cap: int | None = None

    def __post_init__(self) -> None:
        if self.b < 1:
            raise ValueError("b must be at least 1")
        if self.a < 1.0:
            raise ValueError("a must be at least 1")
        if self.cap is not None and self.cap < 1:
            raise ValueError("cap must be at least 1")

    @property
    def per_sample(self) -> bool:
        return self.b == 1 and self.a == 1.0

    def checkpoints(self, n_cap: int) -> np.ndarray:
        """Cumulative sample counts at batch ends, the last one equal to ``n_cap``."""
        out = []
        n, i = 0, 0
        while n < n_cap:
            n = min(n + batch_sizes(self, i), n_cap)
            out.append(n)
            i += 1
        return np.array(out, dtype=np.int64)


def batch_sizes(schedule: BatchSchedule, i: int) -> int:
    """Size of batch ``i``: ``a**i * b`` rounded half up, at most ``cap``."""
    if i < 0:
        raise ValueError("batch index must be non-negative")
    size = int(math.floor(schedule.a**i * schedule.b + 0.5))
    return size if schedule.cap is None else min(size, schedule.cap)


# --- reports --------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdHit:
    """Simctest decision for one bucket boundary."""

    alpha: float
    side: str
    n: int


@dataclass(frozen=True)
class DecisionReport:
    """Outcome of one run.

    Attributes:
        bucket: Reported bucket.
        rating: Its extended star rating.
        samples_used: Number of draws taken.
        S_final: Number of exceedances among them.
        method: ``"rl"`` or ``"simctest"``.
        truncated: True if ``n_cap`` was reached before the interval fit a
            bucket; the bucket then contains ``S_final / samples_used``.
        hits: Per-threshold decisions (simctest only).
    """

    bucket: Bucket
    rating: RatingCode
    samples_used: int
    S_final: int
    method: str
    truncated: bool
    hits: tuple[ThresholdHit, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "bucket": self.bucket.to_dict(),
            "interval": str(self.bucket),
            "rating": str(self.rating),
            "samples_used": self.samples_used,
            "S_final": self.S_final,
            "method": self.method,
            "truncated": self.truncated,
            "hits": None if self.hits is None else [asdict(h) for h in self.hits],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --- designs --------------------------------------------------------------


@functools.lru_cache(maxsize=16)
def simctest_design(
    bset: BucketSet,
    eps: float,
    schedule: BatchSchedule = BatchSchedule(),
    n_cap: int = 10**7,
    spending_k: float = 1000.0,
) -> SimctestDesign:
    """Boundaries with ``rho = eps / 2`` on the checkpoints of ``schedule``.

    Results are cached; designs are read-only and may be shared by runs.
    """
    spending = SpendingSequence(eps / 2, spending_k)
    grid = None if schedule.per_sample else schedule.checkpoints(n_cap)
    return build_design(bset, spending, grid=grid, n_cap=n_cap)


def _check_design(design: SimctestDesign, bset: BucketSet, eps: float) -> None:
    if design.bset != bset:
        raise InvalidConfig("design was built for a different bucket set")
    if not math.isclose(design.rho, eps / 2, rel_tol=1e-12):
        raise InvalidConfig(f"simctest needs rho = eps/2 = {eps / 2}, design has {design.rho}")
    if not design.monotone:
        raise InvalidConfig("boundaries are not ordered across thresholds")


# --- the algorithm --------------------------------------------------------


def run(
    stream: ExceedanceStream,
    bset: BucketSet,
    eps: float,
    method: str = "simctest",
    schedule: BatchSchedule = BatchSchedule(),
    n_cap: int = 10**7,
    design: SimctestDesign | None = None,
    spending_k: float = 1000.0,
) -> DecisionReport:
    """Draw batches until the confidence interval fits a bucket.

    Containment is checked after every batch. When several buckets contain
    the interval the one with the smallest upper end wins, then the one
    with the largest lower end.

    Args:
        stream: Source of exceedance indicators.
        bset: Bucket set.
        eps: Bound on the probability of reporting a bucket that misses
            the true p-value.
        method: ``"rl"`` or ``"simctest"``. Simctest spends ``eps / 2`` on
            each side of every threshold.
        schedule: Batch sizes.
        n_cap: Maximum number of draws.
        design: Precomputed simctest boundaries covering the checkpoints of
            ``schedule``. Built and cached when omitted.
        spending_k: Parameter of the default spending sequence.

    Returns:
        The decision. If ``n_cap`` is reached first the report is flagged
        as truncated and names the bucket containing ``S / n``.

    Raises:
        InvalidConfig: For an unknown method, a design with the wrong
            ``rho``, unordered boundaries, or tables that miss a checkpoint.
    """
    if method not in METHODS:
        raise InvalidConfig(f"unknown method {method!r}")
    if not 0.0 < eps < 1.0:
        raise InvalidConfig("eps must lie in (0, 1)")
    if n_cap < 1:
        raise InvalidConfig("n_cap must be at least 1")
    if method == "simctest":
        if design is None:
            design = simctest_design(bset, eps, schedule, int(n_cap), spending_k)
        _check_design(design, bset, eps)
        thresholds = design.thresholds.tolist()
        st = SimctestState.initial(len(thresholds))
    else:
        st = RLState(0, 0, eps)

    i = 0
    chosen = None
    while st.n < n_cap:
        size = min(batch_sizes(schedule, i), n_cap - st.n)
        i += 1
        k = stream.next_batch(size)
        if method == "rl":
            st = rl_update(st, k, size)
            chosen = rl_select(st, bset)
        else:
            try:
                st = simctest_update(st, design.tables, k, size)
            except (KeyError, McBucketsError) as exc:
                raise InvalidConfig(f"simctest tables do not cover n={st.n + size}: {exc}") from exc
            chosen = bset.select(simctest_interval(st, thresholds))
        if chosen is not None:
            break

    truncated = chosen is None
    if truncated:
        chosen = bset.select_point(st.S / st.n)
    hits = None
    if method == "simctest":
        names = {ABOVE: "above", BELOW: "below"}
        hits = tuple(
            ThresholdHit(float(a), names[s], int(t))
            for a, s, t in zip(thresholds, st.status, st.hit_time)
            if s in names
        )
    bucket = bset[chosen]
    return DecisionReport(bucket, star_rating(bset, bucket), st.n, st.S, method, truncated, hits)
