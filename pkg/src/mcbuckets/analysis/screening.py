"""Screening many hypotheses with bucket decisions.

Null p-values are uniform. Alternative p-values are ``1 - F(X)`` for a
noncentral t statistic ``X``, with ``F`` the central t distribution
function. Each hypothesis gets its own Monte Carlo stream and is decided
with simctest. The total effort is compared with a naive scheme spending
the same number of draws evenly, which cannot resolve p-values below
``1 / N`` with ``N`` draws per hypothesis.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..buckets import NAMED_SETS, BucketSet
from ..engine import BatchSchedule, BernoulliStream, run, simctest_design

SCREEN_N_CAP = 10**11


@dataclass(frozen=True)
class ScreeningSetup:
    """Population of hypotheses.

    Attributes:
        n_hyp: Number of hypotheses.
        n_alt: How many of them are alternatives (the first ``n_alt``).
        ncp_range: Range of the uniform noncentrality parameter.
        df: Degrees of freedom of the t statistic.
    """

    n_hyp: int = 10_000
    n_alt: int = 100
    ncp_range: tuple[float, float] = (2.0, 6.0)
    df: float = 100.0

    def __post_init__(self) -> None:
        if not 0 <= self.n_alt <= self.n_hyp:
            raise ValueError("need 0 <= n_alt <= n_hyp")


@dataclass(frozen=True)
class ScreenReport:
    """Allocation of hypotheses to buckets.

    Attributes:
        buckets: Bucket labels in set order.
        null_counts, alt_counts: Hypotheses reported in each bucket.
        total_samples: Draws over all hypotheses.
        naive_floor: ``1 / N`` with ``N = total_samples / n_hyp``.
        true_p: True p-value of each hypothesis.
        reported: Index of each reported bucket.
        samples: Draws per hypothesis.
        truncated: Number of runs stopped by the sample cap.
    """

    buckets: tuple[str, ...]
    null_counts: tuple[int, ...]
    alt_counts: tuple[int, ...]
    total_samples: int
    naive_floor: float
    true_p: tuple[float, ...]
    reported: tuple[int, ...]
    samples: tuple[int, ...]
    truncated: int

    @property
    def samples_per_hypothesis(self) -> float:
        return self.total_samples / len(self.samples)

    def lowest(self, bset: BucketSet, k: int = 2) -> tuple[int, int]:
        """(null, alternative) counts in the ``k`` buckets with the smallest upper ends."""
        idx = bset.tie_break_order[:k]
        return sum(self.null_counts[i] for i in idx), sum(self.alt_counts[i] for i in idx)

    def below_floor(self, bset: BucketSet) -> tuple[int, int]:
        """(null, alternative) counts in buckets lying entirely below the naive floor."""
        idx = [i for i, b in enumerate(bset) if b.hi < self.naive_floor]
        return sum(self.null_counts[i] for i in idx), sum(self.alt_counts[i] for i in idx)

    def to_dict(self) -> dict:
        return {
            "buckets": list(self.buckets),
            "null_counts": list(self.null_counts),
            "alt_counts": list(self.alt_counts),
            "total_samples": self.total_samples,
            "naive_floor": self.naive_floor,
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        lines = ["bucket,null,alternative"]
        lines += [f"\"{b}\",{n},{a}" for b, n, a in zip(self.buckets, self.null_counts, self.alt_counts)]
        return "\n".join(lines) + "\n"


def true_pvalues(setup: ScreeningSetup, rng: np.random.Generator) -> np.ndarray:
    """Alternatives first, then uniform nulls."""
    lo, hi = setup.ncp_range
    ncp = rng.uniform(lo, hi, setup.n_alt)
    x = stats.nct.rvs(setup.df, ncp, size=setup.n_alt, random_state=rng)
    alt = stats.t.sf(x, setup.df)
    null = rng.uniform(0.0, 1.0, setup.n_hyp - setup.n_alt)
    return np.concatenate([alt, null])


def _decide_chunk(args) -> list[tuple[int, int, bool]]:
    ps, seeds, bset, eps, schedule, n_cap = args
    design = simctest_design(bset, eps, schedule, n_cap)
    out = []
    for p, ss in zip(ps, seeds):
        rep = run(BernoulliStream(p, ss), bset, eps, "simctest", schedule, n_cap, design=design)
        out.append((bset.index(rep.bucket), rep.samples_used, rep.truncated))
    return out


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MCB_THREADS", "1")))
    except ValueError:
        return 1


def screen(
    setup: ScreeningSetup = ScreeningSetup(),
    bset: BucketSet = NAMED_SETS["Js"],
    eps: float = 1e-3,
    schedule: BatchSchedule = BatchSchedule(10, 1.1),
    seed: int = 0,
    n_cap: int = SCREEN_N_CAP,
    workers: int | None = None,
) -> ScreenReport:
    """Decide every hypothesis of ``setup`` with simctest.

    Every hypothesis draws from its own Philox stream spawned from
    ``seed``, so the report does not depend on the number of workers.

    Args:
        setup: Population of hypotheses.
        bset: Bucket set.
        eps: Risk bound per hypothesis.
        schedule: Batch sizes.
        seed: Root seed.
        n_cap: Sample cap per hypothesis.
        workers: Process count; defaults to ``MCB_THREADS`` or 1.
    """
    root = np.random.SeedSequence(seed)
    p_seed, stream_root = root.spawn(2)
    ps = true_pvalues(setup, np.random.Generator(np.random.Philox(p_seed)))
    seeds = stream_root.spawn(setup.n_hyp)
    workers = workers or _workers()
    n_chunks = max(1, min(setup.n_hyp, 4 * workers))
    bounds = np.linspace(0, setup.n_hyp, n_chunks + 1).astype(int)
    jobs = [
        (ps[a:b].tolist(), seeds[a:b], bset, eps, schedule, n_cap)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_decide_chunk, jobs))
    else:
        parts = [_decide_chunk(j) for j in jobs]
    rows = [r for part in parts for r in part]
    reported = np.array([r[0] for r in rows], dtype=np.int64)
    samples = np.array([r[1] for r in rows], dtype=np.int64)
    is_alt = np.arange(setup.n_hyp) < setup.n_alt
    nb = len(bset)
    null_counts = np.bincount(reported[~is_alt], minlength=nb)
    alt_counts = np.bincount(reported[is_alt], minlength=nb)
    total = int(samples.sum())
    return ScreenReport(
        buckets=tuple(str(b) for b in bset),
        null_counts=tuple(int(x) for x in null_counts),
        alt_counts=tuple(int(x) for x in alt_counts),
        total_samples=total,
        naive_floor=setup.n_hyp / total,
        true_p=tuple(float(x) for x in ps),
        reported=tuple(int(x) for x in reported),
        samples=tuple(int(x) for x in samples),
        truncated=sum(1 for r in rows if r[2]),
    )
