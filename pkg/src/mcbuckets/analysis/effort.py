"""Exact effort and decision probabilities of the stopping rules.

Both stopping rules are deterministic functions of the exceedance path. A
forward pass over alive states gives, for a fixed ``p``, the distribution
of the stopping time and of the reported bucket. Running the same pass
with path-counting weights instead of ``(1-p, p)`` yields an
:class:`ExitTable`: for every stopping state ``(n, s, bucket)`` the
fraction ``u`` of the ``C(n, s)`` paths that stop there. Then

    P_p(stop at (n, s) with bucket k) = u * C(n, s) p^s (1-p)^(n-s)

for every ``p`` at once, which turns effort curves and integrals against a
density into weighted sums over the table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numba
import numpy as np
from scipy import special

from ..buckets import Bucket, BucketSet, star_rating
from ..confseq_rl import RLState, bucket_arrays, rl_select
from ..confseq_simctest import (
    SimctestDesign,
    SpendingSequence,
    build_design,
    mode_interval,
    stacked_bounds,
    sweep_kernel,
    window_width,
)
from ..errors import InvalidConfig, NotClosed
from .kernels import rl_sweep_kernel

DEFAULT_HORIZON_CAP = 10**7


@dataclass
class _Sweep:
    rn: np.ndarray
    rs: np.ndarray
    rk: np.ndarray
    ru: np.ndarray
    effort: float
    probs: np.ndarray
    remain: float
    closed_at: int
    fs: np.ndarray
    fm: np.ndarray
    fu: np.ndarray
    dropped: float


class StoppingPredicate:
    """Stopping rule of one method on one bucket set.

    Subclasses evaluate the rule on a single path state and run the exact
    forward pass.
    """

    method: str
    bset: BucketSet

    def _sweep(self, N: int, p: float, urn: bool, structural: bool, trim: float, record: bool) -> _Sweep:
        raise NotImplementedError

    @cached_property
    def closure(self) -> int:
        """First ``n`` at which every path has stopped."""
        return self._closure()

    def _closure(self) -> int:
        out = self._sweep(self.horizon_cap, 0.5, False, True, 0.0, False)
        if out.closed_at < 0:
            raise NotClosed(self.horizon_cap)
        return out.closed_at

    horizon_cap: int = DEFAULT_HORIZON_CAP

    def default_horizon(self) -> int:
        try:
            return self.closure
        except NotClosed:
            return self.horizon_cap

    @cached_property
    def exit_table(self) -> ExitTable:
        """Path-fraction records of every stopping state up to closure."""
        return self.exit_table_to(self.default_horizon())

    def exit_table_to(self, horizon: int) -> ExitTable:
        out = self._sweep(int(horizon), 0.0, True, False, 0.0, True)
        return ExitTable(
            self.bset,
            out.rn,
            out.rs,
            out.rk,
            out.ru,
            horizon=int(horizon),
            alive_s=out.fs,
            alive_u=out.fu,
        )


class RLPredicate(StoppingPredicate):
    """Robbins-Lai rule: stop once ``I_n`` fits a bucket.

    Args:
        bset: Bucket set.
        eps: Risk bound.
        horizon_cap: Largest horizon explored when searching closure.
    """

    method = "rl"

    def __init__(self, bset: BucketSet, eps: float, horizon_cap: int = DEFAULT_HORIZON_CAP):
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        self.bset = bset
        self.eps = float(eps)
        self.horizon_cap = int(horizon_cap)
        self._arrays = bucket_arrays(bset)

    def decide(self, n: int, s: int) -> Bucket | None:
        """Bucket reported at state ``(n, s)``, None to continue."""
        k = rl_select(RLState(n, s, self.eps), self.bset)
        return None if k is None else self.bset[k]

    def _sweep(self, N, p, urn, structural, trim, record):
        lo, hi, lc, hc, order = self._arrays
        out = rl_sweep_kernel(
            lo, hi, lc, hc, order, len(self.bset), self.eps, int(N), float(p), urn, structural, float(trim), record
        )
        return _Sweep(*out)


class SimctestPredicate(StoppingPredicate):
    """Simctest rule on per-sample boundaries.

    The rule is Markov in ``(n, s, mode)`` where the mode records how many
    of the smallest thresholds were crossed upward and how many of the
    largest downward. Crossings depend on the past path, so ``(n, s)``
    alone does not determine the decision.

    Args:
        bset: Bucket set.
        rho: Per-side risk of every threshold (``eps / 2`` for joint
            coverage ``eps``).
        spending: Budget sequence; defaults to ``rho * n / (n + 1000)``.
        design: Prebuilt per-sample design, overrides the other options.
    """

    method = "simctest"

    def __init__(
        self,
        bset: BucketSet,
        rho: float | None = None,
        spending: SpendingSequence | None = None,
        design: SimctestDesign | None = None,
        horizon_cap: int = DEFAULT_HORIZON_CAP,
    ):
        if design is None:
            if spending is None:
                if rho is None:
                    raise ValueError("need rho, spending or design")
                spending = SpendingSequence(rho)
            design = build_design(bset, spending, n_cap=horizon_cap)
        if design.grid is not None:
            raise InvalidConfig("the exact pass needs per-sample boundaries")
        if not design.monotone:
            raise InvalidConfig("boundaries are not ordered across thresholds")
        self.bset = design.bset
        self.design = design
        self.horizon_cap = design.n_max if design.closure is None else design.closure
        self._LU: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def rho(self) -> float:
        return self.design.rho

    def _closure(self) -> int:
        if self.design.closure is None:
            raise NotClosed(self.design.n_max)
        return self.design.closure

    def _bounds(self, N: int):
        if self._LU is None or self._LU[0].shape[1] < N + 1:
            self._LU = stacked_bounds(self.design.tables, N)
        L, U = self._LU
        return L[:, : N + 1], U[:, : N + 1]

    def decide(self, n: int, s: int, mode: tuple[int, int] = (0, 0)) -> tuple[Bucket | None, tuple[int, int]]:
        """Decision and new mode after moving to ``(n, s)`` from ``mode``."""
        tabs = self.design.tables
        m = len(tabs)
        a, b = mode
        while a < m - b and s >= tabs[a].bounds(n)[1]:
            a += 1
        while b < m - a and s <= tabs[m - 1 - b].bounds(n)[0]:
            b += 1
        k = self.design.dec[a, b]
        return (None if k < 0 else self.bset[k]), (a, b)

    def mode_interval(self, mode: tuple[int, int]):
        return mode_interval(self.design.thresholds, *mode)

    def _sweep(self, N, p, urn, structural, trim, record):
        N = int(N)
        if N > self.horizon_cap:
            N = self.horizon_cap
        L, U = self._bounds(N)
        out = sweep_kernel(
            L, U, self.design.dec, len(self.bset), N, window_width(L, U), float(p), urn, structural, float(trim), record
        )
        return _Sweep(*out)


@dataclass
class EffortResult:
    """Stopping-time summary at one ``p``.

    Attributes:
        p: Exceedance probability.
        expected_effort: Expected number of samples. When mass is left at the
            horizon it is counted as stopping there, so the value is a lower
            estimate.
        decision_probs: Probability of reporting each bucket.
        residual_mass: Probability of not having stopped by the horizon.
        horizon: Last sample count explored.
    """

    p: float
    expected_effort: float
    decision_probs: dict[Bucket, float]
    residual_mass: float
    horizon: int
    dropped_mass: float = 0.0

    @property
    def truncated(self) -> bool:
        return self.residual_mass > 0.0

    def total_mass(self) -> float:
        return sum(self.decision_probs.values()) + self.residual_mass + self.dropped_mass


def effort_and_probs(
    p: float,
    predicate: StoppingPredicate,
    horizon: int | None = None,
    trim: float = 0.0,
) -> EffortResult:
    """Exact effort and decision probabilities at ``p`` by a forward pass.

    Args:
        p: Exceedance probability in [0, 1].
        predicate: Stopping rule.
        horizon: Last sample count; defaults to the rule's closure time.
        trim: Alive states with probability below ``trim`` are dropped and
            reported in ``dropped_mass``. Zero keeps the pass exact.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    H = predicate.default_horizon() if horizon is None else int(horizon)
    if H < 1:
        raise ValueError("horizon must be at least 1")
    out = predicate._sweep(H, p, False, False, trim, False)
    probs = {b: float(out.probs[i]) for i, b in enumerate(predicate.bset)}
    return EffortResult(
        float(p),
        float(out.effort + H * out.remain),
        probs,
        float(out.remain),
        H,
        float(out.dropped),
    )


# --- exit tables ----------------------------------------------------------


CHUNK = 32
# records whose binomial weight is below exp(-SKIP_EXPONENT) are skipped
SKIP_EXPONENT = 60.0


@numba.njit(cache=True)
def _kl(x, p):
    r = 0.0
    if x > 0.0:
        r += x * math.log(x / p)
    if x < 1.0:
        r += (1.0 - x) * math.log((1.0 - x) / (1.0 - p))
    return r


@numba.njit(cache=True)
def _weighted_sums(rn, rs, ru, logc, rk, c_nmin, c_xmin, c_xmax, ps, out_eff, out_prob):
    # weight of record i at p is C(n,s) p^s (1-p)^(n-s) <= exp(-n KL(s/n, p))
    nc = c_nmin.shape[0]
    for j in range(ps.shape[0]):
        p = ps[j]
        lp = math.log(p) if p > 0.0 else -np.inf
        lq = math.log1p(-p) if p < 1.0 else -np.inf
        e = 0.0
        for c in range(nc):
            if 0.0 < p < 1.0:
                x = min(max(p, c_xmin[c]), c_xmax[c])
                if c_nmin[c] * _kl(x, p) > SKIP_EXPONENT:
                    continue
            i1 = min((c + 1) * CHUNK, rn.shape[0])
            for i in range(c * CHUNK, i1):
                s = rs[i]
                f = rn[i] - s
                if s > 0 and p == 0.0:
                    continue
                if f > 0 and p == 1.0:
                    continue
                x = logc[i]
                if s > 0:
                    x += s * lp
                if f > 0:
                    x += f * lq
                if x < -745.0:
                    continue
                w = ru[i] * math.exp(x)
                e += rn[i] * w
                out_prob[j, rk[i]] += w
        out_eff[j] = e


@dataclass(eq=False)
class ExitTable:
    """Stopping states with the fraction of paths that stop there.

    Attributes:
        bset: Bucket set of the rule.
        n, s, k: Stopping sample count, exceedance count and bucket index.
        u: Fraction of the ``C(n, s)`` paths to ``(n, s)`` stopping there
            with bucket ``k``.
        horizon: Last sample count of the pass.
        alive_s, alive_u: States still alive at the horizon.
    """

    bset: BucketSet
    n: np.ndarray
    s: np.ndarray
    k: np.ndarray
    u: np.ndarray
    horizon: int
    alive_s: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    alive_u: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        order = np.lexsort((self.s, self.n))
        for name in ("n", "s", "k", "u"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name)[order]))

    def __len__(self) -> int:
        return len(self.n)

    @cached_property
    def _chunks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        nc = -(-len(self.n) // CHUNK)
        pad = nc * CHUNK - len(self.n)
        n = np.concatenate([self.n, np.full(pad, self.n[-1] if len(self.n) else 1)]).reshape(nc, CHUNK)
        x = self.s / np.maximum(self.n, 1)
        x = np.concatenate([x, np.full(pad, x[-1] if len(x) else 0.0)]).reshape(nc, CHUNK)
        return n.min(axis=1).astype(float), x.min(axis=1), x.max(axis=1)

    @cached_property
    def log_binom(self) -> np.ndarray:
        n, s = self.n.astype(float), self.s.astype(float)
        return special.gammaln(n + 1) - special.gammaln(s + 1) - special.gammaln(n - s + 1)

    def _alive_weights(self, p: float) -> float:
        if len(self.alive_s) == 0:
            return 0.0
        H = float(self.horizon)
        s = self.alive_s.astype(float)
        logc = special.gammaln(H + 1) - special.gammaln(s + 1) - special.gammaln(H - s + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = logc + special.xlogy(s, p) + special.xlog1py(H - s, -p)
        return float(np.sum(self.alive_u * np.exp(x)))

    def evaluate(self, ps) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Effort, per-bucket probabilities and residual mass at each ``p``."""
        ps = np.atleast_1d(np.asarray(ps, dtype=float))
        eff = np.zeros(len(ps))
        prob = np.zeros((len(ps), len(self.bset)))
        _weighted_sums(self.n, self.s, self.u, self.log_binom, self.k, *self._chunks, ps, eff, prob)
        resid = np.array([self._alive_weights(p) for p in ps])
        eff += self.horizon * resid
        return eff, prob, resid

    def effort(self, ps) -> np.ndarray:
        return self.evaluate(ps)[0]

    def result(self, p: float) -> EffortResult:
        eff, prob, resid = self.evaluate([p])
        probs = {b: float(prob[0, i]) for i, b in enumerate(self.bset)}
        return EffortResult(float(p), float(eff[0]), probs, float(resid[0]), self.horizon)

    def integrate(self, density) -> tuple[float, float]:
        """Exact integral of effort and of total stopping mass against a density.

        Uses ``∫ f(p) C(n, s) p^s (1-p)^(n-s) dp`` in closed form per state,
        see :meth:`DensitySpec.binomial_weights`.
        """
        w = density.binomial_weights(self.n, self.s)
        mass = float(np.sum(self.u * w))
        eff = float(np.sum(self.u * w * self.n))
        if len(self.alive_s):
            wa = density.binomial_weights(np.full(len(self.alive_s), self.horizon), self.alive_s)
            r = float(np.sum(self.alive_u * wa))
            eff += self.horizon * r
        return eff, mass


def decision_probs_by_rating(result: EffortResult, bset: BucketSet) -> Mapping[str, float]:
    """Aggregate decision probabilities by rating code string."""
    out: dict[str, float] = {}
    for b, pr in result.decision_probs.items():
        code = str(star_rating(bset, b))
        out[code] = out.get(code, 0.0) + pr
    return out


def make_predicate(method: str, bset: BucketSet, eps: float, spending_k: float = 1000.0, horizon_cap: int = DEFAULT_HORIZON_CAP) -> StoppingPredicate:
    """Predicate for ``method`` with overall risk ``eps``.

    Simctest uses ``rho = eps / 2`` per threshold side.
    """
    if method == "rl":
        return RLPredicate(bset, eps, horizon_cap=horizon_cap)
    if method == "simctest":
        return SimctestPredicate(bset, spending=SpendingSequence(eps / 2, spending_k), horizon_cap=horizon_cap)
    raise InvalidConfig(f"unknown method {method!r}")
