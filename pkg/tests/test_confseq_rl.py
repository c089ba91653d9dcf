import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import rl_endpoints, rl_fits
from scipy import special, stats

from mcbuckets.buckets import NAMED_SETS, Bucket, Interval
from mcbuckets.confseq_rl import (
    MAX_COUNT,
    RLState,
    rl_contained,
    rl_interval,
    rl_length_bound,
    rl_select,
    rl_stop_bound,
    rl_update,
)
from mcbuckets.errors import OverflowGuard

JSTAR = NAMED_SETS["Jstar"]


# --- state updates -------------------------------------------------------


def test_update_adds_counts():
    s = rl_update(RLState(0, 0, 1e-3), 3, 10)
    assert (s.n, s.S) == (10, 3)
    assert rl_update(s, 0, 0) == s


@pytest.mark.parametrize("k, batch", [(5, 4), (-1, 3), (0, -1)])
def test_update_rejects_invalid_batch(k, batch):
    with pytest.raises(ValueError):
        rl_update(RLState(10, 3, 1e-3), k, batch)


def test_update_overflow_guard():
    with pytest.raises(OverflowGuard):
        rl_update(RLState(MAX_COUNT, 0, 1e-3), 0, 1)


def test_state_invariants():
    with pytest.raises(ValueError):
        RLState(3, 4, 0.1)
    with pytest.raises(ValueError):
        RLState(3, 1, 1.5)


# --- interval ------------------------------------------------------------


def test_interval_first_sample():
    iv = rl_interval(RLState(1, 0, 1e-3))
    assert (iv.lo, iv.lo_closed, iv.hi_closed) == (0.0, True, False)
    assert iv.hi == pytest.approx(0.9995, abs=1e-15)
    iv = rl_interval(RLState(1, 1, 1e-3))
    assert (iv.hi, iv.hi_closed, iv.lo_closed) == (1.0, True, False)
    assert iv.lo == pytest.approx(0.0005, abs=1e-15)


def test_interval_before_sampling_is_everything():
    assert rl_interval(RLState(0, 0, 0.1)) == Interval(0.0, 1.0, True, True)


def test_interval_roots_solve_the_defining_equation():
    n, S, eps = 100, 50, 0.01
    iv = rl_interval(RLState(n, S, eps))
    for r in (iv.lo, iv.hi):
        assert abs((n + 1) * stats.binom.pmf(S, n, r) - eps) < 1e-10
    assert not iv.lo_closed and not iv.hi_closed


@pytest.mark.parametrize("n, S, eps", [(100, 50, 0.01), (20, 3, 0.1), (5000, 7, 1e-3), (10**6, 900, 1e-3), (7, 7, 0.05)])
def test_interval_against_high_precision_roots(n, S, eps):
    iv = rl_interval(RLState(n, S, eps))
    lo, hi = rl_endpoints(n, S, eps)
    assert abs(iv.lo - float(lo)) < 1e-12
    assert abs(iv.hi - float(hi)) < 1e-12


def test_interval_length_bound_values():
    assert rl_length_bound(1, 0.5) == pytest.approx(math.sqrt(2 * math.log(4)))
    assert rl_length_bound(10_000, 1e-3) == pytest.approx(0.0568, abs=5e-5)
    with pytest.raises(ValueError):
        rl_length_bound(0, 0.1)


def test_length_bound_holds_on_grid():
    rng = np.random.default_rng(1)
    for n in np.unique(np.geomspace(10, 10**4, 25).astype(int)):
        for S in np.unique(np.linspace(0, n, 12).astype(int)):
            eps = float(rng.choice([1e-4, 1e-3, 0.01, 0.1]))
            assert rl_interval(RLState(int(n), int(S), eps)).length <= rl_length_bound(int(n), eps)


# --- containment ---------------------------------------------------------


def test_first_sample_fits_no_jstar_bucket():
    state = RLState(1, 0, 1e-3)
    assert not any(rl_contained(state, b) for b in JSTAR)
    assert rl_select(state, JSTAR) is None


def test_zero_run_fits_smallest_bucket_from_derived_n():
    # first n with (n+1)(1 - 1e-3)^n <= 1e-3, found by direct scan
    eps, t = 1e-3, 1e-3
    first = next(n for n in range(1, 10**6) if math.log(n + 1) + n * math.log1p(-t) <= math.log(eps))
    assert first == 16618
    bucket = Bucket(0.0, t, True, True)
    assert not rl_contained(RLState(10_000, 0, eps), bucket)
    assert not rl_contained(RLState(first - 1, 0, eps), bucket)
    assert rl_contained(RLState(first, 0, eps), bucket)


def test_closure_flags_at_zero_and_one():
    zero = RLState(50, 0, 0.1)
    assert not rl_contained(zero, Bucket(0.0, 0.5, False, True))
    assert rl_contained(zero, Bucket(0.0, 0.5, True, True))
    one = RLState(50, 50, 0.1)
    assert not rl_contained(one, Bucket(0.5, 1.0, True, False))
    assert rl_contained(one, Bucket(0.5, 1.0, True, True))


def _random_case(rng):
    n = int(rng.choice([1, 2, 5, 10, 50, 200, 1000, 10**4, 10**5]))
    S = int(rng.integers(0, n + 1)) if rng.random() < 0.8 else int(rng.choice([0, n]))
    eps = float(rng.choice([1e-4, 1e-3, 0.01, 0.1, 0.5]))
    lo, hi = np.sort(rng.uniform(0, 1, 2) ** rng.choice([1, 3]))
    if rng.random() < 0.2:
        lo = 0.0
    if rng.random() < 0.2:
        hi = 1.0
    bucket = Bucket(float(lo), float(hi), bool(rng.random() < 0.5) or lo == 0.0, bool(rng.random() < 0.5) or hi == 1.0)
    return RLState(n, S, eps), bucket


def test_containment_matches_interval_on_random_grid():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(1000):
        state, bucket = _random_case(rng)
        iv = rl_interval(state)
        # skip cases decided by the last few ulps of the root finder
        if any(0 < abs(a - c) < 1e-11 for a, c in ((iv.lo, bucket.lo), (iv.hi, bucket.hi))):
            continue
        assert rl_contained(state, bucket) == iv.issubset(bucket), (state, bucket, iv)
        checked += 1
    assert checked > 990


def test_containment_matches_high_precision_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        state, bucket = _random_case(rng)
        assert rl_contained(state, bucket) == rl_fits(state.n, state.S, state.eps, bucket)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10**6), frac=st.floats(0, 1), eps=st.floats(1e-6, 0.9))
def test_length_bound_property(n, frac, eps):
    S = int(frac * n)
    assert rl_interval(RLState(n, S, eps)).length <= rl_length_bound(n, eps)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 10**5), frac=st.floats(0, 1), eps=st.floats(1e-4, 0.5))
def test_interval_contains_estimate_and_selected_bucket_holds_it(n, frac, eps):
    S = int(frac * n)
    state = RLState(n, S, eps)
    iv = rl_interval(state)
    assert S / n in iv or S / n in (iv.lo, iv.hi)
    k = rl_select(state, JSTAR)
    if k is not None:
        assert iv.lo >= JSTAR[k].lo - 1e-12 and iv.hi <= JSTAR[k].hi + 1e-12


# --- coverage and stopping -----------------------------------------------


def _ever_excluded(p, eps, n_runs, n_max, seed):
    rng = np.random.default_rng(seed)
    n = np.arange(1, n_max + 1)
    missed = 0
    for start in range(0, n_runs, 500):
        m = min(500, n_runs - start)
        S = np.cumsum(rng.random((m, n_max)) < p, axis=1)
        logv = (
            np.log(n + 1)
            + special.gammaln(n + 1)
            - special.gammaln(S + 1)
            - special.gammaln(n - S + 1)
            + special.xlogy(S, p)
            + special.xlog1py(n - S, -p)
        )
        missed += int(np.sum(np.any(logv <= math.log(eps), axis=1)))
    return missed / n_runs


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.01, 0.3])
def test_anytime_coverage(p):
    eps, runs = 0.01, 10_000
    rate = _ever_excluded(p, eps, runs, 5000, seed=11)
    assert rate <= eps + 3 * math.sqrt(eps * (1 - eps) / runs)


def test_stop_bound():
    assert rl_stop_bound(NAMED_SETS["J0"], 1e-3) is None
    assert rl_stop_bound(NAMED_SETS["single"], 1e-3) == 1
    n = rl_stop_bound(JSTAR, 1e-3)
    assert rl_length_bound(n, 1e-3) < 5e-4 <= rl_length_bound(n - 1, 1e-3)
